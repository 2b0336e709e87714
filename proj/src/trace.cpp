#include "loop/trace.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace loop {

std::vector<Trajectory> RunTrace::trajectories() const {
    std::vector<Trajectory> out;
    out.reserve(steps.size());
    for (const auto& st : steps) out.push_back({st.s, st.a, st.r, st.s_next});
    return out;
}

double regret_at(const RunTrace& trace, std::size_t t) {
    if (t == 0) return 0.0;
    if (t > trace.steps.size()) throw IndexOutOfRange("regret_at: t beyond the trace");
    return trace.steps[t - 1].cum_regret;
}

std::string format_double(double x) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

namespace {

const char* kHeader = "t,s,a,r,j_selected,switch_flag,tau,upsilon,loss_gap,cum_regret,f_index";

std::string index_text(std::size_t i) { return i == kNoIndex ? std::string("-1") : std::to_string(i); }

std::size_t parse_index(const std::string& text) {
    if (text == "-1") return kNoIndex;
    return static_cast<std::size_t>(std::stoull(text));
}

} // namespace

void write_trace_csv(const RunTrace& trace, std::ostream& out) {
    out << kHeader;
    if (trace.has_g_index) out << ",g_index";
    out << ",s_next\n";
    for (const auto& st : trace.steps) {
        out << st.t << ',' << st.s << ',' << st.a << ',' << format_double(st.r) << ','
            << format_double(st.j_selected) << ',' << (st.switched ? 1 : 0) << ',' << st.tau << ','
            << format_double(st.upsilon) << ',' << format_double(st.loss_gap) << ','
            << format_double(st.cum_regret) << ',' << index_text(st.f_index);
        if (trace.has_g_index) out << ',' << index_text(st.g_index);
        out << ',' << st.s_next << '\n';
    }
}

void write_trace_csv(const RunTrace& trace, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write trace " + path);
    write_trace_csv(trace, out);
}

RunTrace read_trace_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open trace " + path);
    std::string line;
    if (!std::getline(in, line) || line.rfind(kHeader, 0) != 0)
        throw ValidationError("trace " + path + " has an unexpected header");
    RunTrace trace;
    trace.has_g_index = line.find("g_index") != std::string::npos;
    std::vector<std::string> cells;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        cells.clear();
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        const std::size_t expected = trace.has_g_index ? 13 : 12;
        if (cells.size() != expected) throw ValidationError("malformed trace row: " + line);
        StepRecord st;
        st.t = std::stoull(cells[0]);
        st.s = std::stoull(cells[1]);
        st.a = std::stoull(cells[2]);
        st.r = std::stod(cells[3]);
        st.j_selected = std::stod(cells[4]);
        st.switched = cells[5] == "1";
        st.tau = std::stoull(cells[6]);
        st.upsilon = std::stod(cells[7]);
        st.loss_gap = std::stod(cells[8]);
        st.cum_regret = std::stod(cells[9]);
        st.f_index = parse_index(cells[10]);
        std::size_t next = 11;
        if (trace.has_g_index) st.g_index = parse_index(cells[next++]);
        st.s_next = std::stoull(cells[next]);
        trace.switches += st.switched ? 1 : 0;
        trace.steps.push_back(st);
    }
    return trace;
}

} // namespace loop
