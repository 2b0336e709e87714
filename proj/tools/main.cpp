// loopamdp command line: experiments, planning and complexity calculators.

#include "loop/harness.hpp"

#include "CLI11.hpp"

#include <glob.h>

#include <fstream>
#include <iostream>

using namespace loop;

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kRuntime = 2;

nlohmann::json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(path + " is not valid JSON: " + e.what());
    }
}

void emit(const nlohmann::json& doc, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << doc.dump(2) << '\n';
        return;
    }
    std::ofstream out(out_path);
    if (!out) throw Error("cannot write " + out_path);
    out << doc.dump(2) << '\n';
}

std::vector<Vector> read_vectors(const std::string& path) {
    const auto doc = read_json(path);
    std::vector<Vector> out;
    try {
        for (const auto& row : doc) {
            const auto xs = row.get<std::vector<double>>();
            out.push_back(Eigen::Map<const Vector>(xs.data(), static_cast<Eigen::Index>(xs.size())));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(path + ": expected an array of numeric arrays: " + e.what());
    }
    return out;
}

int code_for_seeds(const MetricsSummary& m) {
    if (m.n_ok == m.seeds.size()) return kOk;
    for (const auto& s : m.seeds)
        if (!s.ok) std::cerr << m.name << " seed " << s.seed << " failed (" << s.error_kind << "): " << s.error << '\n';
    if (m.n_ok > 0) return kOk;
    return m.seeds.front().error_kind == "validation" ? kValidation : kRuntime;
}

void print_summary(const MetricsSummary& m) {
    std::cout << m.name << ": agent=" << m.agent << " T=" << m.horizon << " seeds=" << m.n_ok << "/"
              << m.seeds.size() << " final_regret=" << m.final_regret.mean << " slope=" << m.mean_curve_slope.slope
              << " switches=" << m.switches.mean << " violations=" << m.optimism_violations.mean << '\n';
}

int run_one(const std::string& path) {
    const auto cfg = load_config(path);
    const auto m = run_experiment(cfg);
    print_summary(m);
    return code_for_seeds(m);
}

std::vector<std::string> expand_glob(const std::string& pattern) {
    glob_t g{};
    const int rc = ::glob(pattern.c_str(), 0, nullptr, &g);
    std::vector<std::string> out;
    if (rc == 0)
        for (std::size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
    globfree(&g);
    if (rc == GLOB_NOMATCH || out.empty()) throw ConfigError("no config matches " + pattern);
    if (rc != 0) throw Error("glob failed for " + pattern);
    return out;
}

// One failing config does not stop the sweep; the worst exit code wins.
int sweep(const std::string& pattern) {
    int code = kOk;
    for (const auto& path : expand_glob(pattern)) {
        try {
            code = std::max(code, run_one(path));
        } catch (const ValidationError& e) {
            std::cerr << path << ": " << e.what() << '\n';
            code = std::max(code, kValidation);
        } catch (const std::exception& e) {
            std::cerr << path << ": " << e.what() << '\n';
            code = kRuntime;
        }
    }
    return code;
}

nlohmann::json evi_json(const std::string& path, double eps, long max_iters) {
    ExperimentConfig cfg;
    cfg.instance_file = path;
    const auto env = build_environment(cfg);
    const auto sol = evi_solve(env.model, eps, max_iters);
    std::vector<std::vector<double>> q(sol.q_star.rows());
    for (Eigen::Index s = 0; s < sol.q_star.rows(); ++s)
        q[s].assign(sol.q_star.row(s).data(), sol.q_star.row(s).data() + sol.q_star.cols());
    return {{"j_star", sol.j_star},
            {"span", sol.span},
            {"iterations", sol.iterations},
            {"residual", sol.residual},
            {"v_star", std::vector<double>(sol.v_star.data(), sol.v_star.data() + sol.v_star.size())},
            {"q_star", q},
            {"policy", greedy_policy(sol.q_star)}};
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Average-reward LOOP / MLE-LOOP simulator"};
    app.require_subcommand(1);

    std::string config_path;
    auto* run_cmd = app.add_subcommand("run", "Run one experiment config");
    run_cmd->add_option("config", config_path, "Config file")->required();

    std::string pattern;
    auto* sweep_cmd = app.add_subcommand("sweep", "Run every config matching a glob");
    sweep_cmd->add_option("pattern", pattern, "Glob, e.g. 'configs/*.cfg'")->required();

    std::string instance_path, out_path;
    double evi_eps = 1e-8;
    long evi_iters = 1'000'000;
    auto* evi_cmd = app.add_subcommand("evi", "Solve an instance JSON with extended value iteration");
    evi_cmd->add_option("instance", instance_path, "Instance JSON")->required();
    evi_cmd->add_option("--eps", evi_eps, "Span stopping tolerance");
    evi_cmd->add_option("--max-iters", evi_iters, "Iteration cap");
    evi_cmd->add_option("-o,--out", out_path, "Write JSON here instead of stdout");

    auto* cx = app.add_subcommand("complexity", "Dimension calculators and AGEC audit");
    cx->require_subcommand(1);
    double eps = 0.1;
    std::size_t max_nodes = 5'000'000;
    std::string class_path, measures_path, trace_path, mode_name;

    auto* eluder_cmd = cx->add_subcommand("eluder", "Eluder dimension of an evaluated class");
    eluder_cmd->add_option("class", class_path, "Evaluated class JSON {\"table\": [[...]]}")->required();
    auto* de_cmd = cx->add_subcommand("de", "Distributional eluder dimension");
    de_cmd->add_option("class", class_path, "Evaluated class JSON")->required();
    de_cmd->add_option("measures", measures_path, "JSON array of measures over the points")->required();
    auto* abe_cmd = cx->add_subcommand("abe", "ABE dimension of the class an experiment config builds");
    abe_cmd->add_option("config", config_path, "Experiment config")->required();
    auto* eff_cmd = cx->add_subcommand("effective", "Effective dimension of a vector set");
    eff_cmd->add_option("vectors", measures_path, "JSON array of feature vectors")->required();
    auto* audit_cmd = cx->add_subcommand("audit", "AGEC audit of a trace produced by a config");
    audit_cmd->add_option("config", config_path, "Experiment config the trace came from")->required();
    audit_cmd->add_option("trace", trace_path, "Trace CSV")->required();
    audit_cmd->add_option("--mode", mode_name, "l2-squared or l1-sqrt (default: from the discrepancy)");
    for (auto* sub : {eluder_cmd, de_cmd, abe_cmd, eff_cmd}) sub->add_option("--eps", eps, "Scale eps > 0");
    for (auto* sub : {eluder_cmd, de_cmd, abe_cmd}) sub->add_option("--max-nodes", max_nodes, "Search budget");
    for (auto* sub : {eluder_cmd, de_cmd, abe_cmd, eff_cmd, audit_cmd})
        sub->add_option("-o,--out", out_path, "Write JSON here instead of stdout");

    std::string report_dir;
    auto* report_cmd = app.add_subcommand("report", "Aggregate summaries in a directory");
    report_cmd->add_option("dir", report_dir, "Output directory of one or more runs")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kValidation;
    }

    try {
        if (*run_cmd) return run_one(config_path);
        if (*sweep_cmd) return sweep(pattern);
        if (*evi_cmd) {
            emit(evi_json(instance_path, evi_eps, evi_iters), out_path);
            return kOk;
        }
        if (*report_cmd) {
            std::cout << report(report_dir);
            return kOk;
        }
        const SearchOptions opts{max_nodes, false};
        if (*eluder_cmd) {
            emit(to_json(eluder_dim(evaluated_class_from_json(read_json(class_path)), eps, opts)), out_path);
        } else if (*de_cmd) {
            emit(to_json(de_dim(evaluated_class_from_json(read_json(class_path)), read_vectors(measures_path), eps,
                                opts)),
                 out_path);
        } else if (*abe_cmd) {
            const auto cfg = load_config(config_path);
            const auto env = build_environment(cfg);
            emit(to_json(abe_dim(env.model, build_class(cfg, env), eps, opts)), out_path);
        } else if (*eff_cmd) {
            emit(to_json(effective_dim(read_vectors(measures_path), eps)), out_path);
        } else if (*audit_cmd) {
            const auto cfg = load_config(config_path);
            const auto env = build_environment(cfg);
            const auto cls = build_class(cfg, env);
            const NormMode mode = !mode_name.empty() ? parse_norm_mode(mode_name)
                                  : cls.discrepancy == DiscrepancyKind::Mle ? NormMode::L1Sqrt
                                                                            : NormMode::L2Squared;
            emit(to_json(audit_agec(read_trace_csv(trace_path), env.model, cls, mode)), out_path);
        }
        return kOk;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntime;
    }
}
