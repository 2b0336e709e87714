#include "loop/harness.hpp"

#include "loop/lattice.hpp"
#include "loop/mle_loop.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <thread>

namespace loop {

namespace fs = std::filesystem;

namespace {

Eigen::Index ix(std::size_t i) { return static_cast<Eigen::Index>(i); }

// Neumaier summation; traces reach 2^17 steps and the decomposition is
// checked to 1e-9.
struct CompensatedSum {
    double sum = 0.0;
    double comp = 0.0;
    void add(double x) {
        const double t = sum + x;
        if (std::abs(sum) >= std::abs(x))
            comp += (sum - t) + x;
        else
            comp += (x - t) + sum;
        sum = t;
    }
    double value() const { return sum + comp; }
};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_number(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double x = std::stod(value, &used);
        if (used != value.size() || !std::isfinite(x)) throw std::invalid_argument("trailing text");
        return x;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected a number, got '" + value + "'");
    }
}

std::uint64_t parse_count(const std::string& key, const std::string& value) {
    if (value.empty() || value.find_first_not_of("0123456789") != std::string::npos)
        throw ConfigError(key + ": expected a nonnegative integer, got '" + value + "'");
    try {
        return std::stoull(value);
    } catch (const std::exception&) {
        throw ConfigError(key + ": integer out of range: '" + value + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw ConfigError(key + ": expected true or false, got '" + value + "'");
}

std::vector<std::uint64_t> parse_seeds(const std::string& key, const std::string& value) {
    std::vector<std::uint64_t> out;
    std::stringstream ss(value);
    std::string part;
    while (std::getline(ss, part, ',')) {
        part = trim(part);
        const auto dash = part.find('-');
        if (dash == std::string::npos) {
            out.push_back(parse_count(key, part));
            continue;
        }
        const auto lo = parse_count(key, trim(part.substr(0, dash)));
        const auto hi = parse_count(key, trim(part.substr(dash + 1)));
        if (hi < lo) throw ConfigError(key + ": empty seed range '" + part + "'");
        if (hi - lo > 100'000) throw ConfigError(key + ": seed range too long");
        for (auto s = lo; s <= hi; ++s) out.push_back(s);
    }
    if (out.empty()) throw ConfigError(key + ": no seeds given");
    return out;
}

std::string resolve(const std::string& base, const std::string& path) {
    if (path.empty() || fs::path(path).is_absolute()) return path;
    return (fs::path(base) / path).lexically_normal().string();
}

template <class Fn>
auto rethrow_as_config(const std::string& key, Fn&& fn) {
    try {
        return fn();
    } catch (const ValidationError& e) {
        throw ConfigError(key + ": " + e.what());
    }
}

std::vector<std::size_t> power_checkpoints(std::size_t T) {
    std::vector<std::size_t> out;
    for (std::size_t t = 1; t <= T; t *= 2) out.push_back(t);
    if (out.back() != T) out.push_back(T);
    return out;
}

std::string seed_file(const ExperimentConfig& cfg, std::uint64_t seed) {
    return cfg.name + ".seed" + std::to_string(seed) + ".csv";
}

nlohmann::json pairs_json(const std::vector<std::pair<std::size_t, double>>& xs) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& [t, v] : xs) out.push_back({t, v});
    return out;
}

std::vector<std::pair<std::size_t, double>> pairs_from_json(const nlohmann::json& j) {
    std::vector<std::pair<std::size_t, double>> out;
    for (const auto& p : j) out.emplace_back(p.at(0).get<std::size_t>(), p.at(1).get<double>());
    return out;
}

nlohmann::json mean_sd_json(const MeanSd& m) { return {{"mean", m.mean}, {"sd", m.sd}}; }
MeanSd mean_sd_from_json(const nlohmann::json& j) { return {j.at("mean").get<double>(), j.at("sd").get<double>()}; }

nlohmann::json slope_json(const SlopeFit& s) {
    return {{"slope", s.slope}, {"intercept", s.intercept}, {"points", s.points},
            {"excluded", s.excluded}, {"t_lo", s.t_lo}, {"t_hi", s.t_hi}};
}

SlopeFit slope_from_json(const nlohmann::json& j) {
    SlopeFit s;
    s.slope = j.at("slope").get<double>();
    s.intercept = j.at("intercept").get<double>();
    s.points = j.at("points").get<std::size_t>();
    s.excluded = j.at("excluded").get<std::size_t>();
    s.t_lo = j.at("t_lo").get<std::size_t>();
    s.t_hi = j.at("t_hi").get<std::size_t>();
    return s;
}

struct SeedResult {
    SeedSummary summary;
    std::vector<double> cum;
};

} // namespace

// ---- config ------------------------------------------------------------

std::string to_string(AgentKind kind) {
    switch (kind) {
    case AgentKind::Loop: return "loop";
    case AgentKind::MleLoop: return "mle-loop";
    case AgentKind::Oracle: return "oracle";
    case AgentKind::Random: return "random";
    }
    return "?";
}

AgentKind parse_agent_kind(const std::string& text) {
    if (text == "loop") return AgentKind::Loop;
    if (text == "mle-loop") return AgentKind::MleLoop;
    if (text == "oracle") return AgentKind::Oracle;
    if (text == "random") return AgentKind::Random;
    throw ValidationError("unknown agent '" + text + "' (expected loop, mle-loop, oracle or random)");
}

void ExperimentConfig::validate() const {
    if (seeds.empty()) throw ConfigError("run.seeds: at least one seed is required");
    if (agent_config.horizon < 256) throw ConfigError("run.T: horizon must be at least 256");
    if (!(cls.rho > 0.0)) throw ConfigError("class.rho: must be positive");
    if (cls.bound && !(*cls.bound > 0.0)) throw ConfigError("class.bound: must be positive");
    if (!(slope_window > 0.0 && slope_window <= 1.0)) throw ConfigError("run.slope_window: must lie in (0, 1]");
    if (name.empty() || name.find('/') != std::string::npos) throw ConfigError("run.name: must be a plain file stem");
    if (audit && (agent == AgentKind::Oracle || agent == AgentKind::Random))
        throw ConfigError("run.audit: baselines carry no hypotheses to audit");
    rethrow_as_config("agent", [&] {
        agent_config.validate();
        return 0;
    });
    if (instance_file.empty()) rethrow_as_config("instance", [&] {
        instance.validate();
        return 0;
    });
}

ExperimentConfig parse_config(const std::string& text, const std::string& base_dir) {
    ExperimentConfig cfg;
    std::set<std::string> seen;
    std::stringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!seen.insert(key).second) throw ConfigError("line " + std::to_string(lineno) + ": repeated key " + key);

        if (key == "run.name") cfg.name = value;
        else if (key == "run.T") cfg.agent_config.horizon = parse_count(key, value);
        else if (key == "run.seeds") cfg.seeds = parse_seeds(key, value);
        else if (key == "run.output_dir") cfg.output_dir = value;
        else if (key == "run.threads") cfg.threads = parse_count(key, value);
        else if (key == "run.audit") cfg.audit = parse_bool(key, value);
        else if (key == "run.slope_window") cfg.slope_window = parse_number(key, value);
        else if (key == "instance.kind") cfg.instance.kind = rethrow_as_config(key, [&] { return parse_instance_kind(value); });
        else if (key == "instance.file") cfg.instance_file = resolve(base_dir, value);
        else if (key == "instance.states") cfg.instance.n_states = parse_count(key, value);
        else if (key == "instance.actions") cfg.instance.n_actions = parse_count(key, value);
        else if (key == "instance.dim") cfg.instance.feature_dim = parse_count(key, value);
        else if (key == "instance.seed") cfg.instance.seed = parse_count(key, value);
        else if (key == "instance.reward_min") cfg.instance.reward_min = parse_number(key, value);
        else if (key == "instance.reward_max") cfg.instance.reward_max = parse_number(key, value);
        else if (key == "instance.mixing_floor") cfg.instance.mixing_floor = parse_number(key, value);
        else if (key == "agent.name") cfg.agent = rethrow_as_config(key, [&] { return parse_agent_kind(value); });
        else if (key == "agent.c_beta") cfg.agent_config.c_beta = parse_number(key, value);
        else if (key == "agent.beta") {
            if (value == "auto") cfg.agent_config.beta.reset();
            else cfg.agent_config.beta = parse_number(key, value);
        }
        else if (key == "agent.delta") cfg.agent_config.delta = parse_number(key, value);
        else if (key == "agent.initial_state") cfg.agent_config.initial_state = parse_count(key, value);
        else if (key == "class.kind") cfg.cls.kind = rethrow_as_config(key, [&] { return parse_class_kind(value); });
        else if (key == "class.discrepancy")
            cfg.cls.discrepancy = rethrow_as_config(key, [&] { return parse_discrepancy_kind(value); });
        else if (key == "class.rho") cfg.cls.rho = parse_number(key, value);
        else if (key == "class.bound") {
            if (value == "auto") cfg.cls.bound.reset();
            else cfg.cls.bound = parse_number(key, value);
        }
        else if (key == "class.anchor") {
            if (value != "truth" && value != "corner") throw ConfigError(key + ": expected truth or corner");
            cfg.cls.anchor_truth = value == "truth";
        }
        else if (key == "class.file") cfg.cls.file = resolve(base_dir, value);
        else if (key == "class.max_members") cfg.cls.max_members = parse_count(key, value);
        else throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    auto cfg = parse_config(ss.str(), fs::path(path).parent_path().string());
    return cfg;
}

// ---- environment and class ------------------------------------------------

ExperimentEnvironment build_environment(const ExperimentConfig& config) {
    std::optional<TabularAMDP> model;
    std::optional<LinearAmdpFeatures> linear;
    std::shared_ptr<const LinearMixtureFeatures> mixture;
    std::optional<Vector> theta;
    if (!config.instance_file.empty()) {
        std::ifstream in(config.instance_file);
        if (!in) throw ValidationError("cannot open instance " + config.instance_file);
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError("instance " + config.instance_file + " is not valid JSON: " + e.what());
        }
        const std::string kind = doc.contains("features") ? doc["features"].value("kind", "") : "";
        if (kind == "linear-amdp") {
            auto inst = linear_amdp_from_json(doc);
            model.emplace(inst.model);
            linear = inst.features;
        } else if (kind == "linear-mixture") {
            auto inst = linear_mixture_from_json(doc);
            model.emplace(inst.model);
            mixture = inst.features;
            theta = inst.theta;
        } else {
            model.emplace(amdp_from_json(doc));
        }
    } else {
        switch (config.instance.kind) {
        case InstanceKind::LinearAmdp: {
            auto inst = linear_amdp_instance(config.instance);
            model.emplace(inst.model);
            linear = inst.features;
            break;
        }
        case InstanceKind::LinearMixture: {
            auto inst = linear_mixture_instance(config.instance);
            model.emplace(inst.model);
            mixture = inst.features;
            theta = inst.theta;
            break;
        }
        default: model.emplace(generate_instance(config.instance));
        }
    }
    auto sol = evi_solve(*model);
    return {std::move(*model), std::move(sol), std::move(linear), std::move(mixture), std::move(theta)};
}

HypothesisClass build_class(const ExperimentConfig& config, const ExperimentEnvironment& env) {
    const auto& cs = config.cls;
    ClassKind kind = ClassKind::TabularLattice;
    if (cs.kind) kind = *cs.kind;
    else if (!cs.file.empty()) kind = ClassKind::ExplicitFinite;
    else if (env.mixture) kind = ClassKind::LinearMixtureLattice;
    else if (env.linear) kind = ClassKind::LinearAmdpLattice;

    DiscrepancyKind disc = DiscrepancyKind::Bellman;
    if (cs.discrepancy) disc = *cs.discrepancy;
    else if (config.agent == AgentKind::MleLoop) disc = DiscrepancyKind::Mle;
    else if (kind == ClassKind::LinearMixtureLattice) disc = DiscrepancyKind::ModelBased;

    if (config.agent == AgentKind::MleLoop && disc != DiscrepancyKind::Mle)
        throw ConfigError("class.discrepancy: mle-loop needs the mle discrepancy");
    if (config.agent == AgentKind::Loop && disc == DiscrepancyKind::Mle)
        throw ConfigError("class.discrepancy: loop cannot use the mle discrepancy; use agent.name = mle-loop");

    const auto& model = env.model;
    const std::size_t S = model.n_states(), A = model.n_actions();
    if (kind == ClassKind::ExplicitFinite) {
        if (cs.file.empty()) throw ConfigError("class.file: explicit classes need a file");
        std::ifstream in(cs.file);
        if (!in) throw ValidationError("cannot open class file " + cs.file);
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError("class file " + cs.file + " is not valid JSON: " + e.what());
        }
        auto cls = load_explicit_class(doc, disc);
        if (cls.n_states() != S || cls.n_actions() != A)
            throw ValidationError("class file does not match the instance's state/action counts");
        if (!cls.model_based() && disc == DiscrepancyKind::Bellman) add_bellman_images(cls, model);
        cls.truth = find_truth(cls, env.solution, 1e-7);
        return cls;
    }

    LatticeSpec ls;
    ls.kind = kind;
    ls.n_states = S;
    ls.n_actions = A;
    ls.discrepancy = disc;
    ls.truth = &model;
    ls.span_bound = model.span_bound();
    ls.max_members = cs.max_members;
    switch (kind) {
    case ClassKind::TabularLattice: {
        if (disc != DiscrepancyKind::Bellman) throw ConfigError("class.discrepancy: tabular lattices are value classes");
        const Vector q(Eigen::Map<const Vector>(env.solution.q_star.data(), env.solution.q_star.size()));
        ls.bound = cs.bound.value_or(q.cwiseAbs().maxCoeff() + cs.rho);
        if (cs.anchor_truth) ls.anchor = q;
        break;
    }
    case ClassKind::LinearAmdpLattice: {
        if (!env.linear) throw ConfigError("class.kind: linear-amdp lattices need a linear-amdp instance");
        if (disc != DiscrepancyKind::Bellman) throw ConfigError("class.discrepancy: linear AMDP lattices are value classes");
        ls.features = env.linear->phi;
        const Vector omega = linear_q_parameter(*env.linear, env.solution);
        const double d = static_cast<double>(omega.size());
        ls.bound = cs.bound.value_or(std::max(0.5 * model.span_bound() * std::sqrt(d), omega.cwiseAbs().maxCoeff()));
        if (cs.anchor_truth) ls.anchor = omega;
        break;
    }
    case ClassKind::LinearMixtureLattice: {
        if (!env.mixture) throw ConfigError("class.kind: linear-mixture lattices need a linear-mixture instance");
        if (disc == DiscrepancyKind::Bellman) throw ConfigError("class.discrepancy: mixture lattices are model classes");
        ls.mixture = env.mixture;
        ls.bound = cs.bound.value_or(1.0);
        if (cs.anchor_truth) ls.anchor = *env.mixture_theta;
        break;
    }
    case ClassKind::ExplicitFinite: break;
    }
    if (cs.anchor_truth && kind != ClassKind::LinearMixtureLattice) ls.j_anchor = env.solution.j_star;
    return build_lattice_cover(ls, cs.rho);
}

// ---- baselines -------------------------------------------------------------

namespace {

RunTrace run_fixed_policy(const TabularAMDP& env, const AgentConfig& config, bool random_actions) {
    config.validate();
    env.check_state(config.initial_state);
    const auto sol = evi_solve(env);
    const auto policy = greedy_policy(sol.q_star);
    RunTrace trace;
    trace.agent = random_actions ? "random" : "oracle";
    trace.seed = config.seed;
    trace.j_star = sol.j_star;
    trace.steps.reserve(config.horizon);
    Rng rng(config.seed);
    // actions draw from their own stream so transitions match the oracle's draws
    Rng action_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
    std::size_t s = config.initial_state;
    CompensatedSum regret;
    for (std::size_t t = 1; t <= config.horizon; ++t) {
        if (config.cancel && config.cancel->load(std::memory_order_relaxed)) throw Interrupted(std::move(trace));
        const std::size_t a = random_actions ? action_rng.below(env.n_actions()) : policy[s];
        const auto out = step(env, s, a, rng);
        regret.add(sol.j_star - out.reward);
        StepRecord rec;
        rec.t = t;
        rec.s = s;
        rec.a = a;
        rec.r = out.reward;
        rec.s_next = out.next_state;
        rec.j_selected = random_actions ? std::numeric_limits<double>::quiet_NaN() : sol.j_star;
        rec.switched = false;
        rec.tau = 0;
        rec.cum_regret = regret.value();
        trace.steps.push_back(rec);
        s = out.next_state;
    }
    return trace;
}

} // namespace

RunTrace run_oracle(const TabularAMDP& env, const AgentConfig& config) { return run_fixed_policy(env, config, false); }
RunTrace run_random(const TabularAMDP& env, const AgentConfig& config) { return run_fixed_policy(env, config, true); }

// ---- metrics -------------------------------------------------------------

SlopeFit fit_slope(std::span<const double> cum, std::size_t t_lo, std::size_t t_hi) {
    if (t_lo < 1 || t_hi <= t_lo || t_hi > cum.size())
        throw InsufficientPoints("slope window [" + std::to_string(t_lo) + ", " + std::to_string(t_hi) +
                                 "] does not fit a trace of length " + std::to_string(cum.size()));
    SlopeFit fit;
    fit.t_lo = t_lo;
    fit.t_hi = t_hi;
    const double x_lo = std::log2(static_cast<double>(t_lo));
    const double x_hi = std::log2(static_cast<double>(t_hi));
    const auto n_grid = static_cast<std::size_t>(std::ceil((x_hi - x_lo) * 8.0));
    std::vector<std::size_t> ts;
    for (std::size_t i = 0; i <= n_grid; ++i) {
        const double x = i == n_grid ? x_hi : x_lo + static_cast<double>(i) / 8.0;
        const auto t = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(std::exp2(x))), t_lo, t_hi);
        if (ts.empty() || ts.back() != t) ts.push_back(t);
    }
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (auto t : ts) {
        const double r = cum[t - 1];
        if (!(r > 0.0)) {
            ++fit.excluded;
            continue;
        }
        const double x = std::log2(static_cast<double>(t)), y = std::log2(r);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++fit.points;
    }
    if (fit.points < 3)
        throw InsufficientPoints("only " + std::to_string(fit.points) + " positive-regret points in [" +
                                 std::to_string(t_lo) + ", " + std::to_string(t_hi) + "] (" +
                                 std::to_string(fit.excluded) + " excluded)");
    const double n = static_cast<double>(fit.points);
    fit.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    fit.intercept = (sy - fit.slope * sx) / n;
    return fit;
}

SlopeFit fit_regret_slope(const RunTrace& trace, std::size_t t_lo, std::size_t t_hi) {
    std::vector<double> cum(trace.steps.size());
    for (std::size_t i = 0; i < cum.size(); ++i) cum[i] = trace.steps[i].cum_regret;
    return fit_slope(cum, t_lo, t_hi);
}

SlopeFit fit_regret_slope(const RunTrace& trace, double window) {
    const std::size_t T = trace.steps.size();
    if (T < 1024) throw InsufficientPoints("slope fits need at least 1024 steps, trace has " + std::to_string(T));
    if (!(window > 0.0 && window <= 1.0)) throw ValidationError("slope window must lie in (0, 1]");
    const double L = std::log2(static_cast<double>(T));
    const auto t_lo = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(std::exp2(L * (1.0 - window)))));
    return fit_regret_slope(trace, t_lo, T);
}

SwitchingReport switching_report(const RunTrace& trace) {
    SwitchingReport rep;
    std::size_t count = 0;
    std::size_t next = 2;
    std::size_t k = 1;
    for (const auto& st : trace.steps) {
        count += st.switched ? 1 : 0;
        if (st.t == next) {
            rep.checkpoints.push_back(next);
            rep.counts.push_back(count);
            rep.ratios.push_back(static_cast<double>(count) / static_cast<double>(k));
            next *= 2;
            ++k;
        }
    }
    rep.total = count;
    return rep;
}

Decomposition decomposition_report(const RunTrace& trace, const TabularAMDP& model, const HypothesisClass* cls) {
    const auto sol = evi_solve(model);
    const auto star = ValueHypothesis::make(sol.q_star, sol.j_star);
    CompensatedSum bellman, realization, gap, target;
    for (const auto& st : trace.steps) {
        const ValueHypothesis* h = &star;
        if (st.f_index != kNoIndex) {
            if (!cls || st.f_index >= cls->size())
                throw IndexOutOfRange("trace step " + std::to_string(st.t) + " names hypothesis " +
                                      std::to_string(st.f_index) + " outside the class");
            h = &cls->members[st.f_index];
        }
        model.check_state(st.s);
        model.check_action(st.a);
        const double q = h->q(ix(st.s), ix(st.a));
        double pv = 0.0;
        const auto row = model.row(st.s, st.a);
        for (std::size_t n = 0; n < row.size(); ++n) pv += row[n] * h->v(ix(n));
        const double r = model.reward(st.s, st.a);
        bellman.add(q - r - pv + h->j);
        realization.add(pv - h->v(ix(st.s)));
        gap.add(h->v(ix(st.s)) - q);
        target.add(h->j - r);
    }
    Decomposition d;
    d.bellman_error_sum = bellman.value();
    d.realization_error_sum = realization.value();
    d.action_gap_sum = gap.value();
    d.gain_gap_sum = target.value();
    d.residual = std::abs(d.gain_gap_sum - (d.bellman_error_sum + d.realization_error_sum + d.action_gap_sum));
    return d;
}

// ---- experiments ---------------------------------------------------------

MeanSd mean_sd(const std::vector<double>& xs) {
    MeanSd out;
    if (xs.empty()) return out;
    CompensatedSum s;
    for (double x : xs) s.add(x);
    out.mean = s.value() / static_cast<double>(xs.size());
    if (xs.size() > 1) {
        CompensatedSum v;
        for (double x : xs) v.add((x - out.mean) * (x - out.mean));
        out.sd = std::sqrt(v.value() / static_cast<double>(xs.size() - 1));
    }
    return out;
}

nlohmann::json to_json(const MetricsSummary& m) {
    nlohmann::json seeds = nlohmann::json::array();
    for (const auto& s : m.seeds) {
        nlohmann::json j{{"seed", s.seed}, {"ok", s.ok}};
        if (!s.ok) {
            j["error"] = s.error;
            j["error_kind"] = s.error_kind;
            seeds.push_back(j);
            continue;
        }
        j["trace_file"] = s.trace_file;
        j["beta"] = s.beta;
        j["final_regret"] = s.final_regret;
        j["regret_checkpoints"] = pairs_json(s.regret_checkpoints);
        j["slope"] = slope_json(s.slope);
        j["switches"] = s.switching.total;
        j["switch_checkpoints"] = s.switching.checkpoints;
        j["switch_counts"] = s.switching.counts;
        j["switch_ratios"] = s.switching.ratios;
        j["optimism_violations"] = s.optimism_violations;
        j["max_abs_discrepancy"] = s.max_abs_discrepancy;
        j["decomposition"] = {{"bellman_error_sum", s.decomposition.bellman_error_sum},
                              {"realization_error_sum", s.decomposition.realization_error_sum},
                              {"action_gap_sum", s.decomposition.action_gap_sum},
                              {"gain_gap_sum", s.decomposition.gain_gap_sum},
                              {"residual", s.decomposition.residual}};
        if (s.audit)
            j["audit"] = {{"norm_mode", to_string(s.audit->norm_mode)},
                          {"fitted_d_g", s.audit->fitted_d_g},
                          {"fitted_kappa_g", s.audit->fitted_kappa_g},
                          {"dominance_burn_in", s.audit->dominance_burn_in},
                          {"transfer_burn_in", s.audit->transfer_burn_in},
                          {"beta_needed", s.audit->beta_needed},
                          {"residual", s.audit->residual}};
        seeds.push_back(j);
    }
    return {{"name", m.name},
            {"agent", m.agent},
            {"horizon", m.horizon},
            {"class_size", m.class_size},
            {"n_seeds", m.seeds.size()},
            {"n_ok", m.n_ok},
            {"final_regret", mean_sd_json(m.final_regret)},
            {"slope", mean_sd_json(m.slope)},
            {"switches", mean_sd_json(m.switches)},
            {"switches_per_log2", mean_sd_json(m.switches_per_log2)},
            {"optimism_violations", mean_sd_json(m.optimism_violations)},
            {"mean_curve_slope", slope_json(m.mean_curve_slope)},
            {"mean_regret_checkpoints", pairs_json(m.mean_regret_checkpoints)},
            {"mean_switch_checkpoints", pairs_json(m.mean_switch_checkpoints)},
            {"seeds", seeds}};
}

MetricsSummary summary_from_json(const nlohmann::json& doc) {
    try {
        MetricsSummary m;
        m.name = doc.at("name").get<std::string>();
        m.agent = doc.at("agent").get<std::string>();
        m.horizon = doc.at("horizon").get<std::size_t>();
        m.class_size = doc.value("class_size", std::size_t{0});
        m.n_ok = doc.at("n_ok").get<std::size_t>();
        m.final_regret = mean_sd_from_json(doc.at("final_regret"));
        m.slope = mean_sd_from_json(doc.at("slope"));
        m.switches = mean_sd_from_json(doc.at("switches"));
        m.switches_per_log2 = mean_sd_from_json(doc.at("switches_per_log2"));
        m.optimism_violations = mean_sd_from_json(doc.at("optimism_violations"));
        m.mean_curve_slope = slope_from_json(doc.at("mean_curve_slope"));
        m.mean_regret_checkpoints = pairs_from_json(doc.at("mean_regret_checkpoints"));
        m.mean_switch_checkpoints = pairs_from_json(doc.at("mean_switch_checkpoints"));
        for (const auto& j : doc.at("seeds")) {
            SeedSummary s;
            s.seed = j.at("seed").get<std::uint64_t>();
            s.ok = j.at("ok").get<bool>();
            if (!s.ok) {
                s.error = j.value("error", "");
                s.error_kind = j.value("error_kind", "");
            } else {
                s.trace_file = j.value("trace_file", "");
                s.final_regret = j.at("final_regret").get<double>();
                s.slope = slope_from_json(j.at("slope"));
                s.switching.total = j.at("switches").get<std::size_t>();
                s.optimism_violations = j.at("optimism_violations").get<std::size_t>();
            }
            m.seeds.push_back(std::move(s));
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed summary: ") + e.what());
    }
}

MetricsSummary run_experiment(const ExperimentConfig& config) {
    config.validate();
    const auto env = build_environment(config);
    const bool learner = config.agent == AgentKind::Loop || config.agent == AgentKind::MleLoop;
    std::optional<HypothesisClass> cls;
    if (learner) cls = build_class(config, env);

    fs::create_directories(config.output_dir);
    const std::size_t T = config.agent_config.horizon;
    std::vector<SeedResult> results(config.seeds.size());
    std::atomic<std::size_t> next{0};

    auto work = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= config.seeds.size()) return;
            SeedResult& res = results[i];
            SeedSummary& sum = res.summary;
            sum.seed = config.seeds[i];
            try {
                AgentConfig ac = config.agent_config;
                ac.seed = sum.seed;
                RunTrace tr;
                switch (config.agent) {
                case AgentKind::Loop: tr = run_loop(env.model, *cls, ac); break;
                case AgentKind::MleLoop: tr = run_mle_loop(env.model, *cls, ac); break;
                case AgentKind::Oracle: tr = run_oracle(env.model, ac); break;
                case AgentKind::Random: tr = run_random(env.model, ac); break;
                }
                sum.trace_file = seed_file(config, sum.seed);
                write_trace_csv(tr, (fs::path(config.output_dir) / sum.trace_file).string());
                sum.beta = tr.beta;
                sum.final_regret = tr.steps.back().cum_regret;
                for (auto t : power_checkpoints(T)) sum.regret_checkpoints.emplace_back(t, tr.steps[t - 1].cum_regret);
                try {
                    sum.slope = fit_regret_slope(tr, config.slope_window);
                } catch (const InsufficientPoints&) {
                    sum.slope = SlopeFit{};
                    sum.slope.slope = std::numeric_limits<double>::quiet_NaN();
                }
                sum.switching = switching_report(tr);
                sum.optimism_violations = tr.optimism_violations;
                if (cls) {
                    double worst = 0.0;
                    for (const auto& st : tr.steps) {
                        const Trajectory z{st.s, st.a, st.r, st.s_next};
                        worst = std::max(worst,
                                         std::abs(discrepancy(*cls, st.f_index, st.f_index, st.f_index, z, &env.model)));
                    }
                    sum.max_abs_discrepancy = worst;
                }
                sum.decomposition = decomposition_report(tr, env.model, cls ? &*cls : nullptr);
                if (config.audit && cls)
                    sum.audit = audit_agec(tr, env.model, *cls,
                                           cls->discrepancy == DiscrepancyKind::Mle ? NormMode::L1Sqrt
                                                                                    : NormMode::L2Squared);
                res.cum.resize(T);
                for (std::size_t t = 0; t < T; ++t) res.cum[t] = tr.steps[t].cum_regret;
                sum.ok = true;
            } catch (const ValidationError& e) {
                sum = SeedSummary{};
                sum.seed = config.seeds[i];
                sum.error = e.what();
                sum.error_kind = "validation";
            } catch (const std::exception& e) {
                sum = SeedSummary{};
                sum.seed = config.seeds[i];
                sum.error = e.what();
                sum.error_kind = "runtime";
            }
        }
    };
    std::size_t workers = config.threads ? config.threads : std::max(1u, std::thread::hardware_concurrency());
    workers = std::min(workers, config.seeds.size());
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    for (auto& th : pool) th.join();

    MetricsSummary m;
    m.name = config.name;
    m.agent = to_string(config.agent);
    m.horizon = T;
    m.class_size = cls ? cls->size() : 0;
    std::vector<double> finals, slopes, switches, ratios, violations;
    std::vector<double> mean_cum(T, 0.0);
    const double log2T = std::log2(static_cast<double>(T));
    for (auto& r : results) {
        m.seeds.push_back(r.summary);
        if (!r.summary.ok) continue;
        ++m.n_ok;
        finals.push_back(r.summary.final_regret);
        if (std::isfinite(r.summary.slope.slope)) slopes.push_back(r.summary.slope.slope);
        switches.push_back(static_cast<double>(r.summary.switching.total));
        ratios.push_back(static_cast<double>(r.summary.switching.total) / log2T);
        violations.push_back(static_cast<double>(r.summary.optimism_violations));
        for (std::size_t t = 0; t < T; ++t) mean_cum[t] += r.cum[t];
    }
    m.final_regret = mean_sd(finals);
    m.slope = mean_sd(slopes);
    m.switches = mean_sd(switches);
    m.switches_per_log2 = mean_sd(ratios);
    m.optimism_violations = mean_sd(violations);
    if (m.n_ok > 0) {
        for (auto& x : mean_cum) x /= static_cast<double>(m.n_ok);
        for (auto t : power_checkpoints(T)) m.mean_regret_checkpoints.emplace_back(t, mean_cum[t - 1]);
        try {
            const double L = std::log2(static_cast<double>(T));
            const auto t_lo = static_cast<std::size_t>(std::llround(std::exp2(L * (1.0 - config.slope_window))));
            m.mean_curve_slope = fit_slope(mean_cum, std::max<std::size_t>(1, t_lo), T);
        } catch (const InsufficientPoints&) {
            m.mean_curve_slope.slope = std::numeric_limits<double>::quiet_NaN();
        }
        const auto& first = std::find_if(results.begin(), results.end(), [](const SeedResult& r) { return r.summary.ok; })
                                ->summary.switching.checkpoints;
        for (std::size_t k = 0; k < first.size(); ++k) {
            double total = 0.0;
            for (const auto& r : results)
                if (r.summary.ok) total += static_cast<double>(r.summary.switching.counts[k]);
            m.mean_switch_checkpoints.emplace_back(first[k], total / static_cast<double>(m.n_ok));
        }
    }
    std::ofstream out(fs::path(config.output_dir) / (config.name + ".summary.json"));
    if (!out) throw Error("cannot write summary into " + config.output_dir);
    out << to_json(m).dump(2) << '\n';
    return m;
}

// ---- report ----------------------------------------------------------------

std::string report(const std::string& dir) {
    if (!fs::is_directory(dir)) throw MissingSummaries("no such directory: " + dir);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        const auto name = e.path().filename().string();
        if (e.is_regular_file() && name.size() > 13 && name.ends_with(".summary.json")) files.push_back(e.path());
    }
    if (files.empty()) throw MissingSummaries("no *.summary.json files in " + dir);
    std::sort(files.begin(), files.end());
    std::vector<MetricsSummary> sums;
    for (const auto& f : files) {
        std::ifstream in(f);
        try {
            sums.push_back(summary_from_json(nlohmann::json::parse(in)));
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError("summary " + f.string() + " is not valid JSON: " + e.what());
        }
    }

    auto pm = [](const MeanSd& m) {
        std::ostringstream ss;
        ss << std::setprecision(4) << m.mean << " +- " << m.sd;
        return ss.str();
    };
    std::ostringstream table;
    table << std::left << std::setw(24) << "name" << std::setw(10) << "agent" << std::setw(8) << "seeds"
          << std::setw(9) << "T" << std::setw(22) << "final_regret" << std::setw(22) << "slope" << std::setw(12)
          << "curve_slope" << std::setw(20) << "switches" << std::setw(20) << "N/log2T" << "violations\n";
    for (const auto& s : sums) {
        std::ostringstream curve;
        curve << std::setprecision(4) << s.mean_curve_slope.slope;
        table << std::left << std::setw(24) << s.name << std::setw(10) << s.agent << std::setw(8)
              << (std::to_string(s.n_ok) + "/" + std::to_string(s.seeds.size())) << std::setw(9) << s.horizon
              << std::setw(22) << pm(s.final_regret) << std::setw(22) << pm(s.slope) << std::setw(12) << curve.str()
              << std::setw(20) << pm(s.switches) << std::setw(20) << pm(s.switches_per_log2)
              << std::setprecision(4) << s.optimism_violations.mean << '\n';
    }

    const fs::path base(dir);
    {
        std::ofstream csv(base / "report.csv");
        csv << "name,agent,seeds_ok,seeds_total,horizon,final_regret_mean,final_regret_sd,slope_mean,slope_sd,"
               "curve_slope,switches_mean,switches_sd,switches_per_log2_mean,switches_per_log2_sd,violations_mean\n";
        for (const auto& s : sums)
            csv << s.name << ',' << s.agent << ',' << s.n_ok << ',' << s.seeds.size() << ',' << s.horizon << ','
                << format_double(s.final_regret.mean) << ',' << format_double(s.final_regret.sd) << ','
                << format_double(s.slope.mean) << ',' << format_double(s.slope.sd) << ','
                << format_double(s.mean_curve_slope.slope) << ',' << format_double(s.switches.mean) << ','
                << format_double(s.switches.sd) << ',' << format_double(s.switches_per_log2.mean) << ','
                << format_double(s.switches_per_log2.sd) << ',' << format_double(s.optimism_violations.mean) << '\n';
    }
    auto write_plot = [&](const std::string& file, const std::string& xname, auto getter) {
        std::set<std::size_t> xs;
        for (const auto& s : sums)
            for (const auto& [x, v] : getter(s)) xs.insert(x);
        std::ofstream out(base / file);
        out << "# " << xname;
        for (const auto& s : sums) out << ' ' << s.name;
        out << '\n';
        for (auto x : xs) {
            out << x;
            for (const auto& s : sums) {
                const auto& series = getter(s);
                auto it = std::find_if(series.begin(), series.end(), [x](const auto& p) { return p.first == x; });
                out << ' ' << (it == series.end() ? std::string("nan") : format_double(it->second));
            }
            out << '\n';
        }
    };
    write_plot("regret_curves.dat", "t", [](const MetricsSummary& s) -> const auto& { return s.mean_regret_checkpoints; });
    write_plot("switching.dat", "t", [](const MetricsSummary& s) -> const auto& { return s.mean_switch_checkpoints; });
    std::ofstream(base / "report.txt") << table.str();
    return table.str();
}

} // namespace loop
