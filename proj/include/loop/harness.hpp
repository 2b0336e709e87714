#pragma once

#include "loop/complexity.hpp"
#include "loop/envgen.hpp"
#include "loop/loop_agent.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace loop {

enum class AgentKind { Loop, MleLoop, Oracle, Random };
std::string to_string(AgentKind kind);
AgentKind parse_agent_kind(const std::string& text);

/// How the harness builds the hypothesis class for an instance.
struct ClassSetup {
    /// nullopt: picked from the instance kind
    std::optional<ClassKind> kind;
    std::optional<DiscrepancyKind> discrepancy;
    double rho = 0.2;
    /// nullopt: derived from the instance (see build_class)
    std::optional<double> bound;
    /// grid through the true parameter and J* instead of the box corner
    bool anchor_truth = true;
    std::string file;  ///< explicit classes only
    std::size_t max_members = 500'000;
};

/**
 * One experiment: an instance, an agent, a class and a list of seeds.
 * Loaded from a flat `key = value` file; see parse_config for the keys.
 */
struct ExperimentConfig {
    std::string name = "experiment";
    InstanceSpec instance;
    std::string instance_file;  ///< overrides `instance` when set
    AgentKind agent = AgentKind::Loop;
    AgentConfig agent_config;
    ClassSetup cls;
    std::vector<std::uint64_t> seeds{1};
    std::string output_dir = "out";
    std::size_t threads = 0;  ///< 0: hardware concurrency
    bool audit = false;       ///< run audit_agec on every trace
    /// fraction of the log2 range, counted from the end, used by slope fits
    double slope_window = 0.5;

    void validate() const;
};

/// Parses `key = value` lines; `#` starts a comment. Unknown or repeated
/// keys are ConfigError. Relative file paths resolve against `base_dir`.
///
/// Keys: run.name, run.T, run.seeds (e.g. "1-20" or "1,4,9"), run.output_dir,
/// run.threads, run.audit, run.slope_window; instance.kind, instance.file,
/// instance.states, instance.actions, instance.dim, instance.seed,
/// instance.reward_min, instance.reward_max, instance.mixing_floor;
/// agent.name, agent.c_beta, agent.beta ("auto" or a number), agent.delta,
/// agent.initial_state; class.kind, class.discrepancy, class.rho, class.bound
/// ("auto" or a number), class.anchor ("truth" or "corner"), class.file,
/// class.max_members.
ExperimentConfig parse_config(const std::string& text, const std::string& base_dir = ".");
ExperimentConfig load_config(const std::string& path);

/// Instance plus whatever the class builders need from it.
struct ExperimentEnvironment {
    TabularAMDP model;
    SolveResult solution;
    std::optional<LinearAmdpFeatures> linear;
    std::shared_ptr<const LinearMixtureFeatures> mixture;
    std::optional<Vector> mixture_theta;
};

ExperimentEnvironment build_environment(const ExperimentConfig& config);

/// Hypothesis class for the agent. Automatic bounds: tabular lattices use
/// max|Q*| + rho, linear AMDP lattices max(sp/2 * sqrt(d), max|omega*|), and
/// mixture lattices the unit ball.
HypothesisClass build_class(const ExperimentConfig& config, const ExperimentEnvironment& env);

/// Executes greedy(Q*) of the true model.
RunTrace run_oracle(const TabularAMDP& env, const AgentConfig& config);
/// Uniformly random actions.
RunTrace run_random(const TabularAMDP& env, const AgentConfig& config);

// ---- metrics -----------------------------------------------------------

struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
    std::size_t points = 0;
    /// points dropped because cumulative regret was <= 0
    std::size_t excluded = 0;
    std::size_t t_lo = 0;
    std::size_t t_hi = 0;
};

/// Least-squares slope of log2 regret against log2 t at 8 points per octave
/// over [t_lo, t_hi]. cum[t - 1] is the regret after t steps.
SlopeFit fit_slope(std::span<const double> cum, std::size_t t_lo, std::size_t t_hi);
/// Over the final `window` fraction of [1, T] on the log scale.
SlopeFit fit_regret_slope(const RunTrace& trace, double window = 0.5);
SlopeFit fit_regret_slope(const RunTrace& trace, std::size_t t_lo, std::size_t t_hi);

struct SwitchingReport {
    std::size_t total = 0;
    std::vector<std::size_t> checkpoints;  ///< 2^k <= T, k >= 1
    std::vector<std::size_t> counts;       ///< N(2^k)
    std::vector<double> ratios;            ///< N(2^k) / k
};

SwitchingReport switching_report(const RunTrace& trace);

/**
 * sum_t (J_t - r_t) split into Bellman error E(f_t)(s_t, a_t), realization
 * error E[V_t(s')] - V_t(s_t), and the action gap V_t(s_t) - Q_t(s_t, a_t)
 * (zero for greedy agents). Steps without a hypothesis use f*.
 */
struct Decomposition {
    double bellman_error_sum = 0.0;
    double realization_error_sum = 0.0;
    double action_gap_sum = 0.0;
    double gain_gap_sum = 0.0;  ///< sum_t (J_t - r_t)
    /// |gain_gap_sum - (bellman + realization + action gap)|
    double residual = 0.0;
};

Decomposition decomposition_report(const RunTrace& trace, const TabularAMDP& model, const HypothesisClass* cls);

// ---- experiments --------------------------------------------------------

struct SeedSummary {
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;       ///< empty when ok
    std::string error_kind;  ///< "validation" or "runtime"
    std::string trace_file;  ///< relative to the output directory
    double beta = 0.0;
    double final_regret = 0.0;
    std::vector<std::pair<std::size_t, double>> regret_checkpoints;
    SlopeFit slope;
    SwitchingReport switching;
    std::size_t optimism_violations = 0;
    double max_abs_discrepancy = 0.0;
    Decomposition decomposition;
    std::optional<AgecAuditReport> audit;
};

struct MeanSd {
    double mean = 0.0;
    double sd = 0.0;
};

MeanSd mean_sd(const std::vector<double>& xs);

struct MetricsSummary {
    std::string name;
    std::string agent;
    std::size_t horizon = 0;
    std::size_t class_size = 0;
    std::vector<SeedSummary> seeds;
    std::size_t n_ok = 0;
    MeanSd final_regret;
    MeanSd slope;
    MeanSd switches;
    MeanSd switches_per_log2;
    MeanSd optimism_violations;
    /// slope of the seed-averaged regret curve
    SlopeFit mean_curve_slope;
    std::vector<std::pair<std::size_t, double>> mean_regret_checkpoints;
    std::vector<std::pair<std::size_t, double>> mean_switch_checkpoints;
};

nlohmann::json to_json(const MetricsSummary& summary);
MetricsSummary summary_from_json(const nlohmann::json& doc);

/// Runs every seed on a worker pool, writes `<name>.seed<k>.csv` per seed and
/// `<name>.summary.json` into the output directory. A failing seed is recorded
/// in its SeedSummary; the other seeds still run.
MetricsSummary run_experiment(const ExperimentConfig& config);

/// Reads every `*.summary.json` in `dir` and writes report.txt (table),
/// report.csv (one row per summary), regret_curves.dat and switching.dat
/// (whitespace-separated plot data). Returns the table. Throws
/// MissingSummaries when there is nothing to report.
std::string report(const std::string& dir);

} // namespace loop
