#pragma once

#include "loop/errors.hpp"
#include "loop/rng.hpp"

#include <Eigen/Dense>
#include "json.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace loop {

using Vector = Eigen::VectorXd;
/// Row-major so that a (s, a) row of the transition tensor is contiguous.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
/// Deterministic stationary policy: one action index per state.
using Policy = std::vector<std::size_t>;

/**
 * Finite average-reward MDP with deterministic rewards.
 *
 * The transition tensor is stored as an (S*A) x S matrix; row s*A + a holds
 * P(.|s, a). Construction validates every invariant and reports the first
 * violation with its indices.
 */
class TabularAMDP {
public:
    TabularAMDP(std::size_t n_states, std::size_t n_actions, Matrix transition, Matrix reward,
                double span_bound);

    std::size_t n_states() const { return n_states_; }
    std::size_t n_actions() const { return n_actions_; }
    std::size_t n_pairs() const { return n_states_ * n_actions_; }
    std::size_t pair(std::size_t s, std::size_t a) const { return s * n_actions_ + a; }

    const Matrix& transition() const { return transition_; }
    const Matrix& reward() const { return reward_; }
    double span_bound() const { return span_bound_; }

    double prob(std::size_t s, std::size_t a, std::size_t next) const {
        return transition_(static_cast<Eigen::Index>(pair(s, a)), static_cast<Eigen::Index>(next));
    }
    double reward(std::size_t s, std::size_t a) const {
        return reward_(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a));
    }
    std::span<const double> row(std::size_t s, std::size_t a) const {
        return {transition_.data() + pair(s, a) * n_states_, n_states_};
    }

    /// (P v)(s, a) for every pair, as an S x A table.
    Matrix expect(const Vector& v) const;

    TabularAMDP with_span_bound(double span_bound) const;

    void check_state(std::size_t s) const;
    void check_action(std::size_t a) const;

private:
    std::size_t n_states_;
    std::size_t n_actions_;
    Matrix transition_;
    Matrix reward_;
    double span_bound_;
};

nlohmann::json to_json(const TabularAMDP& model);
TabularAMDP amdp_from_json(const nlohmann::json& doc);
TabularAMDP load_amdp(const std::string& path);
void save_amdp(const TabularAMDP& model, const std::string& path);

struct SolveResult {
    double j_star = 0.0;
    Vector v_star;  ///< centralized: max + min == 0
    Matrix q_star;  ///< S x A
    double span = 0.0;
    long iterations = 0;
    /// sup over (s, a) of |J + Q(s,a) - r(s,a) - sum_s' P(s'|s,a) V(s')|
    double residual = 0.0;
};

struct EviOptions {
    double eps = 1e-8;
    long max_iters = 1'000'000;
    /// Self-loop mixing P' = tau P + (1 - tau) I. Gains and optimal policies
    /// are unchanged; it removes the oscillation of periodic chains.
    double aperiodicity = 0.5;
};

/// Extended value iteration with the span-of-increments stopping rule.
/// J is the midpoint of the final per-state increments; the returned bias is
/// centralized. Throws NonConvergent when max_iters is exhausted.
SolveResult evi_solve(const TabularAMDP& model, const EviOptions& options = {});
SolveResult evi_solve(const TabularAMDP& model, double eps, long max_iters);

/// (T_J q)(s,a) = r(s,a) + sum_s' P(s'|s,a) max_a' q(s',a') - j.
Matrix bellman_operator_apply(const TabularAMDP& model, const Matrix& q, double j);

/// E(q, j)(s, a) = q(s,a) - (T_J q)(s,a).
double bellman_error_eval(const TabularAMDP& model, const Matrix& q, double j, std::size_t s,
                          std::size_t a);
Matrix bellman_error_table(const TabularAMDP& model, const Matrix& q, double j);

double span(std::span<const double> v);
inline double span(const Vector& v) { return span(std::span<const double>(v.data(), static_cast<std::size_t>(v.size()))); }

/// Row maxima and argmax (lowest index on ties).
Vector greedy_values(const Matrix& q);
Policy greedy_policy(const Matrix& q);

struct PolicyGain {
    double value = 0.0;
    /// true when power iteration hit its cap and the value came from a rollout
    bool rollout_fallback = false;
};

/// Cesaro-average reward of the chain induced by `policy` from the uniform
/// initial distribution.
PolicyGain stationary_average_reward(const TabularAMDP& model, const Policy& policy, double tol = 1e-12);

struct StepOutcome {
    double reward = 0.0;
    std::size_t next_state = 0;
};

StepOutcome step(const TabularAMDP& model, std::size_t s, std::size_t a, Rng& rng);

} // namespace loop
