#pragma once

#include "loop/loop_agent.hpp"

#include <vector>

namespace loop {

using MleConfig = AgentConfig;

/// -sum_i log P_g(s'_i | s_i, a_i); +inf when some observed transition has
/// zero probability under g (the hypothesis drops out of every min).
double mle_loss(const HypothesisClass& cls, const DataBuffer& buffer, std::size_t g);
/// Same, but throws ZeroLikelihood instead of returning +inf.
double mle_loss_strict(const HypothesisClass& cls, const DataBuffer& buffer, std::size_t g);

/// sum over buffered (s, a), with multiplicity, of TV(P_f(.|s,a), P_g(.|s,a)).
double tv_trigger(const HypothesisClass& cls, const DataBuffer& buffer, std::size_t f, std::size_t g);

/// t == 1 or upsilon_prev >= 3 sqrt(beta t).
bool mle_should_update(double upsilon_prev, double beta, std::size_t t);

/// c * log(T * brackets / delta) * span.
double mle_beta_schedule(double horizon, double delta, double bracket_count, double span_bound, double c_beta);

/// Upper functions of a rho-bracket over probability rows with n outcomes.
struct BracketSet {
    std::size_t n_outcomes = 0;
    double rho = 0.0;
    /// simplex grid step the brackets were built on (0 for the single all-ones bracket)
    double step = 0.0;
    std::vector<std::vector<double>> uppers;

    std::size_t size() const { return uppers.size(); }
    /// index of a bracket u with u >= p and ||u - p||_1 <= rho
    std::size_t cover(std::span<const double> p) const;
    /// u / sum(u), the form used inside likelihood comparisons
    std::vector<double> normalized(std::size_t i) const;
};

/// Number of points of the simplex grid with step 1/m over n outcomes.
std::size_t simplex_grid_count(std::size_t n_outcomes, std::size_t m);

/// Brackets over rows with n outcomes: grid rows q on a simplex grid (step a
/// multiple of grid_step) shifted up by a constant per outcome. Throws
/// LatticeTooLarge over the cap.
BracketSet bracket_cover(std::size_t n_outcomes, double grid_step, double rho, std::size_t max_brackets = 1'000'000);

RunTrace run_mle_loop(const TabularAMDP& env, const HypothesisClass& cls, const MleConfig& config);

} // namespace loop
