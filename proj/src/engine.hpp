#pragma once

// Incremental loss bookkeeping for the online agents. The buffer-based
// functions in loop_agent.hpp are the reference; these trackers compute the
// same quantities from sufficient statistics.

#include "loop/hypothesis.hpp"

#include <memory>
#include <vector>

namespace loop::detail {

class LossTracker {
public:
    virtual ~LossTracker() = default;

    /// Appends one transition executed under member `active`.
    virtual void observe(const Trajectory& zeta, std::size_t active) = 0;
    /// loss_gap of every member on the data observed so far.
    virtual std::vector<double> gaps() = 0;
    /// Selects the member whose loss row is maintained step by step.
    virtual void focus(std::size_t f) = 0;
    /// Gap of the focused member on the current data.
    virtual double focus_gap() const = 0;
    /// Auxiliary index minimizing the focused member's loss (lowest on ties).
    virtual std::size_t focus_argmin() const = 0;
};

/// Squared Bellman discrepancy, value or model class.
std::unique_ptr<LossTracker> make_bellman_tracker(const HypothesisClass& cls);
/// Squared value-targeted regression residual of a model class.
std::unique_ptr<LossTracker> make_regression_tracker(const HypothesisClass& cls);
/// Negative log-likelihood of a model class.
std::unique_ptr<LossTracker> make_likelihood_tracker(const HypothesisClass& cls);

std::unique_ptr<LossTracker> make_tracker(const HypothesisClass& cls);

/// argmin with lowest index on ties.
std::size_t argmin(const std::vector<double>& v);

} // namespace loop::detail
