#pragma once

#include "loop/hypothesis.hpp"

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

namespace loop {

inline constexpr std::size_t kNoIndex = std::numeric_limits<std::size_t>::max();

/// One row of a run log. `loss_gap` is the gap of the executed hypothesis on
/// the data before step t; `upsilon` is the trigger statistic after step t.
struct StepRecord {
    std::size_t t = 0;  ///< 1-based
    std::size_t s = 0;
    std::size_t a = 0;
    double r = 0.0;
    std::size_t s_next = 0;
    double j_selected = 0.0;
    bool switched = false;
    std::size_t tau = 0;
    double upsilon = 0.0;
    double loss_gap = 0.0;
    double cum_regret = 0.0;
    std::size_t f_index = kNoIndex;
    std::size_t g_index = kNoIndex;
};

struct RunTrace {
    std::string agent;
    std::uint64_t seed = 0;
    double j_star = 0.0;
    double beta = 0.0;
    std::size_t switches = 0;
    /// steps with J_t < J* - 1e-9
    std::size_t optimism_violations = 0;
    bool has_g_index = false;
    std::vector<StepRecord> steps;

    std::size_t horizon() const { return steps.size(); }
    std::vector<Trajectory> trajectories() const;
};

/// Regret at t (1-based); 0 for t = 0.
double regret_at(const RunTrace& trace, std::size_t t);

void write_trace_csv(const RunTrace& trace, std::ostream& out);
void write_trace_csv(const RunTrace& trace, const std::string& path);
/// Reads a trace written by write_trace_csv. Summary fields other than the
/// switch count are not stored in the CSV and stay at their defaults.
RunTrace read_trace_csv(const std::string& path);

/// Shortest round-trip decimal form, so equal doubles print identical bytes.
std::string format_double(double x);

} // namespace loop
