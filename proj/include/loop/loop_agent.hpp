#pragma once

#include "loop/hypothesis.hpp"
#include "loop/trace.hpp"

#include <atomic>
#include <optional>

namespace loop {

struct AgentConfig {
    std::size_t horizon = 4096;
    double delta = 0.05;
    /// nullopt: computed by the schedule before the run and frozen
    std::optional<double> beta;
    double c_beta = 0.5;
    std::uint64_t seed = 1;
    std::size_t initial_state = 0;
    /// polled once per step; a set flag aborts the run with Interrupted
    const std::atomic<bool>* cancel = nullptr;

    void validate() const;
};

/// Run aborted through AgentConfig::cancel; carries the steps completed so far.
class Interrupted : public Error {
public:
    explicit Interrupted(RunTrace partial_trace)
        : Error("run interrupted after " + std::to_string(partial_trace.steps.size()) + " steps"),
          partial(std::move(partial_trace)) {}
    RunTrace partial;
};

struct BufferRecord {
    Trajectory zeta;
    std::size_t active = 0;  ///< member index executed at that step
};

/// Append-only list of observed transitions with the hypothesis active at each.
class DataBuffer {
public:
    DataBuffer() = default;
    explicit DataBuffer(std::size_t capacity) : capacity_(capacity) { records_.reserve(capacity); }

    void append(const Trajectory& zeta, std::size_t active);
    const std::vector<BufferRecord>& records() const { return records_; }
    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }

    /// Buffer of the first n steps of a trace.
    static DataBuffer from_trace(const RunTrace& trace, std::size_t n);

private:
    std::vector<BufferRecord> records_;
    std::size_t capacity_ = 0;
};

/// sum_i l_{f_i}(f, g, zeta_i)^2, with g indexing the auxiliary class.
double loss(const HypothesisClass& cls, const DataBuffer& buffer, std::size_t f, std::size_t g);

/// L(f, f) - min over the given auxiliary indices of L(f, g).
double loss_gap(const HypothesisClass& cls, const DataBuffer& buffer, std::size_t f,
                std::span<const std::size_t> auxiliary);
/// Same, minimizing over the whole auxiliary class.
double loss_gap(const HypothesisClass& cls, const DataBuffer& buffer, std::size_t f);

/// Members with loss_gap <= beta, in class order. Throws EmptyConfidenceSet.
std::vector<std::size_t> confidence_set(const HypothesisClass& cls, const DataBuffer& buffer, double beta);

/// Candidate with the largest J; lowest index on ties. Throws EmptyCandidates.
std::size_t optimistic_select(std::span<const std::size_t> candidates, const HypothesisClass& cls);

/// t == 1 or upsilon_prev >= 4 beta.
bool should_update(double upsilon_prev, double beta, std::size_t t);

/// c * log(T * cover^2 / delta) * span.
double beta_schedule(double horizon, double delta, double cover_size, double span_bound, double c_beta);

/// Online loop against `env`; regret is measured against env's optimal gain.
RunTrace run_loop(const TabularAMDP& env, const HypothesisClass& cls, const AgentConfig& config);

} // namespace loop
