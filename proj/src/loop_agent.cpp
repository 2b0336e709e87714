#include "loop/loop_agent.hpp"

#include "engine.hpp"

#include <cmath>
#include <limits>

namespace loop {

void AgentConfig::validate() const {
    if (horizon == 0) throw ValidationError("horizon must be positive");
    if (!(delta > 0.0 && delta < 1.0)) throw ValidationError("delta must lie in (0, 1)");
    if (beta && !(*beta > 0.0)) throw ValidationError("beta must be positive");
    if (!(c_beta > 0.0)) throw ValidationError("c_beta must be positive");
}

void DataBuffer::append(const Trajectory& zeta, std::size_t active) {
    if (capacity_ != 0 && records_.size() >= capacity_) throw ValidationError("data buffer is full");
    records_.push_back({zeta, active});
}

DataBuffer DataBuffer::from_trace(const RunTrace& trace, std::size_t n) {
    if (n > trace.steps.size()) throw IndexOutOfRange("buffer prefix longer than the trace");
    DataBuffer out;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& st = trace.steps[i];
        out.append({st.s, st.a, st.r, st.s_next}, st.f_index);
    }
    return out;
}

double loss(const HypothesisClass& cls, const DataBuffer& buffer, std::size_t f, std::size_t g) {
    double total = 0.0;
    for (const auto& rec : buffer.records()) {
        const double l = discrepancy(cls, rec.active, f, g, rec.zeta);
        total += l * l;
    }
    return total;
}

double loss_gap(const HypothesisClass& cls, const DataBuffer& buffer, std::size_t f,
                std::span<const std::size_t> auxiliary) {
    if (auxiliary.empty()) throw EmptyCandidates("loss_gap needs a nonempty auxiliary list");
    if (buffer.empty()) return 0.0;
    double best = std::numeric_limits<double>::infinity();
    for (auto g : auxiliary) best = std::min(best, loss(cls, buffer, f, g));
    // f itself is G's entry f for every shipped class
    return loss(cls, buffer, f, f) - best;
}

double loss_gap(const HypothesisClass& cls, const DataBuffer& buffer, std::size_t f) {
    std::vector<std::size_t> all(cls.aux_size());
    for (std::size_t g = 0; g < all.size(); ++g) all[g] = g;
    return loss_gap(cls, buffer, f, all);
}

std::vector<std::size_t> confidence_set(const HypothesisClass& cls, const DataBuffer& buffer, double beta) {
    std::vector<std::size_t> out;
    for (std::size_t f = 0; f < cls.size(); ++f)
        if (loss_gap(cls, buffer, f) <= beta) out.push_back(f);
    if (out.empty())
        throw EmptyConfidenceSet("no member has loss gap <= beta = " + format_double(beta) + " after " +
                                 std::to_string(buffer.size()) + " steps");
    return out;
}

std::size_t optimistic_select(std::span<const std::size_t> candidates, const HypothesisClass& cls) {
    if (candidates.empty()) throw EmptyCandidates();
    std::size_t best = candidates.front();
    for (auto c : candidates)
        if (cls.members.at(c).j > cls.members[best].j || (cls.members[c].j == cls.members[best].j && c < best))
            best = c;
    return best;
}

bool should_update(double upsilon_prev, double beta, std::size_t t) {
    if (t == 0) throw ValidationError("steps are numbered from 1");
    return t == 1 || upsilon_prev >= 4.0 * beta;
}

double beta_schedule(double horizon, double delta, double cover_size, double span_bound, double c_beta) {
    if (!(horizon > 0 && delta > 0 && delta < 1 && cover_size > 0 && c_beta > 0))
        throw ValidationError("beta_schedule: arguments must be positive and delta in (0, 1)");
    return c_beta * std::log(horizon * cover_size * cover_size / delta) * span_bound;
}

RunTrace run_loop(const TabularAMDP& env, const HypothesisClass& cls, const AgentConfig& config) {
    config.validate();
    if (cls.members.empty()) throw ValidationError("hypothesis class is empty");
    if (cls.n_states() != env.n_states() || cls.n_actions() != env.n_actions())
        throw ValidationError("class and environment disagree on state/action counts");
    if (cls.discrepancy == DiscrepancyKind::Mle)
        throw ValidationError("the mle discrepancy runs through run_mle_loop");
    env.check_state(config.initial_state);

    const auto sol = evi_solve(env);
    RunTrace trace;
    trace.agent = "loop";
    trace.seed = config.seed;
    trace.j_star = sol.j_star;
    trace.beta = config.beta ? *config.beta
                             : beta_schedule(static_cast<double>(config.horizon), config.delta,
                                             static_cast<double>(cls.cover_size()), env.span_bound(), config.c_beta);
    trace.steps.reserve(config.horizon);

    auto tracker = detail::make_tracker(cls);
    Rng rng(config.seed);
    std::size_t s = config.initial_state;
    std::size_t f = 0;
    std::size_t tau = 0;
    double upsilon = 0.0;
    double cum_regret = 0.0;
    double comp = 0.0;  // Kahan compensation for the regret sum

    for (std::size_t t = 1; t <= config.horizon; ++t) {
        if (config.cancel && config.cancel->load(std::memory_order_relaxed)) throw Interrupted(std::move(trace));
        StepRecord rec;
        rec.t = t;
        if (should_update(upsilon, trace.beta, t)) {
            const auto gaps = tracker->gaps();
            std::vector<std::size_t> candidates;
            for (std::size_t i = 0; i < gaps.size(); ++i)
                if (gaps[i] <= trace.beta) candidates.push_back(i);
            if (candidates.empty())
                throw EmptyConfidenceSet("confidence set empty at t = " + std::to_string(t) +
                                         " (beta = " + format_double(trace.beta) + ")");
            f = optimistic_select(candidates, cls);
            tracker->focus(f);
            tau = t;
            rec.switched = true;
            ++trace.switches;
            rec.loss_gap = gaps[f];
        } else {
            rec.loss_gap = upsilon;
        }
        const auto& h = cls.members[f];
        const std::size_t a = h.policy[s];
        const auto out = step(env, s, a, rng);
        const Trajectory z{s, a, out.reward, out.next_state};
        tracker->observe(z, f);
        upsilon = tracker->focus_gap();

        const double y = (sol.j_star - out.reward) - comp;
        const double sum = cum_regret + y;
        comp = (sum - cum_regret) - y;
        cum_regret = sum;

        rec.s = s;
        rec.a = a;
        rec.r = out.reward;
        rec.s_next = out.next_state;
        rec.j_selected = h.j;
        rec.tau = tau;
        rec.upsilon = upsilon;
        rec.cum_regret = cum_regret;
        rec.f_index = f;
        if (h.j < sol.j_star - 1e-9) ++trace.optimism_violations;
        trace.steps.push_back(rec);
        s = out.next_state;
    }
    return trace;
}

} // namespace loop
