#include "loop/mle_loop.hpp"

#include "engine.hpp"

#include <cmath>
#include <limits>

namespace loop {

namespace {

double log_likelihood_term(const HypothesisClass& cls, std::size_t g, const Trajectory& z) {
    const double p = cls.models.at(g).row(z.s, z.a)[z.s_next];
    return p > 0.0 ? -std::log(p) : std::numeric_limits<double>::infinity();
}

void require_models(const HypothesisClass& cls) {
    if (!cls.model_based()) throw ValidationError("likelihood-based operations need a model class");
}

} // namespace

double mle_loss(const HypothesisClass& cls, const DataBuffer& buffer, std::size_t g) {
    require_models(cls);
    double total = 0.0;
    for (const auto& rec : buffer.records()) total += log_likelihood_term(cls, g, rec.zeta);
    return total;
}

double mle_loss_strict(const HypothesisClass& cls, const DataBuffer& buffer, std::size_t g) {
    require_models(cls);
    double total = 0.0;
    for (const auto& rec : buffer.records()) {
        const double term = log_likelihood_term(cls, g, rec.zeta);
        if (std::isinf(term))
            throw ZeroLikelihood("hypothesis " + std::to_string(g) + " gives zero probability to (s=" +
                                 std::to_string(rec.zeta.s) + ", a=" + std::to_string(rec.zeta.a) +
                                 ") -> s'=" + std::to_string(rec.zeta.s_next));
        total += term;
    }
    return total;
}

double tv_trigger(const HypothesisClass& cls, const DataBuffer& buffer, std::size_t f, std::size_t g) {
    require_models(cls);
    double total = 0.0;
    for (const auto& rec : buffer.records())
        total += tv_distance(cls.models.at(f).row(rec.zeta.s, rec.zeta.a), cls.models.at(g).row(rec.zeta.s, rec.zeta.a));
    return total;
}

bool mle_should_update(double upsilon_prev, double beta, std::size_t t) {
    if (t == 0) throw ValidationError("steps are numbered from 1");
    return t == 1 || upsilon_prev >= 3.0 * std::sqrt(beta * static_cast<double>(t));
}

double mle_beta_schedule(double horizon, double delta, double bracket_count, double span_bound, double c_beta) {
    if (!(horizon > 0 && delta > 0 && delta < 1 && bracket_count > 0 && c_beta > 0))
        throw ValidationError("mle_beta_schedule: arguments must be positive and delta in (0, 1)");
    return c_beta * std::log(horizon * bracket_count / delta) * span_bound;
}

std::size_t BracketSet::cover(std::span<const double> p) const {
    if (p.size() != n_outcomes) throw ValidationError("row length differs from the bracket outcome count");
    for (std::size_t i = 0; i < uppers.size(); ++i) {
        double width = 0.0;
        bool above = true;
        for (std::size_t k = 0; k < n_outcomes && above; ++k) {
            above = uppers[i][k] >= p[k] - 1e-12;
            width += uppers[i][k] - p[k];
        }
        if (above && width <= rho + 1e-12) return i;
    }
    return kNoIndex;
}

std::vector<double> BracketSet::normalized(std::size_t i) const {
    std::vector<double> out = uppers.at(i);
    double total = 0.0;
    for (double x : out) total += x;
    for (double& x : out) x /= total;
    return out;
}

std::size_t simplex_grid_count(std::size_t n, std::size_t m) {
    // C(m + n - 1, n - 1)
    double c = 1.0;
    for (std::size_t i = 1; i < n; ++i) c = c * static_cast<double>(m + i) / static_cast<double>(i);
    return static_cast<std::size_t>(std::llround(c));
}

BracketSet bracket_cover(std::size_t n, double grid_step, double rho, std::size_t max_brackets) {
    if (n == 0) throw ValidationError("rows need at least one outcome");
    if (!(rho > 0.0)) throw ValidationError("bracket radius rho must be positive");
    if (!(grid_step > 0.0 && grid_step <= 1.0)) throw ValidationError("grid step must lie in (0, 1]");
    const double inv = 1.0 / grid_step;
    const auto m = static_cast<std::size_t>(std::llround(inv));
    if (std::abs(inv - static_cast<double>(m)) > 1e-9) throw ValidationError("grid step must divide 1");

    BracketSet out;
    out.n_outcomes = n;
    out.rho = rho;
    // every row lies below the all-ones function at L1 distance n - 1
    if (n == 1 || rho >= static_cast<double>(n) - 1.0) {
        out.uppers.push_back(std::vector<double>(n, 1.0));
        return out;
    }
    const double limit = n == 2 ? rho : rho / static_cast<double>(n);
    std::size_t k = 0;
    for (std::size_t cand = m; cand >= 1; --cand)
        if (m % cand == 0 && static_cast<double>(cand) / static_cast<double>(m) <= limit + 1e-12) {
            k = cand;
            break;
        }
    if (k == 0) throw ValidationError("grid step too coarse for bracket radius " + format_double(rho));
    const std::size_t mb = m / k;
    const double h = 1.0 / static_cast<double>(mb);
    const std::size_t count = simplex_grid_count(n, mb);
    if (count > max_brackets)
        throw LatticeTooLarge("bracket cover would have " + std::to_string(count) + " members, cap is " +
                              std::to_string(max_brackets));
    out.step = h;
    const double shift = n == 2 ? 0.5 * h : h;
    out.uppers.reserve(count);
    // compositions of mb into n parts, lexicographic
    std::vector<std::size_t> parts(n, 0);
    parts[n - 1] = mb;
    for (;;) {
        std::vector<double> u(n);
        for (std::size_t i = 0; i < n; ++i) u[i] = static_cast<double>(parts[i]) * h + shift;
        out.uppers.push_back(std::move(u));
        // next composition: move one unit leftward from the last nonzero tail
        std::size_t i = n - 1;
        while (i > 0 && parts[i] == 0) --i;
        if (i == 0) break;
        const std::size_t tail = parts[i];
        parts[i] = 0;
        parts[i - 1] += 1;
        parts[n - 1] = tail - 1;
    }
    return out;
}

RunTrace run_mle_loop(const TabularAMDP& env, const HypothesisClass& cls, const MleConfig& config) {
    config.validate();
    require_models(cls);
    if (cls.n_states() != env.n_states() || cls.n_actions() != env.n_actions())
        throw ValidationError("class and environment disagree on state/action counts");
    env.check_state(config.initial_state);

    const auto sol = evi_solve(env);
    RunTrace trace;
    trace.agent = "mle-loop";
    trace.seed = config.seed;
    trace.j_star = sol.j_star;
    trace.has_g_index = true;
    // a finite class is its own bracket at any radius
    trace.beta = config.beta ? *config.beta
                             : mle_beta_schedule(static_cast<double>(config.horizon), config.delta,
                                                 static_cast<double>(cls.size()), env.span_bound(), config.c_beta);
    trace.steps.reserve(config.horizon);

    auto tracker = detail::make_likelihood_tracker(cls);
    const std::size_t SA = env.n_pairs();
    Rng rng(config.seed);
    std::size_t s = config.initial_state;
    std::size_t f = 0;
    std::size_t g = 0;
    std::size_t tau = 0;
    double upsilon = 0.0;
    double cum_regret = 0.0;
    double comp = 0.0;
    std::vector<double> tv(SA, 0.0);
    std::vector<double> visits(SA, 0.0);

    for (std::size_t t = 1; t <= config.horizon; ++t) {
        if (config.cancel && config.cancel->load(std::memory_order_relaxed)) throw Interrupted(std::move(trace));
        StepRecord rec;
        rec.t = t;
        if (mle_should_update(upsilon, trace.beta, t)) {
            const auto gaps = tracker->gaps();
            std::vector<std::size_t> candidates;
            for (std::size_t i = 0; i < gaps.size(); ++i)
                if (gaps[i] <= trace.beta) candidates.push_back(i);
            if (candidates.empty())
                throw EmptyConfidenceSet("confidence set empty at t = " + std::to_string(t) +
                                         " (beta = " + format_double(trace.beta) + ")");
            f = optimistic_select(candidates, cls);
            tracker->focus(f);
            g = tracker->focus_argmin();
            for (std::size_t sa = 0; sa < SA; ++sa)
                tv[sa] = tv_distance(cls.models[f].row(sa / env.n_actions(), sa % env.n_actions()),
                                     cls.models[g].row(sa / env.n_actions(), sa % env.n_actions()));
            upsilon = 0.0;
            for (std::size_t sa = 0; sa < SA; ++sa) upsilon += visits[sa] * tv[sa];
            tau = t;
            rec.switched = true;
            ++trace.switches;
            rec.loss_gap = gaps[f];
        } else {
            rec.loss_gap = tracker->focus_gap();
        }
        const auto& h = cls.members[f];
        const std::size_t a = h.policy[s];
        const auto out = step(env, s, a, rng);
        const Trajectory z{s, a, out.reward, out.next_state};
        tracker->observe(z, f);
        const std::size_t sa = env.pair(s, a);
        visits[sa] += 1.0;
        upsilon += tv[sa];

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
        rec.g_index = g;
        if (h.j < sol.j_star - 1e-9) ++trace.optimism_violations;
        trace.steps.push_back(rec);
        s = out.next_state;
    }
    return trace;
}

} // namespace loop
