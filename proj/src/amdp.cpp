#include "loop/amdp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace loop {

namespace {

std::string at(std::size_t s, std::size_t a) {
    std::ostringstream os;
    os << "(s=" << s << ", a=" << a << ")";
    return os.str();
}

} // namespace

TabularAMDP::TabularAMDP(std::size_t n_states, std::size_t n_actions, Matrix transition_table,
                         Matrix reward_table, double span_bound)
    : n_states_(n_states), n_actions_(n_actions), transition_(std::move(transition_table)),
      reward_(std::move(reward_table)), span_bound_(span_bound) {
    if (n_states_ == 0) throw InvalidModel("n_states must be positive");
    if (n_actions_ == 0) throw InvalidModel("n_actions must be positive");
    if (static_cast<std::size_t>(transition_.rows()) != n_pairs() ||
        static_cast<std::size_t>(transition_.cols()) != n_states_)
        throw InvalidModel("transition must have S*A rows and S columns");
    if (static_cast<std::size_t>(reward_.rows()) != n_states_ ||
        static_cast<std::size_t>(reward_.cols()) != n_actions_)
        throw InvalidModel("reward must be S x A");
    if (!std::isfinite(span_bound_) || span_bound_ < 0.0)
        throw InvalidModel("span_bound must be a nonnegative finite number");
    for (std::size_t s = 0; s < n_states_; ++s) {
        for (std::size_t a = 0; a < n_actions_; ++a) {
            double total = 0.0;
            for (std::size_t next = 0; next < n_states_; ++next) {
                const double p = prob(s, a, next);
                if (!std::isfinite(p) || p < 0.0)
                    throw InvalidModel("negative or non-finite transition entry at " + at(s, a) +
                                       " -> s'=" + std::to_string(next));
                total += p;
            }
            if (std::abs(total - 1.0) > 1e-9)
                throw InvalidModel("transition row at " + at(s, a) + " sums to " +
                                   std::to_string(total));
            const double r = reward(s, a);
            if (!std::isfinite(r) || r < -1.0 || r > 1.0)
                throw InvalidModel("reward at " + at(s, a) + " outside [-1, 1]");
        }
    }
}

Matrix TabularAMDP::expect(const Vector& v) const {
    Vector flat = transition_ * v;
    Matrix out(n_states_, n_actions_);
    for (std::size_t s = 0; s < n_states_; ++s)
        for (std::size_t a = 0; a < n_actions_; ++a)
            out(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) =
                flat(static_cast<Eigen::Index>(pair(s, a)));
    return out;
}

TabularAMDP TabularAMDP::with_span_bound(double bound) const {
    return TabularAMDP(n_states_, n_actions_, transition_, reward_, bound);
}

void TabularAMDP::check_state(std::size_t s) const {
    if (s >= n_states_)
        throw IndexOutOfRange("state " + std::to_string(s) + " out of range (n_states=" +
                              std::to_string(n_states_) + ")");
}

void TabularAMDP::check_action(std::size_t a) const {
    if (a >= n_actions_)
        throw IndexOutOfRange("action " + std::to_string(a) + " out of range (n_actions=" +
                              std::to_string(n_actions_) + ")");
}

nlohmann::json to_json(const TabularAMDP& model) {
    nlohmann::json transition = nlohmann::json::array();
    nlohmann::json reward = nlohmann::json::array();
    for (std::size_t s = 0; s < model.n_states(); ++s) {
        nlohmann::json per_action = nlohmann::json::array();
        nlohmann::json rewards = nlohmann::json::array();
        for (std::size_t a = 0; a < model.n_actions(); ++a) {
            auto row = model.row(s, a);
            per_action.push_back(std::vector<double>(row.begin(), row.end()));
            rewards.push_back(model.reward(s, a));
        }
        transition.push_back(std::move(per_action));
        reward.push_back(std::move(rewards));
    }
    return {{"n_states", model.n_states()},
            {"n_actions", model.n_actions()},
            {"transition", std::move(transition)},
            {"reward", std::move(reward)},
            {"span_bound", model.span_bound()}};
}

TabularAMDP amdp_from_json(const nlohmann::json& doc) {
    try {
        const auto n_states = doc.at("n_states").get<std::size_t>();
        const auto n_actions = doc.at("n_actions").get<std::size_t>();
        if (n_states == 0 || n_actions == 0) throw InvalidModel("n_states and n_actions must be positive");
        const auto& tr = doc.at("transition");
        const auto& rw = doc.at("reward");
        if (tr.size() != n_states || rw.size() != n_states)
            throw InvalidModel("transition/reward must have n_states entries");
        Matrix transition(n_states * n_actions, n_states);
        Matrix reward(n_states, n_actions);
        for (std::size_t s = 0; s < n_states; ++s) {
            if (tr[s].size() != n_actions || rw[s].size() != n_actions)
                throw InvalidModel("state " + std::to_string(s) + " must list n_actions entries");
            for (std::size_t a = 0; a < n_actions; ++a) {
                if (tr[s][a].size() != n_states)
                    throw InvalidModel("transition row " + at(s, a) + " must have n_states entries");
                for (std::size_t next = 0; next < n_states; ++next)
                    transition(static_cast<Eigen::Index>(s * n_actions + a),
                               static_cast<Eigen::Index>(next)) = tr[s][a][next].get<double>();
                reward(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) = rw[s][a].get<double>();
            }
        }
        return TabularAMDP(n_states, n_actions, std::move(transition), std::move(reward),
                           doc.at("span_bound").get<double>());
    } catch (const nlohmann::json::exception& e) {
        throw InvalidModel(std::string("malformed instance document: ") + e.what());
    }
}

TabularAMDP load_amdp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open instance file " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidModel("instance file " + path + " is not valid JSON: " + e.what());
    }
    return amdp_from_json(doc);
}

void save_amdp(const TabularAMDP& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << to_json(model).dump(2) << '\n';
}

Vector greedy_values(const Matrix& q) {
    Vector v(q.rows());
    for (Eigen::Index s = 0; s < q.rows(); ++s) v(s) = q.row(s).maxCoeff();
    return v;
}

Policy greedy_policy(const Matrix& q) {
    Policy pi(static_cast<std::size_t>(q.rows()));
    for (Eigen::Index s = 0; s < q.rows(); ++s) {
        Eigen::Index best = 0;
        for (Eigen::Index a = 1; a < q.cols(); ++a)
            if (q(s, a) > q(s, best)) best = a;
        pi[static_cast<std::size_t>(s)] = static_cast<std::size_t>(best);
    }
    return pi;
}

double span(std::span<const double> v) {
    if (v.empty()) throw EmptyVector();
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return *hi - *lo;
}

SolveResult evi_solve(const TabularAMDP& model, double eps, long max_iters) {
    EviOptions options;
    options.eps = eps;
    options.max_iters = max_iters;
    return evi_solve(model, options);
}

SolveResult evi_solve(const TabularAMDP& model, const EviOptions& options) {
    if (!(options.eps > 0.0)) throw ValidationError("evi_solve: eps must be positive");
    if (!(options.aperiodicity > 0.0 && options.aperiodicity <= 1.0))
        throw ValidationError("evi_solve: aperiodicity must lie in (0, 1]");
    const auto S = static_cast<Eigen::Index>(model.n_states());
    const auto A = static_cast<Eigen::Index>(model.n_actions());
    const double tau = options.aperiodicity;
    const Matrix& P = model.transition();
    const Matrix& R = model.reward();

    Vector v = Vector::Zero(S);
    Vector next(S);
    Vector gain(S);
    long iter = 0;
    bool converged = false;
    while (iter < options.max_iters) {
        const Vector pv = P * v;
        for (Eigen::Index s = 0; s < S; ++s) {
            double best = -std::numeric_limits<double>::infinity();
            for (Eigen::Index a = 0; a < A; ++a)
                best = std::max(best, R(s, a) + tau * pv(s * A + a));
            next(s) = best + (1.0 - tau) * v(s);
        }
        gain = next - v;
        ++iter;
        // relative value iteration: pin the minimum to zero to keep iterates bounded
        v = next.array() - next.minCoeff();
        if (gain.maxCoeff() - gain.minCoeff() <= options.eps) {
            converged = true;
            break;
        }
    }
    if (!converged)
        throw NonConvergent("EVI did not reach span(V(i+1) - V(i)) <= " + std::to_string(options.eps) +
                            " within " + std::to_string(options.max_iters) + " iterations");

    SolveResult out;
    out.iterations = iter;
    out.j_star = 0.5 * (gain.maxCoeff() + gain.minCoeff());
    // undo the self-loop scaling: h = tau * h'
    Vector h = tau * v;
    h.array() -= 0.5 * (h.maxCoeff() + h.minCoeff());
    Matrix q = model.expect(h);
    q += R;
    q.array() -= out.j_star;
    Vector vq = greedy_values(q);
    const double mid = 0.5 * (vq.maxCoeff() + vq.minCoeff());
    q.array() -= mid;
    vq.array() -= mid;
    out.q_star = std::move(q);
    out.v_star = std::move(vq);
    out.span = out.v_star.maxCoeff() - out.v_star.minCoeff();

    const Matrix pv = model.expect(out.v_star);
    out.residual = ((out.q_star.array() + out.j_star) - R.array() - pv.array()).abs().maxCoeff();
    return out;
}

Matrix bellman_operator_apply(const TabularAMDP& model, const Matrix& q, double j) {
    if (static_cast<std::size_t>(q.rows()) != model.n_states() ||
        static_cast<std::size_t>(q.cols()) != model.n_actions())
        throw ValidationError("bellman_operator_apply: q must be S x A");
    Matrix out = model.expect(greedy_values(q));
    out += model.reward();
    out.array() -= j;
    return out;
}

Matrix bellman_error_table(const TabularAMDP& model, const Matrix& q, double j) {
    return q - bellman_operator_apply(model, q, j);
}

double bellman_error_eval(const TabularAMDP& model, const Matrix& q, double j, std::size_t s,
                          std::size_t a) {
    model.check_state(s);
    model.check_action(a);
    double pv = 0.0;
    const auto row = model.row(s, a);
    for (std::size_t next = 0; next < row.size(); ++next)
        pv += row[next] * q.row(static_cast<Eigen::Index>(next)).maxCoeff();
    return q(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) - (model.reward(s, a) + pv - j);
}

PolicyGain stationary_average_reward(const TabularAMDP& model, const Policy& policy, double tol) {
    if (policy.size() != model.n_states()) throw ValidationError("policy must have one action per state");
    if (!(tol > 0.0)) throw ValidationError("stationary_average_reward: tol must be positive");
    const auto S = static_cast<Eigen::Index>(model.n_states());
    Matrix chain(S, S);
    Vector rewards(S);
    for (Eigen::Index s = 0; s < S; ++s) {
        const auto a = policy[static_cast<std::size_t>(s)];
        model.check_action(a);
        chain.row(s) = model.transition().row(static_cast<Eigen::Index>(model.pair(static_cast<std::size_t>(s), a)));
        rewards(s) = model.reward(static_cast<std::size_t>(s), a);
    }
    // the lazy chain (I + P)/2 is aperiodic and shares the Cesaro limit of P
    Matrix lazy = 0.5 * (chain + Matrix::Identity(S, S));
    Eigen::RowVectorXd mu = Eigen::RowVectorXd::Constant(S, 1.0 / static_cast<double>(S));
    constexpr long kCap = 2'000'000;
    for (long k = 0; k < kCap; ++k) {
        Eigen::RowVectorXd nxt = mu * lazy;
        const double delta = (nxt - mu).lpNorm<1>();
        mu = std::move(nxt);
        if (delta <= tol) return {mu.dot(rewards), false};
    }
    // slowly mixing chain: fall back to a rollout, accurate to about 1e-3
    Rng rng(0x5eed);
    std::size_t s = 0;
    double total = 0.0;
    constexpr long kRollout = 1'000'000;
    for (long t = 0; t < kRollout; ++t) {
        const auto out = step(model, s, policy[s], rng);
        total += out.reward;
        s = out.next_state;
    }
    return {total / static_cast<double>(kRollout), true};
}

StepOutcome step(const TabularAMDP& model, std::size_t s, std::size_t a, Rng& rng) {
    model.check_state(s);
    model.check_action(a);
    return {model.reward(s, a), rng.categorical(model.row(s, a))};
}

} // namespace loop
