#include "loop/envgen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace loop {

namespace {

constexpr int kMaxAttempts = 1000;

Eigen::Index ix(std::size_t i) { return static_cast<Eigen::Index>(i); }

std::vector<double> dirichlet(Rng& rng, std::size_t n, double alpha) {
    std::vector<double> x(n);
    double total = 0.0;
    for (auto& v : x) {
        v = rng.gamma(alpha);
        total += v;
    }
    if (total <= 0.0) {
        std::fill(x.begin(), x.end(), 1.0 / static_cast<double>(n));
        return x;
    }
    for (auto& v : x) v /= total;
    return x;
}

// Probability row over n outcomes supported on a random subset, floored.
std::vector<double> random_row(Rng& rng, std::size_t n, double floor) {
    const std::size_t support = 1 + rng.below(n);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = 0; i < support; ++i) std::swap(order[i], order[i + rng.below(n - i)]);
    const auto w = dirichlet(rng, support, 1.0);
    std::vector<double> row(n, 0.0);
    for (std::size_t i = 0; i < support; ++i) row[order[i]] = w[i];
    if (floor > 0.0) {
        double total = 0.0;
        for (auto& v : row) {
            v = std::max(v, floor);
            total += v;
        }
        for (auto& v : row) v /= total;
    }
    return row;
}

bool strongly_connected(const Matrix& p, std::size_t S, std::size_t A) {
    auto reach = [&](bool forward) {
        std::vector<bool> seen(S, false);
        std::vector<std::size_t> stack{0};
        seen[0] = true;
        while (!stack.empty()) {
            const auto u = stack.back();
            stack.pop_back();
            for (std::size_t w = 0; w < S; ++w) {
                if (seen[w]) continue;
                bool edge = false;
                for (std::size_t a = 0; a < A && !edge; ++a)
                    edge = forward ? p(ix(u * A + a), ix(w)) > 0.0 : p(ix(w * A + a), ix(u)) > 0.0;
                if (edge) {
                    seen[w] = true;
                    stack.push_back(w);
                }
            }
        }
        return std::all_of(seen.begin(), seen.end(), [](bool b) { return b; });
    };
    return reach(true) && reach(false);
}

TabularAMDP with_measured_span(const TabularAMDP& m) {
    const auto sol = evi_solve(m);
    return m.with_span_bound(1.1 * sol.span);
}

Vector unit_ball_point(Rng& rng, std::size_t d) {
    Vector x(ix(d));
    do {
        for (std::size_t i = 0; i < d; ++i) x(ix(i)) = rng.uniform(-1.0, 1.0);
    } while (x.norm() > 1.0);
    return x;
}

nlohmann::json matrix_json(const Matrix& m) {
    nlohmann::json out = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        std::vector<double> row(m.row(i).data(), m.row(i).data() + m.cols());
        out.push_back(row);
    }
    return out;
}

Matrix matrix_from_json(const nlohmann::json& doc) {
    const auto rows = doc.size();
    const auto cols = rows == 0 ? 0 : doc.at(0).size();
    Matrix m(ix(rows), ix(cols));
    for (std::size_t i = 0; i < rows; ++i) {
        if (doc[i].size() != cols) throw ValidationError("ragged matrix in features section");
        for (std::size_t j = 0; j < cols; ++j) m(ix(i), ix(j)) = doc[i][j].get<double>();
    }
    return m;
}

Vector vector_from_json(const nlohmann::json& doc) {
    Vector v(ix(doc.size()));
    for (std::size_t i = 0; i < doc.size(); ++i) v(ix(i)) = doc[i].get<double>();
    return v;
}

} // namespace

std::string to_string(InstanceKind kind) {
    switch (kind) {
    case InstanceKind::TabularRandom: return "tabular-random";
    case InstanceKind::TwoStateCycle: return "two-state-cycle";
    case InstanceKind::LinearAmdp: return "linear-amdp";
    case InstanceKind::LinearMixture: return "linear-mixture";
    }
    return "?";
}

InstanceKind parse_instance_kind(const std::string& text) {
    for (auto k : {InstanceKind::TabularRandom, InstanceKind::TwoStateCycle, InstanceKind::LinearAmdp,
                   InstanceKind::LinearMixture})
        if (to_string(k) == text) return k;
    throw ConfigError("unknown instance kind '" + text + "'");
}

void InstanceSpec::validate() const {
    if (n_states == 0 || n_actions == 0) throw ValidationError("n_states and n_actions must be positive");
    if (!(reward_min >= -1.0 && reward_max <= 1.0 && reward_min <= reward_max))
        throw ValidationError("reward range must satisfy -1 <= min <= max <= 1");
    if (!(mixing_floor >= 0.0) || mixing_floor * static_cast<double>(n_states) > 1.0)
        throw ValidationError("mixing_floor must lie in [0, 1/n_states]");
    if (kind == InstanceKind::LinearAmdp && feature_dim < 2)
        throw ValidationError("linear-amdp instances need feature_dim >= 2");
    if (kind == InstanceKind::LinearMixture && feature_dim < 1)
        throw ValidationError("linear-mixture instances need feature_dim >= 1");
    if ((kind == InstanceKind::LinearAmdp || kind == InstanceKind::LinearMixture) &&
        (n_states > 16 || n_actions > 16))
        throw ValidationError("linear instances are limited to 16 states and 16 actions");
}

TabularAMDP random_communicating_tabular(const InstanceSpec& spec) {
    spec.validate();
    const auto S = spec.n_states;
    const auto A = spec.n_actions;
    Rng rng(spec.seed);
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        Matrix p(ix(S * A), ix(S));
        for (std::size_t i = 0; i < S * A; ++i) {
            const auto row = random_row(rng, S, spec.mixing_floor);
            for (std::size_t n = 0; n < S; ++n) p(ix(i), ix(n)) = row[n];
        }
        Matrix r(ix(S), ix(A));
        for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = rng.uniform(spec.reward_min, spec.reward_max);
        if (!strongly_connected(p, S, A)) continue;
        return with_measured_span(TabularAMDP(S, A, std::move(p), std::move(r), 0.0));
    }
    throw GenerationFailed("no strongly connected instance after " + std::to_string(kMaxAttempts) + " draws");
}

TabularAMDP two_state_cycle() {
    Matrix p(2, 2);
    p << 0, 1, 1, 0;
    Matrix r(2, 1);
    r << 1, 0;
    return TabularAMDP(2, 1, std::move(p), std::move(r), 0.55);
}

TabularAMDP materialize_linear_amdp(const LinearAmdpFeatures& f, std::size_t S, std::size_t A, double span_bound) {
    if (f.phi.rows() != ix(S * A) || f.mu.rows() != f.phi.cols() || f.mu.cols() != ix(S) ||
        f.theta.size() != f.phi.cols())
        throw FeatureDimensionMismatch("linear AMDP feature shapes disagree");
    Matrix p = f.phi * f.mu;
    Vector flat = f.phi * f.theta;
    Matrix r = Eigen::Map<const Matrix>(flat.data(), ix(S), ix(A));
    return TabularAMDP(S, A, std::move(p), std::move(r), span_bound);
}

LinearAmdpInstance linear_amdp_instance(const InstanceSpec& spec) {
    spec.validate();
    const auto S = spec.n_states;
    const auto A = spec.n_actions;
    const auto d = spec.feature_dim;
    Rng rng(spec.seed);
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        LinearAmdpFeatures f;
        f.phi = Matrix(ix(S * A), ix(d));
        for (std::size_t i = 0; i < S * A; ++i) {
            f.phi(ix(i), 0) = 1.0;
            f.phi.row(ix(i)).tail(ix(d - 1)) = unit_ball_point(rng, d - 1).transpose();
        }
        // mu_1 is a base kernel row; the others are scaled differences of rows
        f.mu = Matrix::Zero(ix(d), ix(S));
        const auto base = random_row(rng, S, std::max(spec.mixing_floor, 0.5 / static_cast<double>(S)));
        for (std::size_t n = 0; n < S; ++n) f.mu(0, ix(n)) = base[n];
        for (std::size_t k = 1; k < d; ++k) {
            const auto a = dirichlet(rng, S, 1.0);
            const auto b = dirichlet(rng, S, 1.0);
            for (std::size_t n = 0; n < S; ++n) f.mu(ix(k), ix(n)) = a[n] - b[n];
        }
        // shrink the signed part until every row is a kernel
        double scale = 1.0;
        Matrix p;
        for (int shrink = 0; shrink < 60; ++shrink) {
            Matrix mu = f.mu;
            mu.bottomRows(ix(d - 1)) *= scale;
            p = f.phi * mu;
            if (p.minCoeff() >= 0.0) {
                f.mu = mu;
                break;
            }
            scale *= 0.5;
        }
        if (p.minCoeff() < 0.0) continue;
        f.theta = Vector::Zero(ix(d));
        const double lo = spec.reward_min;
        const double hi = spec.reward_max;
        const double half = 0.5 * (hi - lo);
        f.theta(0) = 0.5 * (lo + hi);
        f.theta.tail(ix(d - 1)) = half * unit_ball_point(rng, d - 1);
        try {
            auto model = materialize_linear_amdp(f, S, A, 0.0);
            if (model.reward().minCoeff() < lo - 1e-12 || model.reward().maxCoeff() > hi + 1e-12) continue;
            if (!strongly_connected(model.transition(), S, A)) continue;
            return {with_measured_span(model), std::move(f)};
        } catch (const InvalidModel&) {
            continue;
        }
    }
    throw GenerationFailed("no valid linear AMDP after " + std::to_string(kMaxAttempts) + " draws");
}

Vector linear_q_parameter(const LinearAmdpFeatures& f, const SolveResult& sol) {
    Vector omega = f.theta + f.mu * sol.v_star;
    omega(0) -= sol.j_star;
    return omega;
}

LinearMixtureInstance linear_mixture_instance(const InstanceSpec& spec) {
    spec.validate();
    const auto S = spec.n_states;
    const auto A = spec.n_actions;
    const auto d = spec.feature_dim;
    Rng rng(spec.seed);
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        auto feats = std::make_shared<LinearMixtureFeatures>();
        feats->n_states = S;
        feats->n_actions = A;
        feats->dim = d;
        feats->phi = Matrix(ix(S * A * S), ix(d));
        feats->psi = Matrix(ix(S * A), ix(d));
        for (std::size_t k = 0; k < d; ++k) {
            for (std::size_t i = 0; i < S * A; ++i) {
                const auto row = random_row(rng, S, spec.mixing_floor);
                for (std::size_t n = 0; n < S; ++n) feats->phi(ix(i * S + n), ix(k)) = row[n];
                feats->psi(ix(i), ix(k)) = rng.uniform(spec.reward_min, spec.reward_max);
            }
        }
        Vector theta(ix(d));
        const auto w = dirichlet(rng, d, 1.0);
        for (std::size_t k = 0; k < d; ++k) theta(ix(k)) = w[k];
        try {
            TabularAMDP model(S, A, feats->transition_for(theta), feats->reward_for(theta), 0.0);
            if (!strongly_connected(model.transition(), S, A)) continue;
            return {with_measured_span(model), std::move(feats), std::move(theta)};
        } catch (const InvalidModel&) {
            continue;
        }
    }
    throw GenerationFailed("no valid linear mixture after " + std::to_string(kMaxAttempts) + " draws");
}

TabularAMDP generate_instance(const InstanceSpec& spec) {
    switch (spec.kind) {
    case InstanceKind::TabularRandom: return random_communicating_tabular(spec);
    case InstanceKind::TwoStateCycle: return two_state_cycle();
    case InstanceKind::LinearAmdp: return linear_amdp_instance(spec).model;
    case InstanceKind::LinearMixture: return linear_mixture_instance(spec).model;
    }
    throw ValidationError("unknown instance kind");
}

nlohmann::json to_json(const LinearAmdpInstance& inst) {
    auto doc = to_json(inst.model);
    doc["features"] = {{"kind", "linear-amdp"},
                       {"phi", matrix_json(inst.features.phi)},
                       {"mu", matrix_json(inst.features.mu)},
                       {"theta", std::vector<double>(inst.features.theta.data(),
                                                     inst.features.theta.data() + inst.features.theta.size())}};
    return doc;
}

nlohmann::json to_json(const LinearMixtureInstance& inst) {
    auto doc = to_json(inst.model);
    doc["features"] = {{"kind", "linear-mixture"},
                       {"dim", inst.features->dim},
                       {"phi", matrix_json(inst.features->phi)},
                       {"psi", matrix_json(inst.features->psi)},
                       {"theta", std::vector<double>(inst.theta.data(), inst.theta.data() + inst.theta.size())}};
    return doc;
}

LinearAmdpInstance linear_amdp_from_json(const nlohmann::json& doc) {
    try {
        const auto& f = doc.at("features");
        LinearAmdpFeatures feats{matrix_from_json(f.at("phi")), matrix_from_json(f.at("mu")),
                                 vector_from_json(f.at("theta"))};
        return {amdp_from_json(doc), std::move(feats)};
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed linear-amdp features: ") + e.what());
    }
}

LinearMixtureInstance linear_mixture_from_json(const nlohmann::json& doc) {
    try {
        auto model = amdp_from_json(doc);
        const auto& f = doc.at("features");
        auto feats = std::make_shared<LinearMixtureFeatures>();
        feats->n_states = model.n_states();
        feats->n_actions = model.n_actions();
        feats->phi = matrix_from_json(f.at("phi"));
        feats->psi = matrix_from_json(f.at("psi"));
        feats->dim = static_cast<std::size_t>(feats->phi.cols());
        return {std::move(model), std::move(feats), vector_from_json(f.at("theta"))};
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed linear-mixture features: ") + e.what());
    }
}

} // namespace loop
