#include "loop/hypothesis.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace loop {

ValueHypothesis ValueHypothesis::make(Matrix q, double j) {
    if (q.size() == 0) throw ValidationError("value hypothesis needs a nonempty q table");
    if (!std::isfinite(j) || std::abs(j) > 1.0 + 1e-12)
        throw ValidationError("value hypothesis J must lie in [-1, 1]");
    if (!q.allFinite()) throw ValidationError("value hypothesis q must be finite");
    ValueHypothesis h;
    h.v = greedy_values(q);
    h.policy = greedy_policy(q);
    h.q = std::move(q);
    h.j = j;
    return h;
}

Matrix LinearMixtureFeatures::transition_for(const Vector& theta) const {
    if (static_cast<std::size_t>(theta.size()) != dim)
        throw FeatureDimensionMismatch("theta has dimension " + std::to_string(theta.size()) +
                                       ", features have " + std::to_string(dim));
    Vector flat = phi * theta;
    return Eigen::Map<const Matrix>(flat.data(), static_cast<Eigen::Index>(n_states * n_actions),
                                    static_cast<Eigen::Index>(n_states));
}

Matrix LinearMixtureFeatures::reward_for(const Vector& theta) const {
    if (static_cast<std::size_t>(theta.size()) != dim)
        throw FeatureDimensionMismatch("theta has dimension " + std::to_string(theta.size()) +
                                       ", features have " + std::to_string(dim));
    Vector flat = psi * theta;
    return Eigen::Map<const Matrix>(flat.data(), static_cast<Eigen::Index>(n_states),
                                    static_cast<Eigen::Index>(n_actions));
}

Vector LinearMixtureFeatures::regression_feature(std::size_t s, std::size_t a, const Vector& v) const {
    if (static_cast<std::size_t>(v.size()) != n_states)
        throw FeatureDimensionMismatch("value vector does not match n_states");
    const auto sa = static_cast<Eigen::Index>(s * n_actions + a);
    const auto base = sa * static_cast<Eigen::Index>(n_states);
    Vector x = psi.row(sa).transpose();
    x += phi.middleRows(base, static_cast<Eigen::Index>(n_states)).transpose() * v;
    return x;
}

ModelHypothesis ModelHypothesis::make(Vector theta, Matrix transition, Matrix reward, double span_bound) {
    const auto S = static_cast<std::size_t>(transition.cols());
    const auto A = static_cast<std::size_t>(reward.cols());
    TabularAMDP induced_model(S, A, transition, reward, span_bound);
    const auto sol = evi_solve(induced_model);
    ModelHypothesis m;
    m.theta = std::move(theta);
    m.transition = std::move(transition);
    m.reward = std::move(reward);
    m.induced = ValueHypothesis::make(sol.q_star, sol.j_star);
    m.solve_residual = sol.residual;
    return m;
}

std::string to_string(ClassKind kind) {
    switch (kind) {
    case ClassKind::ExplicitFinite: return "explicit-finite";
    case ClassKind::TabularLattice: return "tabular-lattice";
    case ClassKind::LinearAmdpLattice: return "linear-amdp-lattice";
    case ClassKind::LinearMixtureLattice: return "linear-mixture-lattice";
    }
    return "?";
}

std::string to_string(DiscrepancyKind kind) {
    switch (kind) {
    case DiscrepancyKind::Bellman: return "bellman";
    case DiscrepancyKind::ModelBased: return "model-based";
    case DiscrepancyKind::Mle: return "mle";
    }
    return "?";
}

std::string to_string(CompletionOperator op) {
    return op == CompletionOperator::BellmanOperator ? "bellman-operator" : "project-to-truth";
}

ClassKind parse_class_kind(const std::string& text) {
    for (auto k : {ClassKind::ExplicitFinite, ClassKind::TabularLattice, ClassKind::LinearAmdpLattice,
                   ClassKind::LinearMixtureLattice})
        if (to_string(k) == text) return k;
    throw ConfigError("unknown class kind '" + text + "'");
}

DiscrepancyKind parse_discrepancy_kind(const std::string& text) {
    for (auto k : {DiscrepancyKind::Bellman, DiscrepancyKind::ModelBased, DiscrepancyKind::Mle})
        if (to_string(k) == text) return k;
    throw ConfigError("unknown discrepancy kind '" + text + "'");
}

CompletionOperator parse_completion(const std::string& text) {
    if (text == "bellman-operator") return CompletionOperator::BellmanOperator;
    if (text == "project-to-truth") return CompletionOperator::ProjectToTruth;
    throw ConfigError("unknown completion operator '" + text + "'");
}

std::size_t HypothesisClass::cover_size() const {
    if (model_based()) return models.size();
    // members are the leading entries of the auxiliary list
    return std::max(members.size(), auxiliary.size());
}

namespace {

double at(const Matrix& m, std::size_t r, std::size_t c) {
    return m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

double atv(const Vector& v, std::size_t i) { return v(static_cast<Eigen::Index>(i)); }

} // namespace

double bellman_discrepancy(const ValueHypothesis& f, const ValueHypothesis& g, const Trajectory& zeta) {
    return at(g.q, zeta.s, zeta.a) - zeta.r - atv(f.v, zeta.s_next) + g.j;
}

double model_discrepancy(const Vector& v_fprime, const ModelHypothesis& g, const LinearMixtureFeatures& features,
                         const Trajectory& zeta) {
    if (static_cast<std::size_t>(g.theta.size()) != features.dim)
        throw FeatureDimensionMismatch("theta_g has dimension " + std::to_string(g.theta.size()) +
                                       ", features have " + std::to_string(features.dim));
    const Vector x = features.regression_feature(zeta.s, zeta.a, v_fprime);
    return g.theta.dot(x) - zeta.r - atv(v_fprime, zeta.s_next);
}

double model_discrepancy(const Vector& v_fprime, const ModelHypothesis& g, const Trajectory& zeta) {
    const auto row = g.row(zeta.s, zeta.a);
    double pv = 0.0;
    for (std::size_t n = 0; n < row.size(); ++n) pv += row[n] * atv(v_fprime, n);
    return at(g.reward, zeta.s, zeta.a) + pv - zeta.r - atv(v_fprime, zeta.s_next);
}

double mle_discrepancy(std::span<const double> g_row, std::span<const double> truth_row, std::size_t next) {
    if (next >= truth_row.size() || g_row.size() != truth_row.size())
        throw IndexOutOfRange("mle_discrepancy: outcome index out of range");
    const double p = truth_row[next];
    if (!(p > 0.0))
        throw DivisionByZeroSupport("true kernel assigns zero mass to s'=" + std::to_string(next));
    return 0.5 * std::abs(g_row[next] / p - 1.0);
}

double mle_discrepancy(const ModelHypothesis& g, const TabularAMDP& truth, const Trajectory& zeta) {
    return mle_discrepancy(g.row(zeta.s, zeta.a), truth.row(zeta.s, zeta.a), zeta.s_next);
}

double tv_distance(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw ValidationError("tv_distance: rows differ in length");
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) total += std::abs(p[i] - q[i]);
    return 0.5 * total;
}

double discrepancy(const HypothesisClass& cls, std::size_t f_prime, std::size_t f, std::size_t g,
                   const Trajectory& zeta, const TabularAMDP* truth) {
    switch (cls.discrepancy) {
    case DiscrepancyKind::Bellman: {
        const auto& gs = cls.model_based() ? cls.members : cls.auxiliary;
        return bellman_discrepancy(cls.members.at(f), gs.at(g), zeta);
    }
    case DiscrepancyKind::ModelBased:
        if (!cls.model_based()) throw ValidationError("model-based discrepancy needs a model class");
        return model_discrepancy(cls.members.at(f_prime).v, cls.models.at(g), zeta);
    case DiscrepancyKind::Mle:
        if (!cls.model_based()) throw ValidationError("mle discrepancy needs a model class");
        if (truth == nullptr) throw ValidationError("mle discrepancy needs the true model");
        return mle_discrepancy(cls.models.at(g), *truth, zeta);
    }
    return 0.0;
}

double expected_discrepancy(const TabularAMDP& model, const HypothesisClass& cls, std::size_t f_prime,
                            std::size_t f, std::size_t g, std::size_t s, std::size_t a) {
    model.check_state(s);
    model.check_action(a);
    const auto row = model.row(s, a);
    double total = 0.0;
    for (std::size_t n = 0; n < row.size(); ++n) {
        if (row[n] == 0.0) continue;
        total += row[n] * discrepancy(cls, f_prime, f, g, {s, a, model.reward(s, a), n}, &model);
    }
    return total;
}

ValueHypothesis bellman_image(const TabularAMDP& model, const ValueHypothesis& f) {
    return ValueHypothesis::make(bellman_operator_apply(model, f.q, f.j), f.j);
}

namespace {

double expected_value_discrepancy(const TabularAMDP& model, const ValueDiscrepancy& l, const ValueHypothesis& f,
                                  const ValueHypothesis& g, std::size_t s, std::size_t a) {
    const auto row = model.row(s, a);
    double total = 0.0;
    for (std::size_t n = 0; n < row.size(); ++n)
        if (row[n] != 0.0) total += row[n] * l(f, g, {s, a, model.reward(s, a), n});
    return total;
}

} // namespace

double completeness_residual(const TabularAMDP& model, const std::vector<ValueHypothesis>& hs,
                             const std::vector<ValueHypothesis>& gs, std::span<const Trajectory> samples,
                             const ValueDiscrepancy& l) {
    double worst = 0.0;
    for (const auto& f : hs) {
        const auto tf = bellman_image(model, f);
        for (const auto& g : gs)
            for (const auto& z : samples) {
                const double lhs = l(f, g, z) - l(f, tf, z);
                const double e = expected_value_discrepancy(model, l, f, g, z.s, z.a);
                worst = std::max(worst, std::abs(lhs - e));
            }
    }
    return worst;
}

double completeness_residual(const TabularAMDP& model, const HypothesisClass& cls,
                             std::span<const Trajectory> samples) {
    const auto sol = evi_solve(model);
    if (cls.discrepancy == DiscrepancyKind::Bellman && !cls.model_based()) {
        if (cls.completion == CompletionOperator::BellmanOperator)
            return completeness_residual(model, cls.members, cls.auxiliary, samples, bellman_discrepancy);
        const auto star = ValueHypothesis::make(sol.q_star, sol.j_star);
        double worst = 0.0;
        for (const auto& f : cls.members)
            for (const auto& g : cls.auxiliary)
                for (const auto& z : samples) {
                    const double lhs = bellman_discrepancy(f, g, z) - bellman_discrepancy(f, star, z);
                    const double e = expected_value_discrepancy(model, bellman_discrepancy, f, g, z.s, z.a);
                    worst = std::max(worst, std::abs(lhs - e));
                }
        return worst;
    }
    if (!cls.model_based()) throw ValidationError("model discrepancies need a model class");

    // completion maps every f to the true model
    const auto star = ModelHypothesis{Vector(), model.transition(), model.reward(),
                                      ValueHypothesis::make(sol.q_star, sol.j_star), sol.residual};
    double worst = 0.0;
    for (std::size_t f = 0; f < cls.size(); ++f)
        for (std::size_t g = 0; g < cls.aux_size(); ++g)
            for (const auto& z : samples) {
                double lhs = 0.0;
                double e = 0.0;
                if (cls.discrepancy == DiscrepancyKind::ModelBased) {
                    const auto& v = cls.members[f].v;
                    lhs = model_discrepancy(v, cls.models[g], z) - model_discrepancy(v, star, z);
                    e = expected_discrepancy(model, cls, f, f, g, z.s, z.a);
                } else {
                    lhs = mle_discrepancy(cls.models[g], model, z) - mle_discrepancy(star, model, z);
                    e = expected_discrepancy(model, cls, f, f, g, z.s, z.a);
                }
                worst = std::max(worst, std::abs(lhs - e));
            }
    return worst;
}

double max_abs_discrepancy(const HypothesisClass& cls, std::span<const Trajectory> samples,
                           const TabularAMDP* truth) {
    double worst = 0.0;
    // only the indices each discrepancy actually reads are swept
    const std::size_t nf = cls.size();
    const std::size_t ng = cls.aux_size();
    for (const auto& z : samples) {
        switch (cls.discrepancy) {
        case DiscrepancyKind::Bellman:
            for (std::size_t f = 0; f < nf; ++f)
                for (std::size_t g = 0; g < ng; ++g)
                    worst = std::max(worst, std::abs(discrepancy(cls, f, f, g, z, truth)));
            break;
        case DiscrepancyKind::ModelBased:
            for (std::size_t fp = 0; fp < nf; ++fp)
                for (std::size_t g = 0; g < ng; ++g)
                    worst = std::max(worst, std::abs(discrepancy(cls, fp, fp, g, z, truth)));
            break;
        case DiscrepancyKind::Mle:
            for (std::size_t g = 0; g < ng; ++g)
                worst = std::max(worst, std::abs(discrepancy(cls, 0, 0, g, z, truth)));
            break;
        }
    }
    return worst;
}

HypothesisClass make_value_class(std::vector<ValueHypothesis> members, ClassKind kind) {
    if (members.empty()) throw ValidationError("hypothesis class must have at least one member");
    const auto rows = members.front().q.rows();
    const auto cols = members.front().q.cols();
    for (std::size_t i = 0; i < members.size(); ++i)
        if (members[i].q.rows() != rows || members[i].q.cols() != cols)
            throw ValidationError("member " + std::to_string(i) + " has a q table of a different shape");
    HypothesisClass cls;
    cls.kind = kind;
    cls.discrepancy = DiscrepancyKind::Bellman;
    cls.completion = CompletionOperator::BellmanOperator;
    cls.auxiliary = members;
    cls.members = std::move(members);
    return cls;
}

void add_bellman_images(HypothesisClass& cls, const TabularAMDP& truth) {
    if (cls.model_based()) throw ValidationError("Bellman images apply to value classes only");
    // the Bellman loss reads g only through Q_g + J_g, so entries sharing
    // that table are interchangeable inside min_g
    std::map<std::vector<double>, std::size_t> seen;
    auto key_of = [](const ValueHypothesis& h) {
        // (Q - J) + J may differ from Q in the last bit; compare at 1e-12
        std::vector<double> key(h.q.data(), h.q.data() + h.q.size());
        for (auto& x : key) x = std::nearbyint((x + h.j) * 1e12);
        return key;
    };
    for (std::size_t i = 0; i < cls.auxiliary.size(); ++i) seen.emplace(key_of(cls.auxiliary[i]), i);
    const std::size_t n = cls.members.size();
    for (std::size_t i = 0; i < n; ++i) {
        auto image = bellman_image(truth, cls.members[i]);
        if (seen.emplace(key_of(image), cls.auxiliary.size()).second) cls.auxiliary.push_back(std::move(image));
    }
}

HypothesisClass make_model_class(std::vector<ModelHypothesis> models, DiscrepancyKind discrepancy,
                                 std::shared_ptr<const LinearMixtureFeatures> features) {
    if (models.empty()) throw ValidationError("hypothesis class must have at least one member");
    HypothesisClass cls;
    cls.kind = features ? ClassKind::LinearMixtureLattice : ClassKind::ExplicitFinite;
    cls.discrepancy = discrepancy;
    cls.completion = CompletionOperator::ProjectToTruth;
    cls.features = std::move(features);
    cls.members.reserve(models.size());
    for (const auto& m : models) cls.members.push_back(m.induced);
    cls.models = std::move(models);
    return cls;
}

std::optional<std::size_t> find_truth(const HypothesisClass& cls, const SolveResult& truth, double tol) {
    for (std::size_t i = 0; i < cls.members.size(); ++i) {
        const auto& m = cls.members[i];
        if (m.q.rows() != truth.q_star.rows() || m.q.cols() != truth.q_star.cols()) continue;
        if (std::abs(m.j - truth.j_star) <= tol && (m.q - truth.q_star).cwiseAbs().maxCoeff() <= tol) return i;
    }
    return std::nullopt;
}

double realizability_gap(const HypothesisClass& cls, const SolveResult& truth) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& m : cls.members) {
        const double d = std::max(std::abs(m.j - truth.j_star), (m.q - truth.q_star).cwiseAbs().maxCoeff());
        best = std::min(best, d);
    }
    return best;
}

HypothesisClass load_explicit_class(const nlohmann::json& doc, DiscrepancyKind discrepancy) {
    if (!doc.is_array() || doc.empty()) throw ValidationError("explicit class must be a nonempty JSON array");
    try {
        if (doc.front().contains("transition")) {
            std::vector<ModelHypothesis> models;
            for (const auto& rec : doc) {
                const auto S = rec.at("transition").size();
                const auto A = rec.at("transition").at(0).size();
                Matrix p(static_cast<Eigen::Index>(S * A), static_cast<Eigen::Index>(S));
                Matrix r(static_cast<Eigen::Index>(S), static_cast<Eigen::Index>(A));
                for (std::size_t s = 0; s < S; ++s)
                    for (std::size_t a = 0; a < A; ++a) {
                        for (std::size_t n = 0; n < S; ++n)
                            p(static_cast<Eigen::Index>(s * A + a), static_cast<Eigen::Index>(n)) =
                                rec["transition"][s][a][n].get<double>();
                        r(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) = rec.at("reward")[s][a].get<double>();
                    }
                models.push_back(ModelHypothesis::make(Vector(), std::move(p), std::move(r)));
            }
            if (discrepancy == DiscrepancyKind::Bellman) {
                std::vector<ValueHypothesis> values;
                for (const auto& m : models) values.push_back(m.induced);
                return make_value_class(std::move(values));
            }
            return make_model_class(std::move(models), discrepancy);
        }
        if (discrepancy != DiscrepancyKind::Bellman)
            throw ValidationError("model discrepancies need records with transition and reward");
        std::vector<ValueHypothesis> members;
        for (const auto& rec : doc) {
            const auto& q = rec.at("q");
            const auto S = q.size();
            const auto A = q.at(0).size();
            Matrix table(static_cast<Eigen::Index>(S), static_cast<Eigen::Index>(A));
            for (std::size_t s = 0; s < S; ++s) {
                if (q[s].size() != A) throw ValidationError("ragged q table in explicit class");
                for (std::size_t a = 0; a < A; ++a)
                    table(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) = q[s][a].get<double>();
            }
            members.push_back(ValueHypothesis::make(std::move(table), rec.at("j").get<double>()));
        }
        return make_value_class(std::move(members));
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed explicit class: ") + e.what());
    }
}

} // namespace loop
