#pragma once

#include "loop/amdp.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace loop {

/// One observed transition zeta = (s, a, r, s').
struct Trajectory {
    std::size_t s = 0;
    std::size_t a = 0;
    double r = 0.0;
    std::size_t s_next = 0;
};

/// Value hypothesis f = (Q, J) with its greedy bias V and greedy policy.
struct ValueHypothesis {
    Matrix q;
    double j = 0.0;
    Vector v;
    Policy policy;

    static ValueHypothesis make(Matrix q, double j);
};

/**
 * Known feature maps of a linear mixture model:
 * P(s'|s,a) = <theta, phi(s,a,s')> and r(s,a) = <theta, psi(s,a)>.
 */
struct LinearMixtureFeatures {
    std::size_t n_states = 0;
    std::size_t n_actions = 0;
    std::size_t dim = 0;
    Matrix phi;  ///< (S*A*S) x d, row (s*A + a)*S + s'
    Matrix psi;  ///< (S*A) x d, row s*A + a

    Matrix transition_for(const Vector& theta) const;
    Matrix reward_for(const Vector& theta) const;
    /// psi(s,a) + sum_s' phi(s,a,s') v(s'), the regression feature of the value-targeted loss.
    Vector regression_feature(std::size_t s, std::size_t a, const Vector& v) const;
};

/// Model hypothesis f = (P_f, r_f) with the optimal (Q, V, J, pi) of the
/// induced model cached at construction.
struct ModelHypothesis {
    Vector theta;  ///< empty for classes without a feature parameterization
    Matrix transition;
    Matrix reward;
    ValueHypothesis induced;
    double solve_residual = 0.0;

    static ModelHypothesis make(Vector theta, Matrix transition, Matrix reward, double span_bound = 0.0);
    std::span<const double> row(std::size_t s, std::size_t a) const {
        const auto S = static_cast<std::size_t>(transition.cols());
        const auto A = static_cast<std::size_t>(reward.cols());
        return {transition.data() + (s * A + a) * S, S};
    }
};

enum class ClassKind { ExplicitFinite, TabularLattice, LinearAmdpLattice, LinearMixtureLattice };
enum class DiscrepancyKind { Bellman, ModelBased, Mle };
enum class CompletionOperator { BellmanOperator, ProjectToTruth };

std::string to_string(ClassKind kind);
std::string to_string(DiscrepancyKind kind);
std::string to_string(CompletionOperator op);
ClassKind parse_class_kind(const std::string& text);
DiscrepancyKind parse_discrepancy_kind(const std::string& text);
CompletionOperator parse_completion(const std::string& text);

/**
 * Finite hypothesis class H with its auxiliary class G.
 *
 * Value-based classes keep G in `auxiliary`; members come first, in order,
 * followed by any extra functions (e.g. Bellman images). Model-based classes
 * are self-complete (G = H) and leave `auxiliary` empty.
 */
struct HypothesisClass {
    ClassKind kind = ClassKind::ExplicitFinite;
    DiscrepancyKind discrepancy = DiscrepancyKind::Bellman;
    CompletionOperator completion = CompletionOperator::BellmanOperator;
    double rho = 0.0;

    std::vector<ValueHypothesis> members;  ///< for model classes: induced (Q, J)
    std::vector<ModelHypothesis> models;   ///< empty for value-based classes
    std::vector<ValueHypothesis> auxiliary;
    std::shared_ptr<const LinearMixtureFeatures> features;
    /// index of the member equal to f*, when the class is built realizable
    std::optional<std::size_t> truth;

    bool model_based() const { return !models.empty(); }
    std::size_t size() const { return members.size(); }
    std::size_t aux_size() const { return model_based() ? models.size() : auxiliary.size(); }
    /// |H u G| as consumed by the confidence radius.
    std::size_t cover_size() const;
    std::size_t n_states() const { return static_cast<std::size_t>(members.front().q.rows()); }
    std::size_t n_actions() const { return static_cast<std::size_t>(members.front().q.cols()); }
};

// ---- discrepancy functions --------------------------------------------------

/// l(f, g, zeta) = Q_g(s,a) - r - V_f(s') + J_g.
double bellman_discrepancy(const ValueHypothesis& f, const ValueHypothesis& g, const Trajectory& zeta);

/// Value-targeted regression residual of a linear mixture hypothesis:
/// theta_g . (psi(s,a) + sum_s' phi(s,a,s') V(s')) - r - V(s_next), with V from f'.
double model_discrepancy(const Vector& v_fprime, const ModelHypothesis& g,
                         const LinearMixtureFeatures& features, const Trajectory& zeta);

/// Same residual written through the induced model: r_g + P_g V - r - V(s_next).
double model_discrepancy(const Vector& v_fprime, const ModelHypothesis& g, const Trajectory& zeta);

/// 1/2 |P_g(s'|s,a) / P_true(s'|s,a) - 1|. Throws DivisionByZeroSupport
/// when the true kernel puts no mass on s'.
double mle_discrepancy(std::span<const double> g_row, std::span<const double> truth_row, std::size_t next);
double mle_discrepancy(const ModelHypothesis& g, const TabularAMDP& truth, const Trajectory& zeta);

double tv_distance(std::span<const double> p, std::span<const double> q);

/// Class-level l_{f'}(f, g, zeta) for member indices f', f and auxiliary index g.
/// The MLE kind needs the true model.
double discrepancy(const HypothesisClass& cls, std::size_t f_prime, std::size_t f, std::size_t g,
                   const Trajectory& zeta, const TabularAMDP* truth = nullptr);

/// Exact E_{s' ~ P(.|s,a)} l_{f'}(f, g, (s, a, r(s,a), s')).
double expected_discrepancy(const TabularAMDP& model, const HypothesisClass& cls, std::size_t f_prime,
                            std::size_t f, std::size_t g, std::size_t s, std::size_t a);

/// T(f) = (T_{J_f} Q_f, J_f).
ValueHypothesis bellman_image(const TabularAMDP& model, const ValueHypothesis& f);

using ValueDiscrepancy =
    std::function<double(const ValueHypothesis& f, const ValueHypothesis& g, const Trajectory& zeta)>;

/// max |l(f,g,zeta) - l(f,T(f),zeta) - E l(f,g,zeta)| over samples and every
/// (f, g) in hs x gs, with an arbitrary value discrepancy and the Bellman
/// operator as completion map.
double completeness_residual(const TabularAMDP& model, const std::vector<ValueHypothesis>& hs,
                             const std::vector<ValueHypothesis>& gs, std::span<const Trajectory> samples,
                             const ValueDiscrepancy& l);

/// Class-level residual using the class's own discrepancy and completion map.
double completeness_residual(const TabularAMDP& model, const HypothesisClass& cls,
                             std::span<const Trajectory> samples);

/// max |l| of the class discrepancy over samples and (f', f, g) triples; the
/// empirical stand-in for the boundedness constant.
double max_abs_discrepancy(const HypothesisClass& cls, std::span<const Trajectory> samples,
                           const TabularAMDP* truth = nullptr);

// ---- explicit classes -------------------------------------------------------

/// Value-based class from a list; auxiliary defaults to the members.
HypothesisClass make_value_class(std::vector<ValueHypothesis> members, ClassKind kind = ClassKind::ExplicitFinite);

/// Appends Bellman images T(f) of every member to G, dropping functions whose
/// loss-relevant part Q + J duplicates an earlier entry.
void add_bellman_images(HypothesisClass& cls, const TabularAMDP& truth);

/// Model-based class; each model is solved once and cached.
HypothesisClass make_model_class(std::vector<ModelHypothesis> models, DiscrepancyKind discrepancy,
                                 std::shared_ptr<const LinearMixtureFeatures> features = nullptr);

/// Marks the member matching f* (sup-norm distance <= tol on Q and J).
std::optional<std::size_t> find_truth(const HypothesisClass& cls, const SolveResult& truth, double tol = 1e-9);

/// Distance from f* to the nearest member: max(||Q - Q*||_inf, |J - J*|).
double realizability_gap(const HypothesisClass& cls, const SolveResult& truth);

/// Explicit classes load from a JSON array of records: {"q": [[...]], "j": x}
/// for value hypotheses or {"transition": [[[...]]], "reward": [[...]]} for models.
HypothesisClass load_explicit_class(const nlohmann::json& doc, DiscrepancyKind discrepancy);

} // namespace loop
