#pragma once

#include "loop/hypothesis.hpp"
#include "loop/trace.hpp"

#include <string>
#include <vector>

namespace loop {

/// A finite function class given by its values: table(i, x) = f_i(x).
struct EvaluatedClass {
    std::vector<std::string> points;  ///< optional labels, one per column
    Matrix table;

    std::size_t n_functions() const { return static_cast<std::size_t>(table.rows()); }
    std::size_t n_points() const { return static_cast<std::size_t>(table.cols()); }
    void validate() const;

    static EvaluatedClass from_rows(const std::vector<std::vector<double>>& rows);
};

nlohmann::json to_json(const EvaluatedClass& cls);
EvaluatedClass evaluated_class_from_json(const nlohmann::json& doc);

/// Longest independent sequence found by a dimension search.
struct DimWitness {
    std::size_t dimension = 0;
    std::vector<std::size_t> sequence;  ///< point (or measure) indices in order
    double eps_used = 0.0;              ///< the eps' every element is independent at
    bool exhaustive = true;             ///< false when the node budget cut the search short
    std::size_t nodes = 0;
};

nlohmann::json to_json(const DimWitness& w);
DimWitness witness_from_json(const nlohmann::json& doc);

struct SearchOptions {
    std::size_t max_nodes = 5'000'000;
    /// throw SearchBudgetExceeded instead of returning a flagged lower bound
    bool throw_on_budget = false;
};

/// Some pair f, f' has sqrt(sum_prefix (f - f')^2) <= eps' and |f(z) - f'(z)| > eps'.
/// The gap is strict; with a non-strict gap a constant class would already
/// have dimension 2.
bool point_independent(std::size_t z, const std::vector<std::size_t>& prefix, const EvaluatedClass& cls,
                       double eps_prime);

/// Some f has sqrt(sum_i E_{mu_i}[f]^2) <= eps' and |E_nu[f]| > eps'.
bool measure_independent(std::size_t nu, const std::vector<std::size_t>& prefix, const EvaluatedClass& cls,
                         const std::vector<Vector>& measures, double eps_prime);

/// Eluder dimension: longest point sequence (repeats allowed), each element
/// eps'-independent of its prefix for one common eps' >= eps.
DimWitness eluder_dim(const EvaluatedClass& cls, double eps, const SearchOptions& options = {});

/// Distributional eluder dimension over a finite family of measures on the points.
DimWitness de_dim(const EvaluatedClass& cls, const std::vector<Vector>& measures, double eps,
                  const SearchOptions& options = {});

/// {f - f' : f, f' in cls}, ordered by (i, j).
EvaluatedClass difference_class(const EvaluatedClass& cls);
/// Point masses on n points.
std::vector<Vector> dirac_measures(std::size_t n);

/// Bellman errors E(f)(s, a) of every member; column s*A + a.
EvaluatedClass bellman_error_class(const TabularAMDP& model, const HypothesisClass& cls);

/// de_dim of the Bellman error class over point masses on state-action pairs.
DimWitness abe_dim(const TabularAMDP& model, const HypothesisClass& cls, double eps,
                   const SearchOptions& options = {});

/// Largest n such that some length-n sequence from `vectors` (repeats
/// allowed) has (1/n) log det(I + eps^-2 sum z z^T) >= 1/e. The best
/// sequence per n is exhaustive while the multiset count is small and greedy
/// beyond; `exhaustive` reports which.
DimWitness effective_dim(const std::vector<Vector>& vectors, double eps);

enum class NormMode { L2Squared, L1Sqrt };
std::string to_string(NormMode mode);
NormMode parse_norm_mode(const std::string& text);

/**
 * Empirical AGEC coefficients of one trace.
 *
 * Dominance compares cumulative Bellman error against the in-sample error;
 * transferability compares cumulative out-sample error against the radius
 * the trace actually needed. Each is fitted as lhs ~ coef * feature + burn_in
 * by nonnegative least squares, then the intercept is raised until the
 * inequality holds at every t.
 */
struct AgecAuditReport {
    NormMode norm_mode = NormMode::L2Squared;
    std::vector<double> lhs_series;  ///< cumulative Bellman error
    std::vector<double> rhs_series;  ///< fitted dominance bound
    std::vector<double> transfer_lhs;
    std::vector<double> transfer_rhs;
    double fitted_d_g = 0.0;
    double fitted_kappa_g = 0.0;
    double dominance_burn_in = 0.0;
    double transfer_burn_in = 0.0;
    /// smallest beta for which the transferability premise holds on this trace
    double beta_needed = 0.0;
    /// max over t and both conditions of lhs - rhs
    double residual = 0.0;
};

nlohmann::json to_json(const AgecAuditReport& report);

AgecAuditReport audit_agec(const RunTrace& trace, const TabularAMDP& model, const HypothesisClass& cls,
                           NormMode mode);

} // namespace loop
