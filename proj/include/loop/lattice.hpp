#pragma once

#include "loop/hypothesis.hpp"

#include <memory>
#include <optional>
#include <vector>

namespace loop {

/// Points anchor + rho*k inside [lo, hi]. Every x in the interval is within
/// rho of some point. The anchor must lie in the interval.
std::vector<double> grid_axis(double lo, double hi, double rho, double anchor);
std::vector<double> grid_axis(double lo, double hi, double rho);

/// Parameter box and structure of a lattice class.
struct LatticeSpec {
    ClassKind kind = ClassKind::TabularLattice;
    std::size_t n_states = 1;
    std::size_t n_actions = 1;
    /// half-width of the parameter box: |q(s,a)| for tabular, |omega_i| for
    /// linear AMDP, |theta_i| for linear mixture
    double bound = 1.0;
    /// grid origin in parameter space; defaults to the box's lower corner
    std::optional<Vector> anchor;
    /// J grid origin; defaults to -1
    std::optional<double> j_anchor;
    /// linear AMDP features, (S*A) x d
    Matrix features;
    std::shared_ptr<const LinearMixtureFeatures> mixture;
    DiscrepancyKind discrepancy = DiscrepancyKind::Bellman;
    /// when set, Bellman images join G and the member equal to f* is marked
    const TabularAMDP* truth = nullptr;
    double span_bound = 0.0;
    std::size_t max_members = 500'000;
};

/// Number of raw grid points (before kernel-validity filtering for mixtures).
std::size_t lattice_grid_count(const LatticeSpec& spec, double rho);

/// Builds the lattice class. Throws LatticeTooLarge over the member cap and
/// RealizabilityViolated when an anchor lies outside its box.
HypothesisClass build_lattice_cover(const LatticeSpec& spec, double rho);

} // namespace loop
