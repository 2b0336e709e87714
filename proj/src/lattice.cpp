#include "loop/lattice.hpp"

#include <cmath>

namespace loop {

namespace {

constexpr double kSlack = 1e-9;

std::size_t parameter_dim(const LatticeSpec& spec) {
    switch (spec.kind) {
    case ClassKind::TabularLattice: return spec.n_states * spec.n_actions;
    case ClassKind::LinearAmdpLattice: return static_cast<std::size_t>(spec.features.cols());
    case ClassKind::LinearMixtureLattice:
        if (!spec.mixture) throw ValidationError("linear-mixture lattice needs feature maps");
        return spec.mixture->dim;
    case ClassKind::ExplicitFinite: break;
    }
    throw ValidationError("explicit-finite classes are not lattices");
}

std::vector<std::vector<double>> parameter_axes(const LatticeSpec& spec, double rho) {
    const std::size_t d = parameter_dim(spec);
    if (spec.anchor && static_cast<std::size_t>(spec.anchor->size()) != d)
        throw FeatureDimensionMismatch("lattice anchor has dimension " + std::to_string(spec.anchor->size()) +
                                       ", parameters have " + std::to_string(d));
    std::vector<std::vector<double>> axes;
    for (std::size_t i = 0; i < d; ++i) {
        const double anchor = spec.anchor ? (*spec.anchor)(static_cast<Eigen::Index>(i)) : -spec.bound;
        axes.push_back(grid_axis(-spec.bound, spec.bound, rho, anchor));
    }
    return axes;
}

std::vector<double> j_axis(const LatticeSpec& spec, double rho) {
    return grid_axis(-1.0, 1.0, rho, spec.j_anchor.value_or(-1.0));
}

std::size_t product_count(const std::vector<std::vector<double>>& axes, std::size_t extra, std::size_t cap) {
    double total = static_cast<double>(extra);
    for (const auto& a : axes) total *= static_cast<double>(a.size());
    if (total > static_cast<double>(cap))
        throw LatticeTooLarge("lattice would have " + std::to_string(static_cast<long double>(total)) +
                              " points, cap is " + std::to_string(cap));
    return static_cast<std::size_t>(total);
}

// Mixed-radix walk over the product of the axes, last axis fastest.
template <class Fn>
void for_each_point(const std::vector<std::vector<double>>& axes, Fn&& fn) {
    const std::size_t d = axes.size();
    std::vector<std::size_t> idx(d, 0);
    Vector point(static_cast<Eigen::Index>(d));
    for (;;) {
        for (std::size_t i = 0; i < d; ++i) point(static_cast<Eigen::Index>(i)) = axes[i][idx[i]];
        fn(point);
        std::size_t i = d;
        while (i > 0) {
            --i;
            if (++idx[i] < axes[i].size()) break;
            idx[i] = 0;
            if (i == 0) return;
        }
        if (d == 0) return;
    }
}

HypothesisClass value_lattice(const LatticeSpec& spec, double rho) {
    const auto axes = parameter_axes(spec, rho);
    const auto js = j_axis(spec, rho);
    const std::size_t count = product_count(axes, js.size(), spec.max_members);
    const auto S = static_cast<Eigen::Index>(spec.n_states);
    const auto A = static_cast<Eigen::Index>(spec.n_actions);
    if (spec.kind == ClassKind::LinearAmdpLattice && spec.features.rows() != S * A)
        throw FeatureDimensionMismatch("linear AMDP features must have S*A rows");

    std::vector<ValueHypothesis> members;
    members.reserve(count);
    for_each_point(axes, [&](const Vector& w) {
        Matrix q(S, A);
        if (spec.kind == ClassKind::TabularLattice) {
            q = Eigen::Map<const Matrix>(w.data(), S, A);
        } else {
            Vector flat = spec.features * w;
            q = Eigen::Map<const Matrix>(flat.data(), S, A);
        }
        const auto greedy = ValueHypothesis::make(q, 0.0);
        for (double j : js) {
            ValueHypothesis h = greedy;
            h.j = j;
            members.push_back(std::move(h));
        }
    });
    auto cls = make_value_class(std::move(members), spec.kind);
    cls.rho = rho;
    if (spec.truth) {
        add_bellman_images(cls, *spec.truth);
        cls.truth = find_truth(cls, evi_solve(*spec.truth), 1e-7);
    }
    return cls;
}

HypothesisClass mixture_lattice(const LatticeSpec& spec, double rho) {
    const auto& feats = *spec.mixture;
    const auto axes = parameter_axes(spec, rho);
    product_count(axes, 1, spec.max_members * 64);
    std::vector<ModelHypothesis> models;
    for_each_point(axes, [&](const Vector& theta) {
        if (theta.norm() > 1.0 + kSlack) return;
        Matrix p = feats.transition_for(theta);
        Matrix r = feats.reward_for(theta);
        if (p.minCoeff() < -kSlack || r.cwiseAbs().maxCoeff() > 1.0 + kSlack) return;
        for (Eigen::Index i = 0; i < p.rows(); ++i)
            if (std::abs(p.row(i).sum() - 1.0) > 1e-6) return;
        // rows are valid to 1e-6; clean rounding before validation
        p = p.cwiseMax(0.0);
        for (Eigen::Index i = 0; i < p.rows(); ++i) p.row(i) /= p.row(i).sum();
        r = r.cwiseMax(-1.0).cwiseMin(1.0);
        models.push_back(ModelHypothesis::make(theta, std::move(p), std::move(r), spec.span_bound));
        if (models.size() > spec.max_members)
            throw LatticeTooLarge("mixture lattice exceeds the cap of " + std::to_string(spec.max_members));
    });
    if (models.empty()) throw LatticeTooLarge("no lattice point yields a valid kernel; refine rho");
    auto cls = make_model_class(std::move(models), spec.discrepancy, spec.mixture);
    cls.rho = rho;
    if (spec.truth) cls.truth = find_truth(cls, evi_solve(*spec.truth), 1e-6);
    return cls;
}

} // namespace

std::vector<double> grid_axis(double lo, double hi, double rho, double anchor) {
    if (!(rho > 0.0)) throw ValidationError("lattice radius rho must be positive");
    if (!(hi >= lo)) throw ValidationError("lattice box is empty");
    if (anchor < lo - kSlack || anchor > hi + kSlack)
        throw RealizabilityViolated("lattice anchor " + std::to_string(anchor) + " outside [" +
                                    std::to_string(lo) + ", " + std::to_string(hi) + "]");
    const auto k_lo = static_cast<long>(std::ceil((lo - anchor) / rho - kSlack));
    const auto k_hi = static_cast<long>(std::floor((hi - anchor) / rho + kSlack));
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(k_hi - k_lo + 1));
    for (long k = k_lo; k <= k_hi; ++k) out.push_back(k == 0 ? anchor : anchor + rho * static_cast<double>(k));
    return out;
}

std::vector<double> grid_axis(double lo, double hi, double rho) { return grid_axis(lo, hi, rho, lo); }

std::size_t lattice_grid_count(const LatticeSpec& spec, double rho) {
    const auto axes = parameter_axes(spec, rho);
    const std::size_t extra = spec.kind == ClassKind::LinearMixtureLattice ? 1 : j_axis(spec, rho).size();
    return product_count(axes, extra, std::numeric_limits<std::size_t>::max());
}

HypothesisClass build_lattice_cover(const LatticeSpec& spec, double rho) {
    if (spec.kind == ClassKind::LinearMixtureLattice) return mixture_lattice(spec, rho);
    return value_lattice(spec, rho);
}

} // namespace loop
