#pragma once

#include "loop/amdp.hpp"

#include <vector>

namespace fixtures {

using loop::Matrix;
using loop::TabularAMDP;

// One state, one action per reward entry, self-loops everywhere.
inline TabularAMDP single_state(const std::vector<double>& rewards, double span_bound = 1.0) {
    const auto A = rewards.size();
    Matrix p = Matrix::Ones(static_cast<Eigen::Index>(A), 1);
    Matrix r(1, static_cast<Eigen::Index>(A));
    for (std::size_t a = 0; a < A; ++a) r(0, static_cast<Eigen::Index>(a)) = rewards[a];
    return TabularAMDP(1, A, p, r, span_bound);
}

// s0 -> s1 with reward 1, s1 -> s0 with reward 0.
inline TabularAMDP cycle() {
    Matrix p(2, 2);
    p << 0, 1, 1, 0;
    Matrix r(2, 1);
    r << 1, 0;
    return TabularAMDP(2, 1, p, r, 1.0);
}

// Dense random model from a seed; rows strictly positive.
inline TabularAMDP random_dense(std::size_t S, std::size_t A, std::uint64_t seed) {
    loop::Rng rng(seed);
    Matrix p(static_cast<Eigen::Index>(S * A), static_cast<Eigen::Index>(S));
    Matrix r(static_cast<Eigen::Index>(S), static_cast<Eigen::Index>(A));
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        double total = 0.0;
        for (Eigen::Index j = 0; j < p.cols(); ++j) {
            p(i, j) = 0.05 + rng.uniform();
            total += p(i, j);
        }
        p.row(i) /= total;
    }
    for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = rng.uniform(-1.0, 1.0);
    return TabularAMDP(S, A, p, r, 2.0);
}

// Gain of a fixed policy by solving the Poisson equation directly.
inline double policy_gain_linear(const TabularAMDP& m, const loop::Policy& pi) {
    const auto S = static_cast<Eigen::Index>(m.n_states());
    // unknowns: h(0..S-1), J ; equations: J + h(s) - sum P h = r, plus h(0) = 0
    Eigen::MatrixXd lhs = Eigen::MatrixXd::Zero(S + 1, S + 1);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(S + 1);
    for (Eigen::Index s = 0; s < S; ++s) {
        const auto a = pi[static_cast<std::size_t>(s)];
        lhs(s, s) += 1.0;
        for (Eigen::Index n = 0; n < S; ++n)
            lhs(s, n) -= m.prob(static_cast<std::size_t>(s), a, static_cast<std::size_t>(n));
        lhs(s, S) = 1.0;
        rhs(s) = m.reward(static_cast<std::size_t>(s), a);
    }
    lhs(S, 0) = 1.0;
    Eigen::VectorXd x = lhs.colPivHouseholderQr().solve(rhs);
    return x(S);
}

} // namespace fixtures
