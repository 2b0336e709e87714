#include "doctest.h"
#include "fixtures.hpp"

#include "loop/complexity.hpp"
#include "loop/envgen.hpp"
#include "loop/lattice.hpp"
#include "loop/loop_agent.hpp"

#include <cmath>
#include <numbers>

using namespace loop;

namespace {

EvaluatedClass constant_class(const std::vector<double>& levels, std::size_t points) {
    std::vector<std::vector<double>> rows;
    for (double c : levels) rows.emplace_back(points, c);
    return EvaluatedClass::from_rows(rows);
}

EvaluatedClass binary_class(std::size_t points) {
    std::vector<std::vector<double>> rows;
    for (std::size_t mask = 0; mask < (1u << points); ++mask) {
        std::vector<double> r(points);
        for (std::size_t x = 0; x < points; ++x) r[x] = (mask >> x) & 1u;
        rows.push_back(r);
    }
    return EvaluatedClass::from_rows(rows);
}

EvaluatedClass random_class(Rng& rng, std::size_t F, std::size_t X) {
    std::vector<std::vector<double>> rows(F, std::vector<double>(X));
    // coarse values make exact ties and repeated gaps common
    for (auto& r : rows)
        for (auto& v : r) v = static_cast<double>(rng.below(5)) * 0.25;
    return EvaluatedClass::from_rows(rows);
}

void check_replay(const DimWitness& w, const EvaluatedClass& cls) {
    REQUIRE(w.sequence.size() == w.dimension);
    std::vector<std::size_t> prefix;
    for (auto z : w.sequence) {
        CHECK(point_independent(z, prefix, cls, w.eps_used));
        prefix.push_back(z);
    }
}

void check_replay(const DimWitness& w, const EvaluatedClass& cls, const std::vector<Vector>& ms) {
    REQUIRE(w.sequence.size() == w.dimension);
    std::vector<std::size_t> prefix;
    for (auto z : w.sequence) {
        CHECK(measure_independent(z, prefix, cls, ms, w.eps_used));
        prefix.push_back(z);
    }
}

// Plain DFS over sequences at a fixed eps', no memo, used as an oracle.
std::size_t brute_longest(const EvaluatedClass& cls, double eps, std::vector<std::size_t>& prefix) {
    std::size_t best = prefix.size();
    for (std::size_t z = 0; z < cls.n_points(); ++z)
        if (point_independent(z, prefix, cls, eps)) {
            prefix.push_back(z);
            best = std::max(best, brute_longest(cls, eps, prefix));
            prefix.pop_back();
        }
    return best;
}

} // namespace

TEST_CASE("point independence examples") {
    auto two = EvaluatedClass::from_rows({{0.0, 0.0}, {1.0, 0.0}});
    CHECK(point_independent(0, {}, two, 0.5));
    CHECK_FALSE(point_independent(1, {}, two, 0.5));

    auto consts = constant_class({0.0, 0.5, 1.0}, 3);
    CHECK_FALSE(point_independent(1, {0}, consts, 0.4));
    CHECK(point_independent(1, {}, consts, 0.4));

    auto single = EvaluatedClass::from_rows({{0.0, 3.0}});
    CHECK_FALSE(point_independent(0, {}, single, 0.1));
    CHECK_FALSE(point_independent(1, {0, 1}, single, 0.1));
    CHECK_THROWS_AS(point_independent(5, {}, single, 0.1), IndexOutOfRange);
}

TEST_CASE("eluder dimension examples") {
    std::vector<double> grid;
    for (int k = 0; k <= 10; ++k) grid.push_back(k / 10.0);
    auto consts = constant_class(grid, 3);
    auto w = eluder_dim(consts, 0.3);
    CHECK(w.dimension == 1);
    CHECK(w.exhaustive);
    check_replay(w, consts);

    auto bin = binary_class(3);
    auto wb = eluder_dim(bin, 0.5);
    CHECK(wb.dimension == 3);
    check_replay(wb, bin);

    CHECK(eluder_dim(consts, 1.5).dimension == 0);
    CHECK(eluder_dim(consts, 1.0).dimension == 0);  // strict gap
    CHECK_THROWS_AS(eluder_dim(consts, 0.0), ValidationError);
}

TEST_CASE("eluder search agrees with an unmemoized brute force") {
    Rng rng(5);
    for (int trial = 0; trial < 40; ++trial) {
        auto cls = random_class(rng, 2 + rng.below(4), 2 + rng.below(2));
        const double eps = 0.2 + 0.1 * static_cast<double>(rng.below(5));
        auto w = eluder_dim(cls, eps);
        check_replay(w, cls);
        // the oracle sweeps eps' just below every gap value, like the definition's "exists eps' >= eps"
        std::size_t best = 0;
        for (double g = 0.25; g <= 1.0; g += 0.25)
            if (g > eps) {
                std::vector<std::size_t> prefix;
                best = std::max(best, brute_longest(cls, std::max(eps, g - 1e-7), prefix));
            }
        CHECK(w.dimension == best);
    }
}

TEST_CASE("dirac measures over the difference class reproduce the eluder dimension") {
    Rng rng(11);
    std::size_t checked = 0;
    for (std::size_t X = 1; X <= 4; ++X)
        for (std::size_t F = 1; F <= 6; ++F)
            for (int rep = 0; rep < 4; ++rep) {
                auto cls = random_class(rng, F, X);
                auto diff = difference_class(cls);
                auto dirac = dirac_measures(X);
                for (double eps : {0.1, 0.3, 0.6}) {
                    auto a = eluder_dim(cls, eps);
                    auto b = de_dim(diff, dirac, eps);
                    CHECK(a.dimension == b.dimension);
                    check_replay(b, diff, dirac);
                    ++checked;
                }
            }
    CHECK(checked == 4 * 6 * 4 * 3);
}

TEST_CASE("distributional dimension examples") {
    auto cls = EvaluatedClass::from_rows({{0.0, 1.0}, {1.0, 0.0}, {0.2, 0.9}});
    CHECK(de_dim(cls, {}, 0.1).dimension == 0);
    Vector uniform = Vector::Constant(2, 0.5);
    auto w = de_dim(cls, {uniform, uniform, uniform}, 0.1);
    CHECK(w.dimension <= 1);
    Vector bad(2);
    bad << 0.7, 0.7;
    CHECK_THROWS_AS(de_dim(cls, {bad}, 0.1), ValidationError);
}

TEST_CASE("dimensions are nonincreasing in eps") {
    Rng rng(23);
    for (int trial = 0; trial < 50; ++trial) {
        auto cls = random_class(rng, 2 + rng.below(4), 2 + rng.below(3));
        std::size_t prev_e = 1000, prev_d = 1000;
        auto dirac = dirac_measures(cls.n_points());
        for (double eps = 0.05; eps < 1.2; eps += 0.05) {
            const auto e = eluder_dim(cls, eps).dimension;
            const auto d = de_dim(cls, dirac, eps).dimension;
            CHECK(e <= prev_e);
            CHECK(d <= prev_d);
            prev_e = e;
            prev_d = d;
        }
    }
}

TEST_CASE("search budget flags or throws") {
    auto bin = binary_class(4);
    SearchOptions tiny;
    tiny.max_nodes = 3;
    auto w = eluder_dim(bin, 0.5, tiny);
    CHECK_FALSE(w.exhaustive);
    check_replay(w, bin);
    tiny.throw_on_budget = true;
    CHECK_THROWS_AS(eluder_dim(bin, 0.5, tiny), SearchBudgetExceeded);
}

TEST_CASE("witness json round trip") {
    auto w = eluder_dim(binary_class(3), 0.5);
    auto back = witness_from_json(to_json(w));
    CHECK(back.dimension == w.dimension);
    CHECK(back.sequence == w.sequence);
    CHECK(back.eps_used == w.eps_used);
    auto cls = binary_class(2);
    auto c2 = evaluated_class_from_json(to_json(cls));
    CHECK(c2.table == cls.table);
}

TEST_CASE("abe dimension examples") {
    auto m = fixtures::single_state({1.0, 0.0});
    Matrix q0 = Matrix::Zero(1, 2);
    Matrix q1(1, 2);
    q1 << 0.0, -1.0;
    // Bellman errors over (0,0), (0,1): (-1, 0), (0, 1), (0, 0)
    auto cls = make_value_class(
        {ValueHypothesis::make(q0, 0.0), ValueHypothesis::make(q0, 1.0), ValueHypothesis::make(q1, 1.0)});
    auto errs = bellman_error_class(m, cls);
    CHECK(errs.table(0, 0) == doctest::Approx(-1.0));
    CHECK(errs.table(1, 1) == doctest::Approx(1.0));
    CHECK(errs.table.row(2).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
    CHECK(abe_dim(m, cls, 0.5).dimension == 2);
    CHECK(abe_dim(m, cls, 1.0).dimension == 0);

    auto star = make_value_class({ValueHypothesis::make(q1, 1.0)});
    CHECK(abe_dim(m, star, 0.01).dimension == 0);

    auto r = fixtures::random_dense(3, 2, 4);
    auto sol = evi_solve(r);
    auto truth_only = make_value_class({ValueHypothesis::make(sol.q_star, sol.j_star)});
    CHECK(abe_dim(r, truth_only, 1e-3).dimension == 0);
}

TEST_CASE("abe dimension is nonincreasing in eps on a lattice") {
    auto m = fixtures::random_dense(2, 2, 8);
    LatticeSpec ls;
    ls.kind = ClassKind::TabularLattice;
    ls.n_states = 2;
    ls.n_actions = 2;
    ls.bound = 1.0;
    auto cls = build_lattice_cover(ls, 1.0);
    // keep the search small: first 12 members
    cls.members.resize(12);
    std::size_t prev = 1000;
    for (double eps : {0.1, 0.2, 0.4, 0.8, 1.6}) {
        const auto d = abe_dim(m, cls, eps).dimension;
        CHECK(d <= prev);
        prev = d;
    }
}

TEST_CASE("effective dimension") {
    CHECK(effective_dim({}, 1.0).dimension == 0);

    Vector e1 = Vector::Unit(2, 0);
    // log(1 + n)/n >= 1/e holds up to n = 4
    std::size_t oracle = 0;
    for (std::size_t n = 1; n < 50; ++n)
        if (std::log(1.0 + static_cast<double>(n)) / static_cast<double>(n) >= 1.0 / std::numbers::e) oracle = n;
    auto w = effective_dim({e1}, 1.0);
    CHECK(w.dimension == oracle);
    CHECK(oracle == 4);

    Rng rng(2);
    std::vector<Vector> vs;
    for (int i = 0; i < 4; ++i) vs.push_back(Vector::NullaryExpr(3, [&] { return rng.uniform(-1.0, 1.0); }));
    for (double c : {0.5, 2.0, 3.0}) {
        std::vector<Vector> scaled;
        for (const auto& v : vs) scaled.push_back(c * v);
        CHECK(effective_dim(scaled, 0.7).dimension == effective_dim(vs, 0.7 / c).dimension);
    }
    CHECK(effective_dim({Vector::Zero(3)}, 1.0).dimension == 0);
    CHECK_THROWS_AS(effective_dim({e1, Vector::Zero(3)}, 1.0), FeatureDimensionMismatch);
}

TEST_CASE("agec audit on a singleton class") {
    auto m = fixtures::random_dense(3, 2, 2);
    auto sol = evi_solve(m);
    auto cls = make_value_class({ValueHypothesis::make(sol.q_star, sol.j_star)});
    AgentConfig cfg;
    cfg.horizon = 500;
    auto tr = run_loop(m, cls, cfg);
    auto rep = audit_agec(tr, m, cls, NormMode::L2Squared);
    CHECK(rep.fitted_d_g <= 1e-9);
    CHECK(rep.residual <= 1e-9);
    CHECK(std::abs(rep.lhs_series.back()) <= 1e-6);
}

TEST_CASE("agec audit inequalities hold along a lattice run") {
    InstanceSpec spec;
    spec.kind = InstanceKind::LinearAmdp;
    spec.n_states = 3;
    spec.n_actions = 2;
    spec.feature_dim = 2;
    spec.seed = 2;
    auto inst = linear_amdp_instance(spec);
    auto sol = evi_solve(inst.model);
    LatticeSpec ls;
    ls.kind = ClassKind::LinearAmdpLattice;
    ls.n_states = 3;
    ls.n_actions = 2;
    ls.features = inst.features.phi;
    auto omega = linear_q_parameter(inst.features, sol);
    ls.bound = omega.cwiseAbs().maxCoeff() + 0.3;
    ls.anchor = omega;
    ls.j_anchor = sol.j_star;
    ls.truth = &inst.model;
    auto cls = build_lattice_cover(ls, 0.3);
    AgentConfig cfg;
    cfg.horizon = 3000;
    auto tr = run_loop(inst.model, cls, cfg);
    for (auto mode : {NormMode::L2Squared, NormMode::L1Sqrt}) {
        auto rep = audit_agec(tr, inst.model, cls, mode);
        CHECK(rep.residual <= 1e-9);
        CHECK(rep.fitted_d_g >= 0.0);
        CHECK(rep.fitted_kappa_g >= 0.0);
        for (std::size_t t = 0; t < rep.lhs_series.size(); ++t) {
            REQUIRE(rep.lhs_series[t] <= rep.rhs_series[t] + 1e-9);
            REQUIRE(rep.transfer_lhs[t] <= rep.transfer_rhs[t] + 1e-9);
        }
    }
    CHECK(parse_norm_mode("l1-sqrt") == NormMode::L1Sqrt);
    CHECK_THROWS_AS(parse_norm_mode("l3"), ValidationError);
}
