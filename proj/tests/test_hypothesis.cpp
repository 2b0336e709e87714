#include "doctest.h"
#include "fixtures.hpp"

#include "loop/envgen.hpp"
#include "loop/hypothesis.hpp"
#include "loop/lattice.hpp"

#include <cmath>
#include <set>

using namespace loop;

namespace {

ValueHypothesis constant_hypothesis(std::size_t S, std::size_t A, double q, double j) {
    return ValueHypothesis::make(Matrix::Constant(static_cast<Eigen::Index>(S), static_cast<Eigen::Index>(A), q), j);
}

ValueHypothesis random_value(Rng& rng, std::size_t S, std::size_t A) {
    Matrix q(static_cast<Eigen::Index>(S), static_cast<Eigen::Index>(A));
    for (Eigen::Index i = 0; i < q.size(); ++i) q.data()[i] = rng.uniform(-1, 1);
    return ValueHypothesis::make(q, rng.uniform(-1, 1));
}

std::vector<Trajectory> draw_samples(const TabularAMDP& m, Rng& rng, std::size_t n) {
    std::vector<Trajectory> out;
    for (std::size_t i = 0; i < n; ++i) {
        const auto s = rng.below(m.n_states());
        const auto a = rng.below(m.n_actions());
        const auto o = step(m, s, a, rng);
        out.push_back({s, a, o.reward, o.next_state});
    }
    return out;
}

// Two-state, one-action mixture of two hand-set kernels.
std::shared_ptr<LinearMixtureFeatures> toy_mixture() {
    auto f = std::make_shared<LinearMixtureFeatures>();
    f->n_states = 2;
    f->n_actions = 1;
    f->dim = 2;
    f->phi = Matrix(4, 2);
    // rows: (s=0,s'=0), (s=0,s'=1), (s=1,s'=0), (s=1,s'=1); columns: kernel 1, kernel 2
    f->phi << 0.9, 0.2,
              0.1, 0.8,
              0.3, 0.6,
              0.7, 0.4;
    f->psi = Matrix(2, 2);
    f->psi << 0.5, -0.5,
              0.2, 0.8;
    return f;
}

ModelHypothesis mixture_member(const LinearMixtureFeatures& f, Vector theta) {
    return ModelHypothesis::make(theta, f.transition_for(theta), f.reward_for(theta));
}

} // namespace

TEST_CASE("bellman discrepancy examples") {
    auto f = ValueHypothesis::make(Matrix::Constant(2, 1, 0.1), 0.0);
    auto g = constant_hypothesis(2, 1, 0.0, 0.0);
    CHECK(bellman_discrepancy(f, g, {0, 0, 0.3, 1}) == doctest::Approx(-0.4));
    auto f2 = constant_hypothesis(2, 1, 0.2, 0.0);
    auto g2 = constant_hypothesis(2, 1, 0.2, 0.1);
    CHECK(bellman_discrepancy(f2, g2, {0, 0, 0.0, 1}) == doctest::Approx(0.1));
}

TEST_CASE("expected Bellman discrepancy equals the Bellman error") {
    Rng rng(5);
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        auto m = fixtures::random_dense(4, 3, seed);
        std::vector<ValueHypothesis> hs;
        for (int i = 0; i < 8; ++i) hs.push_back(random_value(rng, 4, 3));
        auto sol = evi_solve(m);
        hs.push_back(ValueHypothesis::make(sol.q_star, sol.j_star));
        auto cls = make_value_class(hs);
        for (std::size_t f = 0; f < cls.size(); ++f)
            for (std::size_t s = 0; s < 4; ++s)
                for (std::size_t a = 0; a < 3; ++a) {
                    // independent oracle: explicit sum over next states
                    double oracle = 0.0;
                    for (std::size_t n = 0; n < 4; ++n)
                        oracle += m.prob(s, a, n) * (cls.members[f].q(s, a) - m.reward(s, a) -
                                                      cls.members[f].v(n) + cls.members[f].j);
                    const double e = expected_discrepancy(m, cls, f, f, f, s, a);
                    CHECK(std::abs(e - oracle) <= 1e-12);
                    CHECK(std::abs(e - bellman_error_eval(m, cls.members[f].q, cls.members[f].j, s, a)) <= 1e-12);
                }
        // optimal member has zero expected discrepancy everywhere
        const auto last = cls.size() - 1;
        for (std::size_t s = 0; s < 4; ++s)
            for (std::size_t a = 0; a < 3; ++a)
                CHECK(std::abs(expected_discrepancy(m, cls, last, last, last, s, a)) <= 1e-7);
    }
}

TEST_CASE("model discrepancy") {
    auto feats = toy_mixture();
    Vector theta_g(2);
    theta_g << 0.25, 0.75;
    auto g = mixture_member(*feats, theta_g);
    Vector v(2);
    v << 0.4, -0.3;
    Trajectory z{1, 0, 0.1, 0};
    // hand evaluation: psi(1) = (0.2, 0.8); sum_s' phi(1,s') v(s') = (0.3*0.4 + 0.7*-0.3, 0.6*0.4 + 0.4*-0.3)
    const double x1 = 0.2 + (0.12 - 0.21);
    const double x2 = 0.8 + (0.24 - 0.12);
    const double oracle = 0.25 * x1 + 0.75 * x2 - 0.1 - 0.4;
    CHECK(model_discrepancy(v, g, *feats, z) == doctest::Approx(oracle).epsilon(1e-14));
    CHECK(model_discrepancy(v, g, z) == doctest::Approx(oracle).epsilon(1e-14));

    // V = 0 collapses to theta . psi - r
    CHECK(model_discrepancy(Vector::Zero(2), g, *feats, z) == doctest::Approx(0.25 * 0.2 + 0.75 * 0.8 - 0.1));

    Vector bad(3);
    bad << 1, 0, 0;
    auto g_bad = g;
    g_bad.theta = bad;
    CHECK_THROWS_AS(model_discrepancy(v, g_bad, *feats, z), FeatureDimensionMismatch);

    // true parameter: mean-zero residual
    Vector theta_star(2);
    theta_star << 0.6, 0.4;
    TabularAMDP truth(2, 1, feats->transition_for(theta_star), feats->reward_for(theta_star), 1.0);
    auto star = mixture_member(*feats, theta_star);
    auto cls = make_model_class({star, g}, DiscrepancyKind::ModelBased, feats);
    for (std::size_t s = 0; s < 2; ++s) {
        CHECK(std::abs(expected_discrepancy(truth, cls, 1, 1, 0, s, 0)) <= 1e-14);
        CHECK(std::abs(expected_discrepancy(truth, cls, 0, 0, 0, s, 0)) <= 1e-14);
    }
}

TEST_CASE("mle discrepancy and TV") {
    std::vector<double> g{0.8, 0.2}, star{0.5, 0.5};
    const double e = 0.5 * mle_discrepancy(g, star, 0) + 0.5 * mle_discrepancy(g, star, 1);
    CHECK(e == doctest::Approx(0.3).epsilon(1e-14));
    CHECK(tv_distance(g, star) == doctest::Approx(0.3).epsilon(1e-14));
    CHECK(mle_discrepancy(star, star, 1) == 0.0);
    std::vector<double> zero{1.0, 0.0};
    CHECK_THROWS_AS(mle_discrepancy(g, zero, 1), DivisionByZeroSupport);

    // permuted symmetric row: expectation equals independent TV
    std::vector<double> p{0.1, 0.3, 0.6}, q{0.6, 0.3, 0.1};
    double expect = 0.0, brute = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
        expect += q[i] * mle_discrepancy(p, q, i);
        brute += std::abs(p[i] - q[i]);
    }
    CHECK(expect == doctest::Approx(brute / 2).epsilon(1e-14));
    CHECK(tv_distance(p, q) == tv_distance(q, p));

    // class-level expectation equals row TV
    auto m = fixtures::random_dense(3, 2, 8);
    auto other = fixtures::random_dense(3, 2, 9);
    auto hyp = ModelHypothesis::make(Vector(), other.transition(), other.reward());
    auto self = ModelHypothesis::make(Vector(), m.transition(), m.reward());
    auto cls = make_model_class({hyp, self}, DiscrepancyKind::Mle);
    for (std::size_t s = 0; s < 3; ++s)
        for (std::size_t a = 0; a < 2; ++a) {
            CHECK(std::abs(expected_discrepancy(m, cls, 0, 0, 0, s, a) - tv_distance(other.row(s, a), m.row(s, a))) <=
                  1e-12);
            CHECK(expected_discrepancy(m, cls, 0, 0, 1, s, a) == 0.0);
        }
}

TEST_CASE("completeness identity") {
    Rng rng(21);
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        auto m = fixtures::random_dense(4, 2, seed);
        std::vector<ValueHypothesis> hs;
        for (int i = 0; i < 6; ++i) hs.push_back(random_value(rng, 4, 2));
        auto cls = make_value_class(hs);
        auto samples = draw_samples(m, rng, 40);
        CHECK(completeness_residual(m, cls, samples) <= 1e-12);

        ValueDiscrepancy flipped = [](const ValueHypothesis& f, const ValueHypothesis& g, const Trajectory& z) {
            return g.q(static_cast<Eigen::Index>(z.s), static_cast<Eigen::Index>(z.a)) - z.r +
                   f.v(static_cast<Eigen::Index>(z.s_next)) + g.j;
        };
        CHECK(completeness_residual(m, cls.members, cls.auxiliary, samples, flipped) > 0.1);

        auto proj = cls;
        proj.completion = CompletionOperator::ProjectToTruth;
        // with f* as the completion image the identity no longer holds for arbitrary f
        CHECK(completeness_residual(m, proj, samples) > 1e-6);
    }

    auto feats = toy_mixture();
    Vector ts(2);
    ts << 0.6, 0.4;
    TabularAMDP truth(2, 1, feats->transition_for(ts), feats->reward_for(ts), 1.0);
    std::vector<ModelHypothesis> models;
    for (double w : {0.0, 0.3, 0.6, 1.0}) {
        Vector th(2);
        th << w, 1 - w;
        models.push_back(mixture_member(*feats, th));
    }
    auto mcls = make_model_class(models, DiscrepancyKind::ModelBased, feats);
    auto samples = draw_samples(truth, rng, 50);
    CHECK(completeness_residual(truth, mcls, samples) <= 1e-12);
    CHECK(max_abs_discrepancy(mcls, samples) > 0.0);
}

TEST_CASE("discrepancy boundedness on a lattice class") {
    auto m = fixtures::random_dense(3, 2, 4);
    auto sol = evi_solve(m);
    LatticeSpec spec;
    spec.n_states = 3;
    spec.n_actions = 2;
    spec.bound = sol.span;
    auto cls = build_lattice_cover(spec, 0.6);
    Rng rng(3);
    auto samples = draw_samples(m, rng, 20);
    // |Q_g| <= bound, |V_f| <= bound, |r| <= 1, |J| <= 1
    CHECK(max_abs_discrepancy(cls, samples) <= 2 * spec.bound + 2 + 1e-12);
}

TEST_CASE("grid axis and lattice counts") {
    auto axis = grid_axis(0.0, 1.0, 0.25);
    REQUIRE(axis.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) CHECK(axis[i] == doctest::Approx(0.25 * static_cast<double>(i)));
    CHECK_THROWS_AS(grid_axis(0.0, 1.0, 0.25, 1.5), RealizabilityViolated);
    CHECK_THROWS_AS(grid_axis(0.0, 1.0, 0.0), ValidationError);

    LatticeSpec spec;
    spec.bound = 0.5;
    auto cls = build_lattice_cover(spec, 0.5);
    // q in {-0.5, 0, 0.5} crossed with J in {-1, -0.5, 0, 0.5, 1}
    REQUIRE(cls.size() == 15);
    std::set<std::pair<double, double>> seen;
    for (const auto& h : cls.members) seen.insert({h.q(0, 0), h.j});
    for (double q : {-0.5, 0.0, 0.5})
        for (double j : {-1.0, -0.5, 0.0, 0.5, 1.0}) CHECK(seen.count({q, j}) == 1);
    CHECK(lattice_grid_count(spec, 0.5) == 15);

    spec.n_states = 3;
    spec.n_actions = 2;
    CHECK(lattice_grid_count(spec, 0.5) == 729 * 5);
    spec.max_members = 100;
    CHECK_THROWS_AS(build_lattice_cover(spec, 0.5), LatticeTooLarge);
}

TEST_CASE("lattice covering audit") {
    LatticeSpec spec;
    spec.n_states = 2;
    spec.n_actions = 2;
    spec.bound = 0.7;
    const double rho = 0.3;
    auto cls = build_lattice_cover(spec, rho);
    Rng rng(99);
    int uncovered = 0;
    for (int trial = 0; trial < 10000; ++trial) {
        Matrix q(2, 2);
        for (Eigen::Index i = 0; i < 4; ++i) q.data()[i] = rng.uniform(-0.7, 0.7);
        const double j = rng.uniform(-1, 1);
        double best = 1e9;
        for (const auto& h : cls.members)
            best = std::min(best, std::max((h.q - q).cwiseAbs().maxCoeff(), std::abs(h.j - j)));
        if (best > rho) ++uncovered;
    }
    CHECK(uncovered == 0);
}

TEST_CASE("truth-anchored linear lattice contains f*") {
    InstanceSpec ispec;
    ispec.kind = InstanceKind::LinearAmdp;
    ispec.n_states = 4;
    ispec.n_actions = 2;
    ispec.feature_dim = 2;
    ispec.seed = 3;
    auto inst = linear_amdp_instance(ispec);
    auto sol = evi_solve(inst.model);
    Vector omega = linear_q_parameter(inst.features, sol);
    LatticeSpec spec;
    spec.kind = ClassKind::LinearAmdpLattice;
    spec.n_states = 4;
    spec.n_actions = 2;
    spec.features = inst.features.phi;
    spec.bound = omega.cwiseAbs().maxCoeff() + 0.2;
    spec.anchor = omega;
    spec.j_anchor = sol.j_star;
    spec.truth = &inst.model;
    auto cls = build_lattice_cover(spec, 0.25);
    REQUIRE(cls.truth.has_value());
    CHECK(realizability_gap(cls, sol) <= 1e-7);
    CHECK(cls.aux_size() > cls.size());
    // images keep the members as the leading entries of G
    for (std::size_t i = 0; i < cls.size(); ++i) CHECK(cls.auxiliary[i].q == cls.members[i].q);

    spec.anchor = Vector::Constant(2, spec.bound + 1);
    CHECK_THROWS_AS(build_lattice_cover(spec, 0.25), RealizabilityViolated);
}

TEST_CASE("mixture lattice keeps only valid kernels") {
    auto feats = toy_mixture();
    LatticeSpec spec;
    spec.kind = ClassKind::LinearMixtureLattice;
    spec.n_states = 2;
    spec.n_actions = 1;
    spec.mixture = feats;
    spec.bound = 1.0;
    spec.discrepancy = DiscrepancyKind::Mle;
    auto cls = build_lattice_cover(spec, 0.25);
    CHECK(cls.model_based());
    for (const auto& m : cls.models) {
        CHECK(std::abs(m.theta.sum() - 1.0) <= 1e-9);
        CHECK(m.theta.norm() <= 1.0 + 1e-9);
        CHECK(m.transition.minCoeff() >= 0.0);
        CHECK(m.solve_residual <= 1e-6);
    }
}

TEST_CASE("explicit class json") {
    auto doc = nlohmann::json::parse(R"([{"q": [[0.1, 0.2]], "j": 0.3}, {"q": [[0.0, -0.1]], "j": -0.2}])");
    auto cls = load_explicit_class(doc, DiscrepancyKind::Bellman);
    CHECK(cls.size() == 2);
    CHECK(cls.members[0].policy[0] == 1);
    CHECK(cls.members[1].v(0) == doctest::Approx(0.0));
    CHECK_THROWS_AS(load_explicit_class(nlohmann::json::array(), DiscrepancyKind::Bellman), ValidationError);
    CHECK_THROWS_AS(load_explicit_class(doc, DiscrepancyKind::Mle), ValidationError);
}
