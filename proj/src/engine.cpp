#include "engine.hpp"

#include <cmath>
#include <limits>
#include <map>

namespace loop::detail {

std::size_t argmin(const std::vector<double>& v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] < v[best]) best = i;
    return best;
}

namespace {

Eigen::Index ix(std::size_t i) { return static_cast<Eigen::Index>(i); }

double min_of(const std::vector<double>& v) { return v[argmin(v)]; }

// L(f, g) = sum_i (c_g(sa_i) - r_i - V_f(s'_i))^2 with c_g = Q_g + J_g.
// Per (sa, s') we keep the count n, sum r and sum r^2, which gives
// L = sum_sa N c^2 - 2 c m1_f + m2_f.
class BellmanTracker final : public LossTracker {
public:
    explicit BellmanTracker(const HypothesisClass& cls)
        : cls_(cls), gs_(cls.model_based() ? cls.members : cls.auxiliary), S_(cls.n_states()),
          A_(cls.n_actions()), SA_(S_ * A_) {
        const std::size_t G = gs_.size();
        ct_ = Matrix(ix(SA_), ix(G));
        for (std::size_t g = 0; g < G; ++g)
            for (std::size_t sa = 0; sa < SA_; ++sa)
                ct_(ix(sa), ix(g)) = gs_[g].q(ix(sa / A_), ix(sa % A_)) + gs_[g].j;
        // members sharing a greedy value vector share their loss rows
        std::map<std::vector<double>, std::size_t> seen;
        v_index_.reserve(cls.size());
        for (const auto& m : cls.members) {
            std::vector<double> key(m.v.data(), m.v.data() + m.v.size());
            auto [it, inserted] = seen.emplace(std::move(key), values_.size());
            if (inserted) values_.push_back(m.v);
            v_index_.push_back(it->second);
        }
        n_ = Matrix::Zero(ix(SA_), ix(S_));
        r1_ = Matrix::Zero(ix(SA_), ix(S_));
        r2_ = Matrix::Zero(ix(SA_), ix(S_));
        row_.assign(G, 0.0);
        focus_v_ = cls.members.front().v;
    }

    void observe(const Trajectory& z, std::size_t) override {
        const std::size_t sa = z.s * A_ + z.a;
        n_(ix(sa), ix(z.s_next)) += 1.0;
        r1_(ix(sa), ix(z.s_next)) += z.r;
        r2_(ix(sa), ix(z.s_next)) += z.r * z.r;
        const double target = z.r + focus_v_(ix(z.s_next));
        const double* c = ct_.row(ix(sa)).data();
        const std::size_t G = row_.size();
        for (std::size_t g = 0; g < G; ++g) {
            const double d = c[g] - target;
            row_[g] += d * d;
        }
    }

    std::vector<double> gaps() override {
        const auto Fv = static_cast<Eigen::Index>(values_.size());
        Matrix vt(ix(S_), Fv);
        for (Eigen::Index k = 0; k < Fv; ++k) vt.col(k) = values_[static_cast<std::size_t>(k)];
        const Vector nsa = n_.rowwise().sum();
        // m1(sa, v) = sum_s' R1 + n V(s');  m2(sa, v) = sum_s' R2 + 2 V R1 + n V^2
        Matrix m1 = n_ * vt;
        m1.colwise() += r1_.rowwise().sum();
        Matrix m2 = 2.0 * (r1_ * vt) + n_ * vt.cwiseProduct(vt);
        m2.colwise() += r2_.rowwise().sum();
        const Eigen::RowVectorXd m2tot = m2.colwise().sum();
        const Vector quad = ct_.cwiseProduct(ct_).transpose() * nsa;  // G
        Matrix loss = -2.0 * (ct_.transpose() * m1);                  // G x Fv
        loss.colwise() += quad;
        loss.rowwise() += m2tot;
        const Eigen::RowVectorXd colmin = loss.colwise().minCoeff();
        std::vector<double> out(cls_.size());
        for (std::size_t f = 0; f < out.size(); ++f) {
            const auto k = ix(v_index_[f]);
            out[f] = std::max(0.0, loss(ix(f), k) - colmin(k));
        }
        return out;
    }

    void focus(std::size_t f) override {
        focus_ = f;
        focus_v_ = cls_.members[f].v;
        const Vector nsa = n_.rowwise().sum();
        const Vector m1 = n_ * focus_v_ + r1_.rowwise().sum();
        const double m2 = (2.0 * (r1_ * focus_v_) + n_ * focus_v_.cwiseProduct(focus_v_)).sum() + r2_.sum();
        const Vector row = ct_.cwiseProduct(ct_).transpose() * nsa - 2.0 * (ct_.transpose() * m1);
        for (std::size_t g = 0; g < row_.size(); ++g) row_[g] = row(ix(g)) + m2;
    }

    double focus_gap() const override { return std::max(0.0, row_[focus_] - min_of(row_)); }
    std::size_t focus_argmin() const override { return argmin(row_); }

private:
    const HypothesisClass& cls_;
    const std::vector<ValueHypothesis>& gs_;
    std::size_t S_, A_, SA_;
    Matrix ct_;  // SA x G
    std::vector<Vector> values_;
    std::vector<std::size_t> v_index_;
    Matrix n_, r1_, r2_;
    std::size_t focus_ = 0;
    Vector focus_v_;
    std::vector<double> row_;
};

// Losses that do not depend on the first argument f: one shared vector over g.
class SharedVectorTracker : public LossTracker {
public:
    explicit SharedVectorTracker(std::size_t G) : loss_(G, 0.0) {}

    std::vector<double> gaps() override {
        const double lo = min_of(loss_);
        std::vector<double> out(loss_.size());
        for (std::size_t f = 0; f < out.size(); ++f)
            out[f] = std::isinf(loss_[f]) ? std::numeric_limits<double>::infinity() : std::max(0.0, loss_[f] - lo);
        return out;
    }
    void focus(std::size_t f) override { focus_ = f; }
    double focus_gap() const override {
        if (std::isinf(loss_[focus_])) return std::numeric_limits<double>::infinity();
        return std::max(0.0, loss_[focus_] - min_of(loss_));
    }
    std::size_t focus_argmin() const override { return argmin(loss_); }

protected:
    std::vector<double> loss_;
    std::size_t focus_ = 0;
};

// l_{f_i}(., g, zeta_i) = r_g + P_g V_{f_i} - r - V_{f_i}(s'); the prediction
// table is rebuilt whenever the executed member changes.
class RegressionTracker final : public SharedVectorTracker {
public:
    explicit RegressionTracker(const HypothesisClass& cls)
        : SharedVectorTracker(cls.models.size()), cls_(cls), S_(cls.n_states()), A_(cls.n_actions()) {}

    void observe(const Trajectory& z, std::size_t active) override {
        if (active != cached_) rebuild(active);
        const std::size_t sa = z.s * A_ + z.a;
        const double target = z.r + cls_.members[active].v(ix(z.s_next));
        const double* x = pred_.row(ix(sa)).data();
        for (std::size_t g = 0; g < loss_.size(); ++g) {
            const double d = x[g] - target;
            loss_[g] += d * d;
        }
    }

private:
    void rebuild(std::size_t active) {
        const auto& v = cls_.members[active].v;
        const std::size_t G = cls_.models.size();
        pred_ = Matrix(ix(S_ * A_), ix(G));
        for (std::size_t g = 0; g < G; ++g) {
            const Vector pv = cls_.models[g].transition * v;
            for (std::size_t sa = 0; sa < S_ * A_; ++sa)
                pred_(ix(sa), ix(g)) = cls_.models[g].reward(ix(sa / A_), ix(sa % A_)) + pv(ix(sa));
        }
        cached_ = active;
    }

    const HypothesisClass& cls_;
    std::size_t S_, A_;
    std::size_t cached_ = static_cast<std::size_t>(-1);
    Matrix pred_;  // SA x G
};

class LikelihoodTracker final : public SharedVectorTracker {
public:
    explicit LikelihoodTracker(const HypothesisClass& cls)
        : SharedVectorTracker(cls.models.size()), S_(cls.n_states()), A_(cls.n_actions()) {
        const std::size_t G = cls.models.size();
        nll_ = Matrix(ix(S_ * A_ * S_), ix(G));
        for (std::size_t g = 0; g < G; ++g)
            for (std::size_t sa = 0; sa < S_ * A_; ++sa)
                for (std::size_t n = 0; n < S_; ++n) {
                    const double p = cls.models[g].transition(ix(sa), ix(n));
                    nll_(ix(sa * S_ + n), ix(g)) = p > 0.0 ? -std::log(p) : std::numeric_limits<double>::infinity();
                }
    }

    void observe(const Trajectory& z, std::size_t) override {
        const double* x = nll_.row(ix((z.s * A_ + z.a) * S_ + z.s_next)).data();
        for (std::size_t g = 0; g < loss_.size(); ++g) loss_[g] += x[g];
    }

private:
    std::size_t S_, A_;
    Matrix nll_;  // (SA*S) x G
};

} // namespace

std::unique_ptr<LossTracker> make_bellman_tracker(const HypothesisClass& cls) {
    return std::make_unique<BellmanTracker>(cls);
}

std::unique_ptr<LossTracker> make_regression_tracker(const HypothesisClass& cls) {
    if (!cls.model_based()) throw ValidationError("regression loss needs a model class");
    return std::make_unique<RegressionTracker>(cls);
}

std::unique_ptr<LossTracker> make_likelihood_tracker(const HypothesisClass& cls) {
    if (!cls.model_based()) throw ValidationError("likelihood loss needs a model class");
    return std::make_unique<LikelihoodTracker>(cls);
}

std::unique_ptr<LossTracker> make_tracker(const HypothesisClass& cls) {
    switch (cls.discrepancy) {
    case DiscrepancyKind::Bellman: return make_bellman_tracker(cls);
    case DiscrepancyKind::ModelBased: return make_regression_tracker(cls);
    case DiscrepancyKind::Mle: return make_likelihood_tracker(cls);
    }
    throw ValidationError("unknown discrepancy kind");
}

} // namespace loop::detail
