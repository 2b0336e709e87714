#include "loop/complexity.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string_view>
#include <unordered_map>

namespace loop {

namespace {

Eigen::Index ix(std::size_t i) { return static_cast<Eigen::Index>(i); }

// values within this relative distance of eps' count as equal to it, on both
// sides, so rounding in sums of squares cannot flip either test
constexpr double kSnap = 1e-12;
// eps' is placed just below each achievable gap so the strict gap holds
constexpr double kBelowGap = 1e-9;

bool admissible(double norm2, double eps) { return norm2 <= eps * eps * (1.0 + 2.0 * kSnap); }
bool exceeds(double gap, double eps) { return gap > eps * (1.0 + kSnap); }

/**
 * Longest-sequence search shared by the pointwise and distributional
 * dimensions. Row k of `v` is a witness candidate (a difference f - f', or a
 * function's means); column z is an input. z extends the sequence when some
 * candidate still has prefix norm <= eps' and |v(k, z)| > eps'. The reachable
 * state depends only on how often each input was used, which keys the memo.
 * A candidate that witnesses once has norm > eps' afterwards, so depth is at
 * most the number of candidates.
 */
class SequenceSearch {
public:
    SequenceSearch(const Matrix& v, double eps, std::size_t budget)
        : v_(v), eps_(eps), budget_(budget), norm2_(static_cast<std::size_t>(v.rows()), 0.0),
          counts_(static_cast<std::size_t>(v.cols()), 0) {
        witnesses_.resize(counts_.size());
        for (std::size_t z = 0; z < counts_.size(); ++z)
            for (std::size_t k = 0; k < norm2_.size(); ++k)
                if (exceeds(std::abs(v_(ix(k), ix(z))), eps_)) witnesses_[z].push_back(k);
    }

    std::size_t run() { return longest(); }
    bool out_of_budget() const { return out_of_budget_; }
    std::size_t nodes() const { return nodes_; }

    std::vector<std::size_t> witness() {
        if (out_of_budget_) return best_path_;
        std::fill(norm2_.begin(), norm2_.end(), 0.0);
        std::fill(counts_.begin(), counts_.end(), 0);
        std::vector<std::size_t> seq;
        for (;;) {
            auto it = memo_.find(key());
            if (it == memo_.end() || it->second.second == kNoIndex) break;
            const std::size_t z = it->second.second;
            seq.push_back(z);
            apply(z);
        }
        return seq;
    }

private:
    std::string key() const {
        return {reinterpret_cast<const char*>(counts_.data()), counts_.size() * sizeof(std::uint32_t)};
    }

    bool independent(std::size_t z) const {
        for (std::size_t k : witnesses_[z])
            if (admissible(norm2_[k], eps_)) return true;
        return false;
    }

    void apply(std::size_t z) {
        ++counts_[z];
        for (std::size_t k = 0; k < norm2_.size(); ++k) {
            const double d = v_(ix(k), ix(z));
            norm2_[k] += d * d;
        }
    }

    std::size_t longest() {
        const auto k = key();
        if (auto it = memo_.find(k); it != memo_.end()) return it->second.first;
        if (++nodes_ > budget_) {
            out_of_budget_ = true;
            return 0;
        }
        std::size_t best = 0;
        std::size_t arg = kNoIndex;
        for (std::size_t z = 0; z < counts_.size(); ++z) {
            if (!independent(z)) continue;
            const auto saved = norm2_;
            apply(z);
            path_.push_back(z);
            if (path_.size() > best_path_.size()) best_path_ = path_;
            const std::size_t len = 1 + longest();
            path_.pop_back();
            --counts_[z];
            norm2_ = saved;
            if (len > best) {
                best = len;
                arg = z;
            }
            if (out_of_budget_) break;
        }
        if (!out_of_budget_) memo_.emplace(k, std::make_pair(best, arg));
        return best;
    }

    const Matrix& v_;
    double eps_;
    std::size_t budget_;
    std::size_t nodes_ = 0;
    bool out_of_budget_ = false;
    std::vector<double> norm2_;
    std::vector<std::uint32_t> counts_;
    std::vector<std::vector<std::size_t>> witnesses_;
    std::unordered_map<std::string, std::pair<std::size_t, std::size_t>> memo_;
    std::vector<std::size_t> path_;
    std::vector<std::size_t> best_path_;
};

// Sweeps eps' over the values just below each achievable gap above eps. The
// set of eps' that certify a fixed sequence is a finite union of intervals
// [norm, gap), so one of these points lies in it whenever it is nonempty.
DimWitness sweep_search(const Matrix& v, double eps, const SearchOptions& options) {
    if (!(eps > 0.0)) throw ValidationError("eps must be positive");
    std::vector<double> levels;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        const double g = std::abs(v.data()[i]);
        if (exceeds(g, eps)) levels.push_back(std::max(eps, g * (1.0 - kBelowGap)));
    }
    std::sort(levels.begin(), levels.end());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());

    DimWitness best;
    best.eps_used = eps;
    std::size_t used = 0;
    for (double level : levels) {
        const std::size_t left = options.max_nodes > used ? options.max_nodes - used : 0;
        SequenceSearch search(v, level, left);
        search.run();
        used += search.nodes();
        auto seq = search.witness();
        if (seq.size() > best.dimension) {
            best.dimension = seq.size();
            best.sequence = std::move(seq);
            best.eps_used = level;
        }
        if (search.out_of_budget()) {
            best.exhaustive = false;
            break;
        }
    }
    best.nodes = used;
    if (!best.exhaustive && options.throw_on_budget)
        throw SearchBudgetExceeded("dimension search exceeded " + std::to_string(options.max_nodes) +
                                       " nodes; best sequence so far has length " + std::to_string(best.dimension),
                                   best.dimension);
    return best;
}

// Pairwise differences with sign fixed (first nonzero entry positive) and
// duplicates removed; zero rows carry no witness.
Matrix difference_candidates(const EvaluatedClass& cls) {
    std::vector<std::vector<double>> rows;
    const std::size_t F = cls.n_functions();
    const std::size_t X = cls.n_points();
    for (std::size_t i = 0; i < F; ++i)
        for (std::size_t j = i + 1; j < F; ++j) {
            std::vector<double> d(X);
            double sign = 0.0;
            for (std::size_t x = 0; x < X; ++x) {
                d[x] = cls.table(ix(i), ix(x)) - cls.table(ix(j), ix(x));
                if (sign == 0.0 && d[x] != 0.0) sign = d[x] > 0 ? 1.0 : -1.0;
            }
            if (sign == 0.0) continue;
            for (auto& x : d) x *= sign;
            rows.push_back(std::move(d));
        }
    std::sort(rows.begin(), rows.end());
    rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
    Matrix out(ix(rows.size()), ix(X));
    for (std::size_t k = 0; k < rows.size(); ++k)
        for (std::size_t x = 0; x < X; ++x) out(ix(k), ix(x)) = rows[k][x];
    return out;
}

void check_measures(const EvaluatedClass& cls, const std::vector<Vector>& measures) {
    for (std::size_t m = 0; m < measures.size(); ++m) {
        const auto& mu = measures[m];
        if (static_cast<std::size_t>(mu.size()) != cls.n_points())
            throw ValidationError("measure " + std::to_string(m) + " has " + std::to_string(mu.size()) +
                                  " entries, class has " + std::to_string(cls.n_points()) + " points");
        if (mu.minCoeff() < 0.0 || std::abs(mu.sum() - 1.0) > 1e-9)
            throw ValidationError("measure " + std::to_string(m) + " is not a probability vector");
    }
}

void check_indices(std::size_t n, std::size_t z, const std::vector<std::size_t>& prefix) {
    if (z >= n) throw IndexOutOfRange("index " + std::to_string(z) + " out of range");
    for (auto x : prefix)
        if (x >= n) throw IndexOutOfRange("prefix index " + std::to_string(x) + " out of range");
}

double log_det_gain(const std::vector<Vector>& vs, const std::vector<std::size_t>& seq, double eps) {
    const auto d = vs.front().size();
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(d, d);
    const double w = 1.0 / (eps * eps);
    for (auto i : seq) a.noalias() += w * vs[i] * vs[i].transpose();
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

double multiset_count(std::size_t m, std::size_t n) {
    double c = 1.0;
    for (std::size_t i = 1; i <= n; ++i) c = c * static_cast<double>(m + i - 1) / static_cast<double>(i);
    return c;
}

// Best log det over all multisets of size n, in nondecreasing index order.
void best_multiset(const std::vector<Vector>& vs, double eps, std::size_t n, std::vector<std::size_t>& cur,
                   std::size_t start, double& best, std::vector<std::size_t>& arg) {
    if (cur.size() == n) {
        const double v = log_det_gain(vs, cur, eps);
        if (v > best) {
            best = v;
            arg = cur;
        }
        return;
    }
    for (std::size_t i = start; i < vs.size(); ++i) {
        cur.push_back(i);
        best_multiset(vs, eps, n, cur, i, best, arg);
        cur.pop_back();
    }
}

struct LineFit {
    double coef = 0.0;
    double intercept = 0.0;
};

// min sum (y - a x - b)^2 over a, b >= 0, then b raised so y <= a x + b everywhere.
LineFit fit_upper_line(const std::vector<double>& y, const std::vector<double>& x) {
    const auto n = static_cast<double>(y.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    auto sse = [&](double a, double b) {
        double s = 0;
        for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - a * x[i] - b) * (y[i] - a * x[i] - b);
        return s;
    };
    std::vector<LineFit> cands{{0.0, 0.0}, {0.0, std::max(0.0, sy / n)}};
    if (sxx > 0) cands.push_back({std::max(0.0, sxy / sxx), 0.0});
    const double det = n * sxx - sx * sx;
    if (det > 1e-12 * std::max(1.0, n * sxx)) {
        const double a = (n * sxy - sx * sy) / det;
        const double b = (sy - a * sx) / n;
        if (a >= 0 && b >= 0) cands.push_back({a, b});
    }
    LineFit best = cands.front();
    double best_sse = sse(best.coef, best.intercept);
    for (const auto& c : cands)
        if (const double s = sse(c.coef, c.intercept); s < best_sse) {
            best = c;
            best_sse = s;
        }
    for (std::size_t i = 0; i < y.size(); ++i) best.intercept = std::max(best.intercept, y[i] - best.coef * x[i]);
    return best;
}

} // namespace

// ---- evaluated classes -----------------------------------------------------

void EvaluatedClass::validate() const {
    if (table.rows() < 1) throw ValidationError("evaluated class needs at least one function");
    if (!table.allFinite()) throw ValidationError("evaluated class table has non-finite entries");
    if (!points.empty() && points.size() != n_points())
        throw ValidationError("point labels do not match the table's column count");
}

EvaluatedClass EvaluatedClass::from_rows(const std::vector<std::vector<double>>& rows) {
    EvaluatedClass out;
    if (rows.empty()) throw ValidationError("evaluated class needs at least one function");
    out.table = Matrix(ix(rows.size()), ix(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows.front().size()) throw ValidationError("ragged function table");
        for (std::size_t x = 0; x < rows[i].size(); ++x) out.table(ix(i), ix(x)) = rows[i][x];
    }
    out.validate();
    return out;
}

nlohmann::json to_json(const EvaluatedClass& cls) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < cls.table.rows(); ++i)
        rows.push_back(std::vector<double>(cls.table.row(i).data(), cls.table.row(i).data() + cls.table.cols()));
    nlohmann::json doc{{"table", rows}};
    if (!cls.points.empty()) doc["points"] = cls.points;
    return doc;
}

EvaluatedClass evaluated_class_from_json(const nlohmann::json& doc) {
    try {
        auto out = EvaluatedClass::from_rows(doc.at("table").get<std::vector<std::vector<double>>>());
        if (doc.contains("points")) out.points = doc.at("points").get<std::vector<std::string>>();
        out.validate();
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed evaluated class: ") + e.what());
    }
}

nlohmann::json to_json(const DimWitness& w) {
    return {{"dimension", w.dimension}, {"sequence", w.sequence}, {"eps_used", w.eps_used},
            {"exhaustive", w.exhaustive}, {"nodes", w.nodes}};
}

DimWitness witness_from_json(const nlohmann::json& doc) {
    try {
        DimWitness w;
        w.dimension = doc.at("dimension").get<std::size_t>();
        w.sequence = doc.at("sequence").get<std::vector<std::size_t>>();
        w.eps_used = doc.at("eps_used").get<double>();
        w.exhaustive = doc.value("exhaustive", true);
        w.nodes = doc.value("nodes", std::size_t{0});
        if (w.sequence.size() != w.dimension) throw ValidationError("witness length differs from its dimension");
        return w;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed witness: ") + e.what());
    }
}

// ---- independence ------------------------------------------------------------

bool point_independent(std::size_t z, const std::vector<std::size_t>& prefix, const EvaluatedClass& cls,
                       double eps_prime) {
    check_indices(cls.n_points(), z, prefix);
    const std::size_t F = cls.n_functions();
    for (std::size_t i = 0; i < F; ++i)
        for (std::size_t j = i + 1; j < F; ++j) {
            const double gap = std::abs(cls.table(ix(i), ix(z)) - cls.table(ix(j), ix(z)));
            if (!exceeds(gap, eps_prime)) continue;
            double norm2 = 0.0;
            for (auto x : prefix) {
                const double d = cls.table(ix(i), ix(x)) - cls.table(ix(j), ix(x));
                norm2 += d * d;
            }
            if (admissible(norm2, eps_prime)) return true;
        }
    return false;
}

bool measure_independent(std::size_t nu, const std::vector<std::size_t>& prefix, const EvaluatedClass& cls,
                         const std::vector<Vector>& measures, double eps_prime) {
    check_indices(measures.size(), nu, prefix);
    check_measures(cls, measures);
    for (std::size_t k = 0; k < cls.n_functions(); ++k) {
        const Vector f = cls.table.row(ix(k)).transpose();
        if (!exceeds(std::abs(measures[nu].dot(f)), eps_prime)) continue;
        double norm2 = 0.0;
        for (auto m : prefix) norm2 += measures[m].dot(f) * measures[m].dot(f);
        if (admissible(norm2, eps_prime)) return true;
    }
    return false;
}

// ---- dimensions ------------------------------------------------------------

DimWitness eluder_dim(const EvaluatedClass& cls, double eps, const SearchOptions& options) {
    cls.validate();
    return sweep_search(difference_candidates(cls), eps, options);
}

DimWitness de_dim(const EvaluatedClass& cls, const std::vector<Vector>& measures, double eps,
                  const SearchOptions& options) {
    cls.validate();
    check_measures(cls, measures);
    if (!(eps > 0.0)) throw ValidationError("eps must be positive");
    if (measures.empty()) return DimWitness{0, {}, eps, true, 0};
    Matrix means(cls.table.rows(), ix(measures.size()));
    for (std::size_t m = 0; m < measures.size(); ++m) means.col(ix(m)) = cls.table * measures[m];
    return sweep_search(means, eps, options);
}

EvaluatedClass difference_class(const EvaluatedClass& cls) {
    cls.validate();
    const auto F = cls.table.rows();
    EvaluatedClass out;
    out.points = cls.points;
    out.table = Matrix(F * F, cls.table.cols());
    for (Eigen::Index i = 0; i < F; ++i)
        for (Eigen::Index j = 0; j < F; ++j) out.table.row(i * F + j) = cls.table.row(i) - cls.table.row(j);
    return out;
}

std::vector<Vector> dirac_measures(std::size_t n) {
    std::vector<Vector> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(Vector::Unit(ix(n), ix(i)));
    return out;
}

EvaluatedClass bellman_error_class(const TabularAMDP& model, const HypothesisClass& cls) {
    if (cls.n_states() != model.n_states() || cls.n_actions() != model.n_actions())
        throw ValidationError("class and model disagree on state/action counts");
    EvaluatedClass out;
    const std::size_t S = model.n_states(), A = model.n_actions();
    out.table = Matrix(ix(cls.size()), ix(S * A));
    for (std::size_t f = 0; f < cls.size(); ++f) {
        const auto e = bellman_error_table(model, cls.members[f].q, cls.members[f].j);
        for (std::size_t s = 0; s < S; ++s)
            for (std::size_t a = 0; a < A; ++a) out.table(ix(f), ix(s * A + a)) = e(ix(s), ix(a));
    }
    for (std::size_t s = 0; s < S; ++s)
        for (std::size_t a = 0; a < A; ++a) out.points.push_back("(" + std::to_string(s) + "," + std::to_string(a) + ")");
    return out;
}

DimWitness abe_dim(const TabularAMDP& model, const HypothesisClass& cls, double eps, const SearchOptions& options) {
    const auto errors = bellman_error_class(model, cls);
    return de_dim(errors, dirac_measures(errors.n_points()), eps, options);
}

DimWitness effective_dim(const std::vector<Vector>& vectors, double eps) {
    if (!(eps > 0.0)) throw ValidationError("eps must be positive");
    DimWitness out;
    out.eps_used = eps;
    if (vectors.empty()) return out;
    const auto d = vectors.front().size();
    double r2 = 0.0;
    for (const auto& v : vectors) {
        if (v.size() != d) throw FeatureDimensionMismatch("vectors differ in dimension");
        r2 = std::max(r2, v.squaredNorm());
    }
    if (r2 == 0.0) return out;
    const double threshold = 1.0 / std::numbers::e;
    const double dd = static_cast<double>(d);
    std::vector<std::size_t> greedy;
    for (std::size_t n = 1;; ++n) {
        // trace bound: log det <= d log(1 + n R^2 / (d eps^2))
        const double cap = dd * std::log1p(static_cast<double>(n) * r2 / (dd * eps * eps)) / static_cast<double>(n);
        if (cap < threshold) break;
        double best = -1.0;
        std::vector<std::size_t> arg;
        if (multiset_count(vectors.size(), n) <= 2e5) {
            std::vector<std::size_t> cur;
            best_multiset(vectors, eps, n, cur, 0, best, arg);
        } else {
            out.exhaustive = false;
            arg = greedy;
            std::size_t pick = 0;
            for (std::size_t i = 0; i < vectors.size(); ++i) {
                arg.push_back(i);
                const double v = log_det_gain(vectors, arg, eps);
                arg.pop_back();
                if (v > best) {
                    best = v;
                    pick = i;
                }
            }
            arg.push_back(pick);
        }
        greedy = arg;
        if (best / static_cast<double>(n) >= threshold) {
            out.dimension = n;
            out.sequence = arg;
        }
    }
    return out;
}

// ---- AGEC audit ------------------------------------------------------------

std::string to_string(NormMode mode) { return mode == NormMode::L2Squared ? "l2-squared" : "l1-sqrt"; }

NormMode parse_norm_mode(const std::string& text) {
    if (text == "l2-squared") return NormMode::L2Squared;
    if (text == "l1-sqrt") return NormMode::L1Sqrt;
    throw ValidationError("unknown norm mode '" + text + "' (expected l2-squared or l1-sqrt)");
}

nlohmann::json to_json(const AgecAuditReport& r) {
    return {{"norm_mode", to_string(r.norm_mode)},
            {"fitted_d_g", r.fitted_d_g},
            {"fitted_kappa_g", r.fitted_kappa_g},
            {"dominance_burn_in", r.dominance_burn_in},
            {"transfer_burn_in", r.transfer_burn_in},
            {"beta_needed", r.beta_needed},
            {"residual", r.residual},
            {"lhs_series", r.lhs_series},
            {"rhs_series", r.rhs_series},
            {"transfer_lhs", r.transfer_lhs},
            {"transfer_rhs", r.transfer_rhs}};
}

AgecAuditReport audit_agec(const RunTrace& trace, const TabularAMDP& model, const HypothesisClass& cls,
                           NormMode mode) {
    if (trace.steps.empty()) throw ValidationError("audit needs a nonempty trace");
    if (cls.n_states() != model.n_states() || cls.n_actions() != model.n_actions())
        throw ValidationError("class and model disagree on state/action counts");
    const std::size_t F = cls.size();
    const std::size_t SA = model.n_pairs();
    for (const auto& st : trace.steps)
        if (st.f_index >= F) throw IndexOutOfRange("trace step " + std::to_string(st.t) + " has no valid f_index");

    std::unordered_map<std::size_t, double> cache;
    auto expected = [&](std::size_t fp, std::size_t f, std::size_t sa) {
        const std::size_t key = (fp * F + f) * SA + sa;
        if (auto it = cache.find(key); it != cache.end()) return it->second;
        const double x = expected_discrepancy(model, cls, fp, f, f, sa / model.n_actions(), sa % model.n_actions());
        cache.emplace(key, x);
        return x;
    };
    auto weight = [mode](double x) { return mode == NormMode::L2Squared ? x * x : std::abs(x); };

    const std::size_t T = trace.steps.size();
    std::vector<double> bellman(T), in_sample(T), out_sample(T);
    // visit counts of (f_i, sa_i) over the steps before t
    std::unordered_map<std::size_t, double> counts;
    std::size_t current = kNoIndex;
    double running = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
        const auto& st = trace.steps[t];
        const std::size_t f = st.f_index;
        const std::size_t sa = model.pair(st.s, st.a);
        if (f != current) {
            running = 0.0;
            for (const auto& [key, n] : counts) running += n * weight(expected(key / SA, f, key % SA));
            current = f;
        }
        in_sample[t] = running;
        bellman[t] = bellman_error_eval(model, cls.members[f].q, cls.members[f].j, st.s, st.a);
        out_sample[t] = weight(expected(f, f, sa));
        counts[f * SA + sa] += 1.0;
        running += out_sample[t];
    }

    AgecAuditReport rep;
    rep.norm_mode = mode;
    std::vector<double> dom_feature(T), transfer_feature(T);
    rep.lhs_series.resize(T);
    rep.transfer_lhs.resize(T);
    double cum_b = 0.0, cum_in = 0.0, cum_out = 0.0;
    const double sp = mode == NormMode::L1Sqrt ? evi_solve(model).span : 0.0;
    for (std::size_t t = 0; t < T; ++t) {
        cum_b += bellman[t];
        cum_in += in_sample[t];
        cum_out += out_sample[t];
        rep.lhs_series[t] = cum_b;
        rep.transfer_lhs[t] = cum_out;
        const double steps = static_cast<double>(t + 1);
        if (mode == NormMode::L2Squared) {
            dom_feature[t] = std::sqrt(cum_in);
            rep.beta_needed = std::max(rep.beta_needed, in_sample[t]);
        } else {
            dom_feature[t] = sp * cum_out;
            rep.beta_needed = std::max(rep.beta_needed, in_sample[t] * in_sample[t] / steps);
        }
    }
    for (std::size_t t = 0; t < T; ++t) {
        const double steps = static_cast<double>(t + 1);
        transfer_feature[t] = mode == NormMode::L2Squared ? rep.beta_needed * std::log(steps)
                                                          : std::sqrt(rep.beta_needed * steps);
    }
    const auto dom = fit_upper_line(rep.lhs_series, dom_feature);
    const auto tr = fit_upper_line(rep.transfer_lhs, transfer_feature);
    rep.fitted_d_g = mode == NormMode::L2Squared ? dom.coef * dom.coef : dom.coef;
    rep.fitted_kappa_g = mode == NormMode::L2Squared ? tr.coef : tr.coef * tr.coef;
    rep.dominance_burn_in = dom.intercept;
    rep.transfer_burn_in = tr.intercept;
    rep.rhs_series.resize(T);
    rep.transfer_rhs.resize(T);
    rep.residual = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < T; ++t) {
        rep.rhs_series[t] = dom.coef * dom_feature[t] + dom.intercept;
        rep.transfer_rhs[t] = tr.coef * transfer_feature[t] + tr.intercept;
        rep.residual = std::max({rep.residual, rep.lhs_series[t] - rep.rhs_series[t],
                                 rep.transfer_lhs[t] - rep.transfer_rhs[t]});
    }
    return rep;
}

} // namespace loop
