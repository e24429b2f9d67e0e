#pragma once

#include "precondlasso/solvers.hpp"

namespace precondlasso {

struct CompatReport {
    double alpha_l1 = std::numeric_limits<double>::quiet_NaN();
    bool alpha_exact = false;          // false: alpha_l1 is an upper bound from a feasible w
    double beta_l1_lb = 0.0;           // certified lower bound
    double gamma_lb = std::numeric_limits<double>::quiet_NaN();
    std::string method;
    std::optional<Vector> witness_w;
    std::optional<DenseMatrix> witness_subspace;
    std::string beta_method;
};

enum class AlphaMode { Exact, Multistart };

struct AlphaOptions {
    double support_guard = 1e5;
    double sign_guard = 32768;   // 2^15 patterns per support
    Index restarts = 64;
    Index pg_iters = 300;
    double swap_limit = 2e4;   // n·k above which the swap search is skipped
    std::uint64_t seed = 0xa1fa;
};

struct AlphaResult {
    double value = std::numeric_limits<double>::infinity();
    Vector w;
    bool exact = false;
};

namespace detail {

inline double l1_ratio(const DenseMatrix& sigma, const SparseMatrix& S, const Vector& w) {
    double den = (S.transpose() * w).lpNorm<1>();
    return w.dot(sigma * w) / (den * den);
}

// Columns of S with a nonzero in any row of U.
inline IndexSet touched_columns(const SparseMatrix& St, const IndexSet& U) {
    // St is Sᵀ stored column-major, so column i of St is row i of S.
    IndexSet cols;
    for (Index i : U)
        for (SparseMatrix::InnerIterator it(St, i); it; ++it)
            if (it.value() != 0.0) cols.push_back(it.row());
    std::sort(cols.begin(), cols.end());
    cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
    return cols;
}

// Exact minimum over w supported on U: min over sign patterns σ of 1/(cᵀΣ_UU⁻¹c), c = (Sσ)_U.
inline AlphaResult alpha_on_support(const DenseMatrix& sigma, const SparseMatrix& S, const SparseMatrix& St,
                                    const IndexSet& U, double sign_guard) {
    AlphaResult best;
    const Index k = static_cast<Index>(U.size());
    IndexSet J = touched_columns(St, U);
    const Index s = static_cast<Index>(J.size());
    if (s == 0) return best;
    if (std::ldexp(1.0, static_cast<int>(s - 1)) > sign_guard)
        throw TooLarge("support needs 2^" + std::to_string(s - 1) + " sign patterns");
    DenseMatrix B(k, s);   // S restricted to rows U, columns J
    for (Index a = 0; a < k; ++a)
        for (Index b = 0; b < s; ++b) B(a, b) = S.coeff(U[a], J[b]);
    Eigen::LLT<DenseMatrix> llt(submatrix(sigma, U, U));
    if (llt.info() != Eigen::Success) throw NotPositiveDefinite("Sigma_UU");
    Vector sg = Vector::Ones(s);
    const std::uint64_t patterns = std::uint64_t{1} << (s - 1);
    double top = 0.0;
    Vector best_c;
    for (std::uint64_t p = 0; p < patterns; ++p) {
        for (Index b = 1; b < s; ++b) sg(b) = (p >> (b - 1)) & 1 ? -1.0 : 1.0;
        Vector c = B * sg;
        double q = c.dot(llt.solve(c));
        if (q > top) {
            top = q;
            best_c = c;
        }
    }
    if (top <= 0.0) return best;
    best.value = 1.0 / top;
    Vector wu = llt.solve(best_c) / top;
    best.w = Vector::Zero(sigma.rows());
    for (Index a = 0; a < k; ++a) best.w(U[a]) = wu(a);
    best.exact = true;
    return best;
}

inline Vector keep_top_k(const Vector& w, Index k) {
    std::vector<Index> idx(w.size());
    std::iota(idx.begin(), idx.end(), Index{0});
    std::partial_sort(idx.begin(), idx.begin() + k, idx.end(),
                      [&](Index a, Index b) { return std::abs(w(a)) > std::abs(w(b)); });
    Vector out = Vector::Zero(w.size());
    for (Index i = 0; i < k; ++i) out(idx[i]) = w(idx[i]);
    return out;
}

}  // namespace detail

// inf over k-sparse w of ⟨w,Σw⟩ / ‖Sᵀw‖₁².
inline AlphaResult alpha_l1(const DenseMatrix& sigma, const SparseMatrix& S, Index k, AlphaMode mode = AlphaMode::Exact,
                            AlphaOptions opt = {}) {
    const Index n = sigma.rows();
    if (S.rows() != n) throw std::invalid_argument("alpha_l1: S row count mismatch");
    k = std::clamp<Index>(k, 1, n);
    SparseMatrix St = S.transpose();
    if (mode == AlphaMode::Exact) {
        if (binomial(n, k) > opt.support_guard)
            throw TooLarge("C(n,k) = " + std::to_string(binomial(n, k)) + " exceeds guard");
        AlphaResult best;
        for_each_subset(n, k, [&](const IndexSet& U) {
            AlphaResult r = detail::alpha_on_support(sigma, S, St, U, opt.sign_guard);
            if (r.value < best.value) best = r;
        });
        best.exact = true;
        return best;
    }

    // Projected gradient on the ratio from random k-sparse starts; result is feasible only.
    AlphaResult best;
    RngStream rng(opt.seed, static_cast<std::uint64_t>(n * 131 + k));
    for (Index start = 0; start < opt.restarts; ++start) {
        Vector w = Vector::Zero(n);
        for (Index i : random_subset(rng, n, k)) w(i) = rng.normal();
        double f = detail::l1_ratio(sigma, S, w);
        double step = 0.1;
        for (Index it = 0; it < opt.pg_iters && std::isfinite(f); ++it) {
            Vector sw = St * w;
            double l1 = sw.lpNorm<1>();
            Vector g = 2.0 * (sigma * w) / (l1 * l1) -
                       2.0 * w.dot(sigma * w) / (l1 * l1 * l1) * (S * sw.unaryExpr([](double x) {
                           return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0);
                       }));
            Vector cand = detail::keep_top_k(w - step * g * (l1 * l1) / std::max(1e-300, w.squaredNorm()) * w.norm(), k);
            double fc = cand.norm() > 0 ? detail::l1_ratio(sigma, S, cand) : std::numeric_limits<double>::infinity();
            if (fc < f) {
                w = cand / (St * cand).lpNorm<1>();
                f = fc;
                step *= 1.2;
            } else {
                step *= 0.5;
                if (step < 1e-12) break;
            }
        }
        // Exact refinement on the final support when affordable.
        IndexSet U;
        for (Index i = 0; i < n; ++i)
            if (w(i) != 0.0) U.push_back(i);
        try {
            AlphaResult r = detail::alpha_on_support(sigma, S, St, U, opt.sign_guard);
            if (r.value < f) {
                f = r.value;
                w = r.w;
            }
        } catch (const TooLarge&) {
        }
        // Single-swap local search on the support.
        if (U.size() == static_cast<std::size_t>(k) && static_cast<double>(n) * k <= opt.swap_limit) {
            bool improved = true;
            for (int pass = 0; improved && pass < 20; ++pass) {
                improved = false;
                for (Index pos = 0; pos < k; ++pos)
                    for (Index j = 0; j < n; ++j) {
                        if (std::find(U.begin(), U.end(), j) != U.end()) continue;
                        IndexSet V = U;
                        V[pos] = j;
                        std::sort(V.begin(), V.end());
                        try {
                            AlphaResult r = detail::alpha_on_support(sigma, S, St, V, opt.sign_guard);
                            if (r.value < f * (1.0 - 1e-12)) {
                                f = r.value;
                                w = r.w;
                                U = V;
                                improved = true;
                            }
                        } catch (const TooLarge&) {
                        }
                    }
            }
        }
        if (f < best.value) {
            best.value = f;
            best.w = w;
        }
    }
    best.exact = false;
    return best;
}

// β⁽¹⁾ certificates ------------------------------------------------------------------------

struct BetaCertificate {
    double value = 0.0;
    DenseMatrix basis;
    std::string method;
};

// Certified inf over span(V) of ⟨w,Σw⟩/‖Sᵀw‖₁².
inline BetaCertificate certify_subspace(const DenseMatrix& sigma, const SparseMatrix& S, const DenseMatrix& V0,
                                        double sign_guard = 1 << 20) {
    BetaCertificate c;
    Eigen::HouseholderQR<DenseMatrix> qr(V0);
    DenseMatrix V = qr.householderQ() * DenseMatrix::Identity(V0.rows(), V0.cols());
    c.basis = V;
    const Index d = V.cols();
    DenseMatrix gamma = V.transpose() * sigma * V;
    gamma = 0.5 * (gamma + gamma.transpose());
    DenseMatrix B = S.transpose() * V;   // s×d
    IndexSet rows;
    for (Index j = 0; j < B.rows(); ++j)
        if (B.row(j).norm() > 1e-14 * std::max(1.0, B.norm())) rows.push_back(j);
    const Index s = static_cast<Index>(rows.size());
    if (s == 0) {
        c.method = "degenerate";
        c.value = std::numeric_limits<double>::infinity();
        return c;
    }
    Eigen::LLT<DenseMatrix> llt(gamma);
    if (llt.info() != Eigen::Success) throw NotPositiveDefinite("V^T Sigma V");
    DenseMatrix Br(s, d);
    for (Index a = 0; a < s; ++a) Br.row(a) = B.row(rows[a]);
    // Whitened rows: ‖Sᵀw‖₁ = Σ_j |⟨h_j, x⟩| with x = Lᵀc, ⟨w,Σw⟩ = ‖x‖².
    DenseMatrix H = llt.matrixL().solve(Br.transpose());   // d×s, column j = L⁻¹ b_j
    if (std::ldexp(1.0, static_cast<int>(s - 1)) <= sign_guard) {
        Vector sg = Vector::Ones(s);
        double top = 0.0;
        const std::uint64_t patterns = std::uint64_t{1} << (s - 1);
        for (std::uint64_t p = 0; p < patterns; ++p) {
            for (Index b = 1; b < s; ++b) sg(b) = (p >> (b - 1)) & 1 ? -1.0 : 1.0;
            top = std::max(top, (H * sg).squaredNorm());
        }
        c.value = 1.0 / top;
        c.method = "exact-sign-enumeration";
        return c;
    }
    double triangle = 0.0;
    for (Index j = 0; j < s; ++j) triangle += H.col(j).norm();
    double lb1 = 1.0 / (triangle * triangle);
    Eigen::SelfAdjointEigenSolver<DenseMatrix> es(H * H.transpose());
    double lb2 = 1.0 / (static_cast<double>(s) * es.eigenvalues().maxCoeff());
    c.value = std::max(lb1, lb2);
    c.method = lb1 >= lb2 ? "certificate-triangle" : "certificate-l2";
    return c;
}

// span{e_t, e_2t, …} with t = ⌊n/2m⌋ (1-based indices).
inline DenseMatrix spaced_coordinate_span(Index n, Index m) {
    const Index d = std::min(n, 2 * m);
    const Index t = std::max<Index>(1, n / (2 * m));
    DenseMatrix V = DenseMatrix::Zero(n, d);
    for (Index a = 0; a < d; ++a) V((a + 1) * t - 1, a) = 1.0;
    return V;
}

// Weak RE -------------------------------------------------------------------------------------

inline double lambda_rank(const DenseMatrix& m, Index r) {
    Eigen::SelfAdjointEigenSolver<DenseMatrix> es(m, Eigen::EigenvaluesOnly);
    return es.eigenvalues()(m.rows() - r);   // r-th largest
}

// inf{β : λ_{2m}(Σ − βSSᵀ) ≤ 0} by bisection.
inline double weak_re_beta(const DenseMatrix& sigma, const DenseMatrix& sst, Index m) {
    const Index r = std::min<Index>(2 * m, sigma.rows());
    auto holds = [&](double beta) { return lambda_rank(sigma - beta * sst, r) <= 0.0; };
    double lo = 0.0, hi = 1.0;
    while (!holds(hi)) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e30) return std::numeric_limits<double>::infinity();
    }
    for (int it = 0; it < 200 && hi - lo > 1e-13 * hi; ++it) {
        double mid = 0.5 * (lo + hi);
        (holds(mid) ? hi : lo) = mid;
    }
    return hi;
}

inline DenseMatrix weak_re_subspace(const DenseMatrix& sigma, const DenseMatrix& sst, Index m, double beta) {
    const Index r = std::min<Index>(2 * m, sigma.rows());
    Eigen::SelfAdjointEigenSolver<DenseMatrix> es(sigma - beta * sst);
    return es.eigenvectors().rightCols(r);
}

inline double alpha_l2(const DenseMatrix& sigma, const DenseMatrix& sst, Index k, double guard = 1e5) {
    const Index n = sigma.rows();
    k = std::clamp<Index>(k, 1, n);
    if (binomial(n, k) > guard) throw TooLarge("C(n,k) over guard");
    double best = std::numeric_limits<double>::infinity();
    for_each_subset(n, k, [&](const IndexSet& U) {
        Eigen::LLT<DenseMatrix> llt(submatrix(sigma, U, U));
        DenseMatrix l = llt.matrixL();
        DenseMatrix w = l.triangularView<Eigen::Lower>().solve(submatrix(sst, U, U));
        DenseMatrix h = l.triangularView<Eigen::Lower>().solve(w.transpose());
        Eigen::SelfAdjointEigenSolver<DenseMatrix> es(0.5 * (h + h.transpose()), Eigen::EigenvaluesOnly);
        double top = es.eigenvalues().maxCoeff();
        if (top > 0) best = std::min(best, 1.0 / top);
    });
    return best;
}

struct WeakReResult {
    double alpha = 0.0, beta = 0.0, gamma = 0.0;
};

inline WeakReResult weak_re_gamma(const DenseMatrix& sigma, const SparseMatrix& S, Index m, Index k) {
    DenseMatrix sd = DenseMatrix(S);
    DenseMatrix sst = sd * sd.transpose();
    WeakReResult r;
    r.alpha = alpha_l2(sigma, sst, k);
    r.beta = weak_re_beta(sigma, sst, m);
    r.gamma = r.beta / r.alpha;
    return r;
}

// Best certified β⁽¹⁾ lower bound over the candidate subspaces (defaults when empty).
inline BetaCertificate beta_l1_lower_bound(const DenseMatrix& sigma, const SparseMatrix& S, Index m, Index k,
                                           std::vector<DenseMatrix> candidates = {}) {
    (void)k;
    if (candidates.empty()) {
        candidates.push_back(spaced_coordinate_span(sigma.rows(), m));
        if (sigma.rows() <= 1024) {
            DenseMatrix sd = DenseMatrix(S);
            DenseMatrix sst = sd * sd.transpose();
            double beta = weak_re_beta(sigma, sst, m);
            if (std::isfinite(beta)) candidates.push_back(weak_re_subspace(sigma, sst, m, beta));
        }
    }
    BetaCertificate best;
    best.value = -1.0;
    for (const auto& V : candidates) {
        if (V.cols() < std::min<Index>(2 * m, sigma.rows())) throw std::invalid_argument("candidate dimension < 2m");
        BetaCertificate c = certify_subspace(sigma, S, V);
        if (c.value > best.value) best = c;
    }
    return best;
}

inline CompatReport compat_report(const DenseMatrix& sigma, const SparseMatrix& S, Index m, Index k,
                                  AlphaOptions aopt = {}, std::vector<DenseMatrix> candidates = {}) {
    CompatReport r;
    AlphaResult a;
    try {
        a = alpha_l1(sigma, S, k, AlphaMode::Exact, aopt);
        r.method = "exact-enumeration";
    } catch (const TooLarge&) {
        a = alpha_l1(sigma, S, k, AlphaMode::Multistart, aopt);
        r.method = "multistart";
    }
    r.alpha_l1 = a.value;
    r.alpha_exact = a.exact;
    r.witness_w = a.w;
    BetaCertificate b = beta_l1_lower_bound(sigma, S, m, k, std::move(candidates));
    r.beta_l1_lb = b.value;
    r.beta_method = b.method;
    r.witness_subspace = b.basis;
    r.gamma_lb = r.beta_l1_lb / r.alpha_l1;
    return r;
}

inline nlohmann::json compat_json(const CompatReport& r) {
    nlohmann::json j;
    j["alpha_l1"] = r.alpha_l1;
    j["alpha_exact"] = r.alpha_exact;
    j["beta_l1_lower_bound"] = r.beta_l1_lb;
    j["gamma_lower_bound"] = r.gamma_lb;
    j["gamma_certified"] = r.alpha_exact;
    j["method"] = r.method;
    j["beta_method"] = r.beta_method;
    j["note"] = "beta is a certified lower bound from explicit subspaces; no upper bound on beta is computed";
    if (r.witness_w) {
        nlohmann::json w = nlohmann::json::array();
        for (Index i = 0; i < r.witness_w->size(); ++i)
            if ((*r.witness_w)(i) != 0.0) w.push_back({i, (*r.witness_w)(i)});
        j["witness_w"] = w;
    }
    if (r.witness_subspace) j["witness_subspace_dim"] = r.witness_subspace->cols();
    return j;
}

// Failure witness ------------------------------------------------------------------------------

struct FailureWitness {
    Vector v;
    double penalty_v = 0.0;
    double penalty_star = 0.0;
    double residual = 0.0;   // ‖Xv − Xw*‖ / max(1, ‖Xw*‖)
    bool beats = false;      // ‖Sᵀv‖₁ < ‖Sᵀw*‖₁
};

// v = Vc with c = N⁻¹(XVN⁻¹)†Xw*, Γ = VᵀΣV = NᵀN.
inline FailureWitness failure_witness(const DenseMatrix& X, const DenseMatrix& sigma, const SparseMatrix& S,
                                      const Vector& w_star, const DenseMatrix& V) {
    FailureWitness f;
    const Index n = X.cols();
    f.penalty_star = (S.transpose() * w_star).lpNorm<1>();
    Vector target = X * w_star;
    if (target.norm() == 0.0) {
        f.v = Vector::Zero(n);
        f.penalty_v = 0.0;
        f.beats = f.penalty_v < f.penalty_star;
        return f;
    }
    DenseMatrix gamma = V.transpose() * sigma * V;
    gamma = 0.5 * (gamma + gamma.transpose());
    Eigen::LLT<DenseMatrix> llt(gamma);
    if (llt.info() != Eigen::Success) throw NotPositiveDefinite("V^T Sigma V");
    DenseMatrix N = llt.matrixU();
    // B = X V N⁻¹ (m × 2m); need full row rank.
    DenseMatrix XV = X * V;
    DenseMatrix B = N.transpose().triangularView<Eigen::Lower>().solve(XV.transpose()).transpose();
    Eigen::CompleteOrthogonalDecomposition<DenseMatrix> cod(B);
    if (cod.rank() < B.rows()) throw RankDeficient("X V N^-1 rank " + std::to_string(cod.rank()));
    Vector z = cod.solve(target);
    Vector c = N.triangularView<Eigen::Upper>().solve(z);
    f.v = V * c;
    f.penalty_v = (S.transpose() * f.v).lpNorm<1>();
    f.residual = (X * f.v - target).norm() / std::max(1.0, target.norm());
    f.beats = f.penalty_v < f.penalty_star;
    return f;
}

}  // namespace precondlasso
