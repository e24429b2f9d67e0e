#pragma once

#include "precondlasso/preconditioner.hpp"

#include <chrono>

namespace precondlasso {

struct SolverReport {
    Vector w_hat;
    double objective = std::numeric_limits<double>::quiet_NaN();
    Index iterations = 0;
    bool converged = false;
    std::optional<double> l2_error;
    std::optional<double> mahalanobis_error;
    double seconds = 0.0;
    std::optional<double> duality_gap;   // BP only
    std::optional<Vector> dual;          // BP dual point
    double kkt_residual = 0.0;           // Lasso only
};

// ‖ŵ−w*‖₂ and (ŵ−w*)ᵀΣ(ŵ−w*).
inline void attach_errors(SolverReport& r, const Vector& w_star, const DenseMatrix* sigma = nullptr) {
    Vector e = r.w_hat - w_star;
    r.l2_error = e.norm();
    if (sigma) r.mahalanobis_error = e.dot(*sigma * e);
}

inline void attach_errors(SolverReport& r, const Vector& w_star, const SparseMatrix& theta) {
    Vector e = r.w_hat - w_star;
    r.l2_error = e.norm();
    Eigen::SimplicialLLT<SparseMatrix> llt(theta);
    r.mahalanobis_error = e.dot(llt.solve(e));
}

inline bool exact_recovery(double l2_error, const Vector& w_star) {
    return l2_error <= 1e-6 * std::max(1.0, w_star.norm());
}

namespace detail {

class Timer {
public:
    Timer() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

inline double soft_threshold(double x, double t) {
    if (x > t) return x - t;
    if (x < -t) return x + t;
    return 0.0;
}

}  // namespace detail

// Linear programming ------------------------------------------------------------------

// Standard form min cᵀx, Ax = b, x ≥ 0 with a dense constraint matrix.
struct DenseLpOperator {
    const DenseMatrix& A;
    Index rows() const { return A.rows(); }
    Index cols() const { return A.cols(); }
    Vector mul(const Vector& x) const { return A * x; }
    Vector mul_t(const Vector& y) const { return A.transpose() * y; }
    DenseMatrix normal(const Vector& d) const {
        DenseMatrix b = A * d.cwiseSqrt().asDiagonal();
        DenseMatrix m = DenseMatrix::Zero(rows(), rows());
        m.selfadjointView<Eigen::Lower>().rankUpdate(b);
        return m.selfadjointView<Eigen::Lower>();
    }
};

// [A, −A] for the split ℓ1 program.
struct SplitLpOperator {
    const DenseMatrix& A;
    Index rows() const { return A.rows(); }
    Index cols() const { return 2 * A.cols(); }
    Vector mul(const Vector& x) const {
        const Index n = A.cols();
        return A * (x.head(n) - x.tail(n));
    }
    Vector mul_t(const Vector& y) const {
        Vector g = A.transpose() * y;
        Vector out(2 * g.size());
        out << g, -g;
        return out;
    }
    DenseMatrix normal(const Vector& d) const {
        const Index n = A.cols();
        Vector s = (d.head(n) + d.tail(n)).cwiseSqrt();
        DenseMatrix b = A * s.asDiagonal();
        DenseMatrix m = DenseMatrix::Zero(rows(), rows());
        m.selfadjointView<Eigen::Lower>().rankUpdate(b);
        return m.selfadjointView<Eigen::Lower>();
    }
};

struct LpOptions {
    double feas_tol = 1e-9;
    double gap_tol = 1e-10;
    Index max_iter = 200;
};

struct LpResult {
    Vector x, y, z;
    double primal_obj = 0.0, dual_obj = 0.0;
    double primal_residual = 0.0, dual_residual = 0.0;
    Index iterations = 0;
    bool converged = false;
};

// Mehrotra predictor-corrector on the normal equations.
template <class Op>
LpResult lp_interior_point(const Op& op, const Vector& c, const Vector& b, LpOptions opt = {}) {
    const Index N = op.cols();
    LpResult r;
    auto factor = [&](const DenseMatrix& M) {
        double reg = 1e-14 * std::max(1.0, M.diagonal().maxCoeff());
        DenseMatrix Mr = M;
        Mr.diagonal().array() += reg;
        Eigen::LLT<DenseMatrix> llt(Mr);
        if (llt.info() != Eigen::Success) {
            Mr.diagonal().array() += 1e-10 * std::max(1.0, M.diagonal().maxCoeff());
            llt.compute(Mr);
            if (llt.info() != Eigen::Success) throw NumericalFailure("normal equations not factorizable");
        }
        return llt;
    };

    // Starting point.
    Vector ones = Vector::Ones(N);
    auto llt0 = factor(op.normal(ones));
    Vector x = op.mul_t(llt0.solve(b));
    Vector y = llt0.solve(op.mul(c));
    Vector z = c - op.mul_t(y);
    double dx = std::max(-1.5 * x.minCoeff(), 0.0), dz = std::max(-1.5 * z.minCoeff(), 0.0);
    x.array() += dx;
    z.array() += dz;
    double xz = x.dot(z);
    x.array() += 0.5 * xz / std::max(z.sum(), 1e-300);
    z.array() += 0.5 * xz / std::max(x.sum(), 1e-300);
    x = x.cwiseMax(1e-8);
    z = z.cwiseMax(1e-8);

    const double bnorm = 1.0 + b.norm(), cnorm = 1.0 + c.norm();
    double best_merit = std::numeric_limits<double>::infinity();
    Index since_best = 0;
    std::tuple<Vector, Vector, Vector, double, double, double, double> best;
    auto max_step = [](const Vector& v, const Vector& dv) {
        double a = 1.0;
        for (Index i = 0; i < v.size(); ++i)
            if (dv(i) < 0) a = std::min(a, -v(i) / dv(i));
        return a;
    };

    for (Index it = 0; it < opt.max_iter; ++it) {
        Vector rp = b - op.mul(x);
        Vector rd = c - op.mul_t(y) - z;
        double mu = x.dot(z) / static_cast<double>(N);
        r.primal_obj = c.dot(x);
        r.dual_obj = b.dot(y);
        r.primal_residual = rp.norm() / bnorm;
        r.dual_residual = rd.norm() / cnorm;
        double gap = std::abs(r.primal_obj - r.dual_obj) / (1.0 + std::abs(r.primal_obj));
        r.iterations = it;
        double merit = std::max({r.primal_residual / opt.feas_tol, r.dual_residual / opt.feas_tol, gap / opt.gap_tol});
        if (merit < best_merit) {
            best_merit = merit;
            best = std::make_tuple(x, y, z, r.primal_obj, r.dual_obj, r.primal_residual, r.dual_residual);
            since_best = 0;
        } else if (++since_best >= 5) {
            break;
        }
        if (merit <= 1.0) {
            r.converged = true;
            break;
        }
        if (!x.allFinite() || !z.allFinite()) throw NumericalFailure("iterate not finite");

        Vector d = x.cwiseQuotient(z);
        auto llt = factor(op.normal(d));
        auto solve = [&](const Vector& rc) {
            // Δy from M Δy = r_p − A Z⁻¹r_c + A D r_d.
            Vector zinv_rc = rc.cwiseQuotient(z);
            Vector rhs = rp - op.mul(zinv_rc) + op.mul(d.cwiseProduct(rd));
            Vector dy = llt.solve(rhs);
            Vector dzv = rd - op.mul_t(dy);
            Vector dxv = zinv_rc - d.cwiseProduct(dzv);
            return std::make_tuple(dxv, dy, dzv);
        };
        Vector rc_aff = -x.cwiseProduct(z);
        auto [dxa, dya, dza] = solve(rc_aff);
        double ap = max_step(x, dxa), ad = max_step(z, dza);
        double mu_aff = (x + ap * dxa).dot(z + ad * dza) / static_cast<double>(N);
        double sigma = std::pow(std::max(mu_aff, 0.0) / mu, 3.0);
        Vector rc = rc_aff - dxa.cwiseProduct(dza) + Vector::Constant(N, sigma * mu);
        auto [dxc, dyc, dzc] = solve(rc);
        ap = std::min(1.0, 0.995 * max_step(x, dxc));
        ad = std::min(1.0, 0.995 * max_step(z, dzc));
        x += ap * dxc;
        y += ad * dyc;
        z += ad * dzc;
        x = x.cwiseMax(1e-300);
        z = z.cwiseMax(1e-300);
        r.iterations = it + 1;
    }
    std::tie(r.x, r.y, r.z, r.primal_obj, r.dual_obj, r.primal_residual, r.dual_residual) = best;
    return r;
}

// Basis pursuit -------------------------------------------------------------------------

struct BpOptions {
    LpOptions lp;
    bool polish = true;
};

namespace detail {

// min ‖u‖₁ s.t. Au = b. Returns u, dual y with ‖Aᵀy‖_∞ ≤ 1 and the certified gap.
struct L1Result {
    Vector u, y;
    double gap = 0.0;
    Index iterations = 0;
    bool converged = false;
};

inline L1Result l1_min(const DenseMatrix& A, const Vector& b, const BpOptions& opt) {
    const Index n = A.cols();
    L1Result out;
    if (b.norm() == 0.0) {
        out.u = Vector::Zero(n);
        out.y = Vector::Zero(A.rows());
        out.converged = true;
        return out;
    }
    SplitLpOperator op{A};
    LpResult lp = lp_interior_point(op, Vector::Ones(2 * n), b, opt.lp);
    out.iterations = lp.iterations;
    Vector u = lp.x.head(n) - lp.x.tail(n);
    if (lp.primal_residual > 1e-6) throw Infeasible("primal residual " + std::to_string(lp.primal_residual));

    if (opt.polish) {
        double umax = u.cwiseAbs().maxCoeff();
        IndexSet supp;
        for (Index j = 0; j < n; ++j)
            if (std::abs(u(j)) > 1e-7 * umax) supp.push_back(j);
        if (!supp.empty() && static_cast<Index>(supp.size()) <= A.rows()) {
            DenseMatrix as(A.rows(), supp.size());
            for (size_t k = 0; k < supp.size(); ++k) as.col(k) = A.col(supp[k]);
            Eigen::ColPivHouseholderQR<DenseMatrix> qr(as);
            if (qr.rank() == static_cast<Index>(supp.size())) {
                Vector us = qr.solve(b);
                Vector cand = Vector::Zero(n);
                bool signs = true;
                for (size_t k = 0; k < supp.size(); ++k) {
                    cand(supp[k]) = us(k);
                    if (us(k) * u(supp[k]) < 0) signs = false;
                }
                double res = (A * cand - b).norm();
                if (signs && res <= 1e-9 * (1.0 + b.norm()) &&
                    cand.lpNorm<1>() <= u.lpNorm<1>() + 1e-8 * (1.0 + u.lpNorm<1>()))
                    u = cand;
            }
        }
    }
    // Scale the dual into the feasible box so that the gap is a certificate.
    Vector y = lp.y;
    double inf = (A.transpose() * y).cwiseAbs().maxCoeff();
    if (inf > 1.0) y /= inf;
    out.u = u;
    out.y = y;
    double obj = u.lpNorm<1>();
    out.gap = obj - b.dot(y);
    out.converged = lp.converged && out.gap <= 1e-8 * (1.0 + obj);
    return out;
}

}  // namespace detail

// Split ℓ1 program with an invertible preconditioner supplied as solves.
template <class SolveSt>
SolverReport basis_pursuit_u(const DenseMatrix& design, const Vector& Y, SolveSt solve_st, const BpOptions& opt) {
    detail::Timer timer;
    auto l1 = detail::l1_min(design, Y, opt);
    SolverReport r;
    r.w_hat = solve_st(l1.u);
    r.objective = l1.u.lpNorm<1>();
    r.iterations = l1.iterations;
    r.converged = l1.converged;
    r.duality_gap = l1.gap;
    r.dual = l1.y;
    r.seconds = timer.seconds();
    return r;
}

inline SolverReport basis_pursuit(const DenseMatrix& X, const Vector& Y, const Preconditioner& p, BpOptions opt = {}) {
    if (X.cols() != p.n() || X.rows() != Y.size()) throw std::invalid_argument("basis_pursuit: dimension mismatch");
    DenseMatrix design = p.precondition_design(X);
    return basis_pursuit_u(design, Y, [&](const Vector& u) { return p.solve_St(u); }, opt);
}

// General S (n×s). Square invertible S goes through the substitution u = Sᵀw; other
// shapes use the explicit LP  min 1ᵀ(a+b), Xw = Y, Sᵀw = a − b.
inline SolverReport basis_pursuit(const DenseMatrix& X, const Vector& Y, const SparseMatrix& S, BpOptions opt = {}) {
    const Index n = X.cols(), m = X.rows();
    if (S.rows() != n || Y.size() != m) throw std::invalid_argument("basis_pursuit: dimension mismatch");
    if (S.cols() == n) {
        bool diagonal = true;
        for (const auto& e : to_triplets(S))
            if (e.row() != e.col()) diagonal = false;
        if (diagonal) {
            Vector d = S.diagonal();
            if ((d.array() != 0.0).all()) {
                DenseMatrix design = X * d.cwiseInverse().asDiagonal();
                return basis_pursuit_u(design, Y, [&](const Vector& u) { return Vector(u.cwiseQuotient(d)); }, opt);
            }
        } else {
            Eigen::SparseLU<SparseMatrix> lu(S);
            if (lu.info() == Eigen::Success) {
                RngStream probe(0x51, static_cast<std::uint64_t>(n));
                Vector rhs = gaussian_vector(probe, n);
                Vector sol = lu.solve(rhs);
                if (sol.allFinite() && (S * sol - rhs).norm() <= 1e-9 * rhs.norm()) {
                    DenseMatrix xt = X.transpose();
                    DenseMatrix design = DenseMatrix(lu.solve(xt)).transpose();
                    SparseMatrix st = S.transpose();
                    Eigen::SparseLU<SparseMatrix> lut(st);
                    return basis_pursuit_u(design, Y, [&](const Vector& u) { return Vector(lut.solve(u)); }, opt);
                }
            }
        }
    }
    detail::Timer timer;
    const Index s = S.cols();
    DenseMatrix St = DenseMatrix(S.transpose());
    DenseMatrix A = DenseMatrix::Zero(m + s, 2 * n + 2 * s);
    A.block(0, 0, m, n) = X;
    A.block(0, n, m, n) = -X;
    A.block(m, 0, s, n) = St;
    A.block(m, n, s, n) = -St;
    A.block(m, 2 * n, s, s) = -DenseMatrix::Identity(s, s);
    A.block(m, 2 * n + s, s, s) = DenseMatrix::Identity(s, s);
    Vector c = Vector::Zero(2 * n + 2 * s);
    c.tail(2 * s).setOnes();
    Vector b = Vector::Zero(m + s);
    b.head(m) = Y;
    LpResult lp = lp_interior_point(DenseLpOperator{A}, c, b, opt.lp);
    if (lp.primal_residual > 1e-6) throw Infeasible("primal residual " + std::to_string(lp.primal_residual));
    SolverReport r;
    r.w_hat = lp.x.head(n) - lp.x.segment(n, n);
    r.objective = (St * r.w_hat).lpNorm<1>();
    // Dual of min ‖Sᵀw‖₁ s.t. Xw = Y: max Yᵀy with Xᵀy = S g, ‖g‖_∞ ≤ 1.
    Vector y = lp.y.head(m), g = -lp.y.tail(s);
    double inf = g.size() ? g.cwiseAbs().maxCoeff() : 0.0;
    if (inf > 1.0) {
        y /= inf;
        g /= inf;
    }
    double dual_res = (X.transpose() * y - S * g).norm();
    r.duality_gap = r.objective - Y.dot(y);
    r.dual = y;
    r.iterations = lp.iterations;
    r.converged = lp.converged && *r.duality_gap <= 1e-8 * (1.0 + std::abs(r.objective)) &&
                  dual_res <= 1e-6 * (1.0 + X.norm());
    r.seconds = timer.seconds();
    return r;
}

// Lasso ----------------------------------------------------------------------------------

struct LassoOptions {
    double tol = 1e-10;
    Index max_sweeps = 100000;
};

// min ‖Y − Zu‖² + λ‖u‖₁ by cyclic coordinate descent.
struct LassoCd {
    Vector u;
    Index sweeps = 0;
    bool converged = false;
    double kkt = 0.0;
};

inline double lasso_kkt_residual(const DenseMatrix& Z, const Vector& Y, const Vector& u, double lambda) {
    Vector g = 2.0 * Z.transpose() * (Z * u - Y);
    double worst = 0.0;
    for (Index j = 0; j < u.size(); ++j) {
        double v = u(j) != 0.0 ? std::abs(g(j) + lambda * (u(j) > 0 ? 1.0 : -1.0))
                               : std::max(0.0, std::abs(g(j)) - lambda);
        worst = std::max(worst, v);
    }
    return worst;
}

inline LassoCd lasso_coordinate_descent(const DenseMatrix& Z, const Vector& Y, double lambda, LassoOptions opt = {},
                                        Vector u0 = Vector()) {
    const Index n = Z.cols();
    LassoCd out;
    out.u = u0.size() == n ? u0 : Vector::Zero(n);
    Vector col2 = Z.colwise().squaredNorm().transpose();
    Vector r = Y - Z * out.u;
    const double scale = std::max(1.0, Y.squaredNorm());
    std::vector<char> active(n, 1);
    bool full = true;
    for (Index sweep = 0; sweep < opt.max_sweeps; ++sweep) {
        double delta = 0.0;
        for (Index j = 0; j < n; ++j) {
            if ((!full && !active[j]) || col2(j) == 0.0) continue;
            double old = out.u(j);
            double rho = Z.col(j).dot(r) + col2(j) * old;
            double nu = detail::soft_threshold(rho, 0.5 * lambda) / col2(j);
            if (nu != old) {
                r.noalias() -= (nu - old) * Z.col(j);
                out.u(j) = nu;
                delta = std::max(delta, col2(j) * (nu - old) * (nu - old));
            }
        }
        out.sweeps = sweep + 1;
        if (delta <= opt.tol * opt.tol * scale) {
            if (full) {
                out.converged = true;
                break;
            }
            full = true;
        } else if (full) {
            for (Index j = 0; j < n; ++j) active[j] = out.u(j) != 0.0;
            full = false;
        }
    }
    out.kkt = lasso_kkt_residual(Z, Y, out.u, lambda);
    return out;
}

// 2m·A·σ̂·√(log n / m): the normalised rule rescaled to the unnormalised objective.
inline double default_lasso_lambda(double sigma_hat, Index n, Index m, double A = 4.0) {
    return 2.0 * static_cast<double>(m) * A * sigma_hat *
           std::sqrt(std::log(static_cast<double>(std::max<Index>(n, 2))) / static_cast<double>(m));
}

// Residual scale from a ridge pre-fit with penalty m.
inline double ridge_sigma_estimate(const DenseMatrix& Z, const Vector& Y) {
    const Index m = Z.rows();
    Eigen::BDCSVD<DenseMatrix> svd(Z, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& s = svd.singularValues();
    const double rho = static_cast<double>(m);
    Vector uy = svd.matrixU().transpose() * Y;
    Vector fit_coef = uy.array() * s.array().square() / (s.array().square() + rho);
    Vector fitted = svd.matrixU() * fit_coef;
    double df = (s.array().square() / (s.array().square() + rho)).sum();
    double rss = (Y - fitted).squaredNorm();
    return std::sqrt(rss / std::max(1.0, static_cast<double>(m) - df));
}

inline Vector project_group_tree_sparse(const Vector& v, const CentroidTree& tree, Index k);

struct LassoPipelineOptions {
    LassoOptions cd;
    Index project_groups = 0;   // post-Lasso projection budget; 0 disables
};

inline SolverReport lasso_preconditioned(const DenseMatrix& X, const Vector& Y, const Preconditioner& p, double lambda,
                                         LassoPipelineOptions opt = {}) {
    if (lambda < 0) throw std::invalid_argument("lasso: negative lambda");
    detail::Timer timer;
    DenseMatrix Z = p.precondition_design(X);
    SolverReport r;
    Vector u;
    if (lambda == 0.0 && X.rows() >= X.cols()) {
        u = Z.colPivHouseholderQr().solve(Y);
        r.kkt_residual = (2.0 * Z.transpose() * (Z * u - Y)).cwiseAbs().maxCoeff();
        r.converged = r.kkt_residual <= 1e-10 * std::max(1.0, (Z.transpose() * Y).cwiseAbs().maxCoeff());
        r.iterations = 1;
    } else {
        LassoCd cd = lasso_coordinate_descent(Z, Y, lambda, opt.cd);
        if (!cd.converged) throw NoConvergence("sweep cap reached, KKT residual " + std::to_string(cd.kkt));
        u = cd.u;
        r.kkt_residual = cd.kkt;
        r.iterations = cd.sweeps;
        r.converged = true;
    }
    r.objective = (Y - Z * u).squaredNorm() + lambda * u.lpNorm<1>();
    if (opt.project_groups > 0) u = project_group_tree_sparse(u, p.tree, opt.project_groups);
    r.w_hat = p.solve_St(u);
    r.seconds = timer.seconds();
    return r;
}

// Group-tree-sparse projection ----------------------------------------------------------------

// Keeps the rooted subtree of ≤ k groups with the largest retained squared mass.
inline Vector project_group_tree_sparse(const Vector& v, const CentroidTree& tree, Index k) {
    if (k < 0) throw std::invalid_argument("project_group_tree_sparse: k < 0");
    const Index g = tree.size();
    if (g == 0 || k == 0) return Vector::Zero(v.size());
    if (k >= g) return v;
    std::vector<double> mass(g, 0.0);
    for (Index i = 0; i < v.size(); ++i) mass[tree.node_of[i]] += v(i) * v(i);

    // best[x][b]: max mass of a rooted subtree at x with ≤ b groups (b = 0 excludes x).
    std::vector<std::vector<double>> best(g, std::vector<double>(k + 1, 0.0));
    std::vector<std::vector<Index>> split(g, std::vector<Index>(k + 1, 0));
    std::vector<Index> post;
    {
        std::vector<std::pair<Index, bool>> stack{{0, false}};
        while (!stack.empty()) {
            auto [x, done] = stack.back();
            stack.pop_back();
            if (done) {
                post.push_back(x);
                continue;
            }
            stack.push_back({x, true});
            if (tree.nodes[x].right >= 0) stack.push_back({tree.nodes[x].right, false});
            if (tree.nodes[x].left >= 0) stack.push_back({tree.nodes[x].left, false});
        }
    }
    for (Index x : post) {
        Index l = tree.nodes[x].left, r = tree.nodes[x].right;
        for (Index b = 1; b <= k; ++b) {
            double top = -1.0;
            Index arg = 0;
            for (Index bl = 0; bl <= b - 1; ++bl) {
                double val = (l >= 0 ? best[l][bl] : 0.0) + (r >= 0 ? best[r][b - 1 - bl] : 0.0);
                if (val > top) {
                    top = val;
                    arg = bl;
                }
            }
            best[x][b] = mass[x] + top;
            split[x][b] = arg;
        }
    }
    std::vector<char> keep(g, 0);
    std::vector<std::pair<Index, Index>> stack{{0, k}};
    while (!stack.empty()) {
        auto [x, b] = stack.back();
        stack.pop_back();
        if (x < 0 || b <= 0) continue;
        keep[x] = 1;
        Index bl = split[x][b];
        stack.push_back({tree.nodes[x].left, bl});
        stack.push_back({tree.nodes[x].right, b - 1 - bl});
    }
    Vector out = Vector::Zero(v.size());
    for (Index i = 0; i < v.size(); ++i)
        if (keep[tree.node_of[i]]) out(i) = v(i);
    return out;
}

// Model-based IHT -------------------------------------------------------------------------------

struct IhtOptions {
    Index iter_cap = 0;          // 0: derive from the contraction-rate schedule
    double budget_multiplier = 0; // 0: depth of the centroid tree
    double tol = 1e-13;
    double sigma_eff = 0.0;       // noise floor used by the schedule; 0 means unknown
};

inline Index iht_group_budget(const CentroidTree& tree, Index k, double multiplier = 0) {
    double mult = multiplier > 0 ? multiplier : static_cast<double>(tree.depth());
    return std::max<Index>(1, static_cast<Index>(std::ceil(mult * static_cast<double>(k))));
}

inline SolverReport iht_model_based(const DenseMatrix& X, const Vector& Y, const Preconditioner& p, Index k,
                                    IhtOptions opt = {}) {
    detail::Timer timer;
    const Index m = X.rows(), n = X.cols();
    DenseMatrix Z = p.precondition_design(X);
    const Index budget = iht_group_budget(p.tree, k, opt.budget_multiplier);
    Index cap = opt.iter_cap;
    if (cap <= 0) {
        double start = (Z.transpose() * Y).norm() / static_cast<double>(m);
        double floor = opt.sigma_eff > 0 ? opt.sigma_eff : 1e-12 * std::max(1.0, Y.norm() / std::sqrt(double(m)));
        double t = std::log(std::max(2.0, start * static_cast<double>(n) * static_cast<double>(m) / floor));
        cap = std::clamp<Index>(static_cast<Index>(8.0 * std::ceil(t)), 50, 5000);
    }
    SolverReport r;
    Vector u = Vector::Zero(n);
    const double inv_m = 1.0 / static_cast<double>(m);
    const double blowup = 1e8 * (1.0 + Y.norm());
    double rss = Y.squaredNorm();
    for (Index it = 0; it < cap; ++it) {
        Vector grad = Z.transpose() * (Y - Z * u);
        // Step 1/m, halved while the residual would grow.
        double mu = inv_m;
        Vector nu;
        double nrss = 0.0;
        for (int h = 0; h < 40; ++h, mu *= 0.5) {
            nu = project_group_tree_sparse(u + mu * grad, p.tree, budget);
            nrss = (Y - Z * nu).squaredNorm();
            if (nrss <= rss) break;
        }
        if (!nu.allFinite() || nu.norm() > blowup) throw NoConvergence("iterates diverged at " + std::to_string(it));
        rss = std::min(rss, nrss);
        double step = (nu - u).norm();
        u = nu;
        r.iterations = it + 1;
        if (step <= opt.tol * std::max(1.0, u.norm())) {
            r.converged = true;
            break;
        }
    }
    r.objective = (Y - Z * u).squaredNorm();
    r.w_hat = p.solve_St(u);
    r.seconds = timer.seconds();
    return r;
}

// Baselines -------------------------------------------------------------------------------------

inline SolverReport ols(const DenseMatrix& X, const Vector& Y) {
    detail::Timer timer;
    SolverReport r;
    Eigen::CompleteOrthogonalDecomposition<DenseMatrix> cod(X);
    r.w_hat = cod.solve(Y);
    r.objective = (Y - X * r.w_hat).squaredNorm();
    r.iterations = 1;
    r.converged = true;
    r.seconds = timer.seconds();
    return r;
}

inline double binomial(Index n, Index k) {
    if (k < 0 || k > n) return 0.0;
    k = std::min(k, n - k);
    double c = 1.0;
    for (Index i = 1; i <= k; ++i) c = c * static_cast<double>(n - k + i) / static_cast<double>(i);
    return c;
}

// Calls f(subset) for each k-subset of [0, n) in lexicographic order.
template <class F>
void for_each_subset(Index n, Index k, F&& f) {
    if (k > n || k < 0) return;
    IndexSet s(k);
    for (Index i = 0; i < k; ++i) s[i] = i;
    while (true) {
        f(static_cast<const IndexSet&>(s));
        Index i = k - 1;
        while (i >= 0 && s[i] == n - k + i) --i;
        if (i < 0) return;
        ++s[i];
        for (Index j = i + 1; j < k; ++j) s[j] = s[j - 1] + 1;
    }
}

inline SolverReport best_subset(const DenseMatrix& X, const Vector& Y, Index k) {
    detail::Timer timer;
    const Index n = X.cols();
    k = std::clamp<Index>(k, 0, n);
    if (binomial(n, k) > 1e6) throw TooLarge("C(n,k) = " + std::to_string(binomial(n, k)));
    SolverReport r;
    r.w_hat = Vector::Zero(n);
    r.objective = Y.squaredNorm();
    Index visited = 0;
    for_each_subset(n, k, [&](const IndexSet& s) {
        ++visited;
        DenseMatrix xs(X.rows(), s.size());
        for (size_t j = 0; j < s.size(); ++j) xs.col(j) = X.col(s[j]);
        Eigen::CompleteOrthogonalDecomposition<DenseMatrix> cod(xs);
        Vector c = cod.solve(Y);
        double rss = (Y - xs * c).squaredNorm();
        if (rss < r.objective - 1e-12 * (1.0 + r.objective)) {
            r.objective = rss;
            r.w_hat.setZero();
            for (size_t j = 0; j < s.size(); ++j) r.w_hat(s[j]) = c(j);
        }
    });
    r.iterations = visited;
    r.converged = true;
    r.seconds = timer.seconds();
    return r;
}

}  // namespace precondlasso
