#pragma once

#include "precondlasso/compat.hpp"

#include <map>
#include <set>

namespace precondlasso {

struct HardInstance {
    SparseMatrix theta_tilde;   // Θ + εI
    SparseMatrix theta0;        // PSD Θ
    DenseMatrix kernel_basis;
    double eta = 0.0;
    bool eta_exact = false;
    double lambda_min_nz = 0.0;
    double epsilon = 0.0;
    IndexSet V;
    Index tau = 0;
    std::optional<IndexSet> X_set, Y_set;
    Graph support;
    std::string label;
    nlohmann::json certificate;

    Index n() const { return theta0.rows(); }
};

// ‖v‖ after deleting its k largest-magnitude entries.
inline double dist_k(const Vector& v, Index k) {
    if (k <= 0) return v.norm();
    if (k >= v.size()) return 0.0;
    std::vector<double> sq(v.size());
    for (Index i = 0; i < v.size(); ++i) sq[i] = v(i) * v(i);
    std::nth_element(sq.begin(), sq.begin() + (v.size() - k), sq.end());
    double s = 0.0;
    for (Index i = 0; i < v.size() - k; ++i) s += sq[i];
    return std::sqrt(s);
}

inline double dist_k(const Vector& v, Index k, const IndexSet& on) {
    Vector r(static_cast<Index>(on.size()));
    for (std::size_t i = 0; i < on.size(); ++i) r(static_cast<Index>(i)) = v(on[i]);
    return dist_k(r, k);
}

inline double epsilon_for_lower_bound(const SparseMatrix& theta0, double eta, double lambda_min_nz) {
    if (!(eta > 0) || !(lambda_min_nz > 0)) throw std::invalid_argument("epsilon_for_lower_bound: inputs must be positive");
    const double n = static_cast<double>(theta0.rows());
    const double fro = theta0.norm();
    if (!(fro > 0)) throw std::invalid_argument("epsilon_for_lower_bound: zero matrix");
    return 0.5 * eta * eta * std::pow(lambda_min_nz, 3) / (16200.0 * n * n * n * fro * fro);
}

// η = min over unit x in span(K) of dist_{τ,V}(x): exact by enumerating the removed set T.
struct EtaResult {
    double value = 0.0;
    bool exact = false;
};

inline EtaResult robust_density(const DenseMatrix& K, const IndexSet& V, Index tau, double guard = 1e5,
                                std::uint64_t seed = 0xe7a) {
    EtaResult r;
    DenseMatrix G = K.transpose() * K;
    Eigen::LLT<DenseMatrix> llt(G);
    if (llt.info() != Eigen::Success) throw RankDeficient("kernel basis not full rank");
    DenseMatrix Linv = llt.matrixL().solve(DenseMatrix::Identity(G.rows(), G.cols()));
    auto eval = [&](const IndexSet& keep) {
        DenseMatrix KV(static_cast<Index>(keep.size()), K.cols());
        for (std::size_t a = 0; a < keep.size(); ++a) KV.row(static_cast<Index>(a)) = K.row(keep[a]);
        DenseMatrix W = Linv * (KV.transpose() * KV) * Linv.transpose();
        Eigen::SelfAdjointEigenSolver<DenseMatrix> es(0.5 * (W + W.transpose()), Eigen::EigenvaluesOnly);
        return std::sqrt(std::max(0.0, es.eigenvalues()(0)));
    };
    const Index v = static_cast<Index>(V.size());
    double best = std::numeric_limits<double>::infinity();
    auto visit = [&](const IndexSet& T) {
        IndexSet keep;
        std::size_t t = 0;
        for (Index a = 0; a < v; ++a) {
            if (t < T.size() && T[t] == a) {
                ++t;
                continue;
            }
            keep.push_back(V[a]);
        }
        best = std::min(best, eval(keep));
    };
    if (tau <= 0) {
        visit({});
        r.exact = true;
    } else if (binomial(v, tau) <= guard) {
        for_each_subset(v, tau, visit);
        r.exact = true;
    } else {
        RngStream rng(seed, static_cast<std::uint64_t>(v));
        for (int s = 0; s < 2000; ++s) {
            IndexSet T = random_subset(rng, v, tau);
            std::sort(T.begin(), T.end());
            visit(T);
        }
    }
    r.value = best;
    return r;
}

inline DenseMatrix kernel_of_rows(const DenseMatrix& M) {
    Eigen::ColPivHouseholderQR<DenseMatrix> qr(M.transpose());
    qr.setThreshold(1e-10);
    const Index r = qr.rank();
    DenseMatrix Q = qr.householderQ();
    return Q.rightCols(M.cols() - r);
}

inline double max_row_nnz(const SparseMatrix& m) {
    SparseMatrix t = m.transpose();
    Index best = 0;
    for (Index j = 0; j < t.outerSize(); ++j) {
        Index c = 0;
        for (SparseMatrix::InnerIterator it(t, j); it; ++it)
            if (it.value() != 0.0) ++c;
        best = std::max(best, c);
    }
    return static_cast<double>(best);
}

// Expander ---------------------------------------------------------------------------------

struct ExpanderOptions {
    double c_p = 1.5;          // p = c_p·log(n)/m
    double epsilon = 0.1;
    Index retries = 10;
    Index draws = 100;
};

inline HardInstance expander_instance(Index n, RngStream& stream, ExpanderOptions opt = {}) {
    if (n < 256) throw std::invalid_argument("expander_instance: n < 256");
    const Index m = n / 2;
    const double logn = std::log(static_cast<double>(n));
    const double p = opt.c_p * logn / static_cast<double>(m);
    if (!(p < 1.0)) throw std::invalid_argument("expander_instance: p >= 1");
    const double d = p * static_cast<double>(m);
    const double eps_deg = std::max(opt.epsilon, std::sqrt(6.0 * logn / d));
    const double lo = std::max(1.0, (1.0 - eps_deg) * d), hi = (1.0 + eps_deg) * d;

    DenseMatrix M;
    Index attempt = 0, dmin = 0, dmax = 0;
    for (; attempt < opt.retries; ++attempt) {
        RngStream draw = stream.child(static_cast<std::uint64_t>(attempt));
        M = DenseMatrix::Zero(m, n);
        for (Index i = 0; i < m; ++i)
            for (Index j = 0; j < n; ++j)
                if (draw.bernoulli(p)) M(i, j) = 1.0;
        Eigen::VectorXd deg = M.colwise().sum().transpose();
        dmin = static_cast<Index>(deg.minCoeff());
        dmax = static_cast<Index>(deg.maxCoeff());
        if (dmin >= lo && dmax <= hi) break;
    }
    if (attempt == opt.retries) throw GenerationFailed("column degree bound failed after retries");

    HardInstance h;
    h.label = "expander";
    DenseMatrix theta = M.transpose() * M;
    h.theta0 = theta.sparseView();
    h.kernel_basis = kernel_of_rows(M);
    h.support = support_graph(h.theta0);
    const Index kd = h.kernel_basis.cols();

    const Index k = std::max<Index>(1, static_cast<Index>(std::floor(m / (64000.0 * logn))));
    const double bound = 4.0 * opt.epsilon / (1.0 - 5.0 * opt.epsilon);
    RngStream cs = stream.child(hash_string("uncertainty"));
    Index violations = 0;
    double worst = 0.0, eta = std::numeric_limits<double>::infinity();
    for (Index t = 0; t < opt.draws; ++t) {
        Vector x = h.kernel_basis * gaussian_vector(cs, kd);
        IndexSet S = random_subset(cs, n, k);
        double on = 0.0;
        for (Index i : S) on += std::abs(x(i));
        double ratio = on / x.lpNorm<1>();
        worst = std::max(worst, ratio);
        if (ratio > bound) ++violations;
        eta = std::min(eta, dist_k(x, k) / x.norm());
    }
    h.V.resize(n);
    std::iota(h.V.begin(), h.V.end(), Index{0});
    h.tau = k;
    h.eta = eta;
    h.eta_exact = false;
    ExtremeResult ev = eigen_extremes(h.theta0, Extreme::SmallestNonzero);
    h.lambda_min_nz = ev.value;
    h.epsilon = epsilon_for_lower_bound(h.theta0, h.eta, h.lambda_min_nz);
    h.theta_tilde = h.theta0 + h.epsilon * sparse_identity(n);

    h.certificate = {{"n", n},
                     {"m", m},
                     {"p", p},
                     {"kernel_dim", kd},
                     {"attempts", attempt + 1},
                     {"min_column_degree", dmin},
                     {"max_column_degree", dmax},
                     {"max_theta_row_nnz", max_row_nnz(h.theta0)},
                     {"uncertainty_k", k},
                     {"uncertainty_bound", bound},
                     {"uncertainty_violations", violations},
                     {"uncertainty_draws", opt.draws},
                     {"uncertainty_worst", worst}};
    return h;
}

// Gaussian uncertainty matrix ------------------------------------------------------------------

struct UncertaintyOptions {
    bool allow_small = false;   // permit p < 50
    Index draws = 200;
    double slack = 0.1;
    Index retries = 10;
};

struct UncertaintyMatrix {
    DenseMatrix A;
    double min_dist = 0.0;
    double op_norm = 0.0;
    Index attempts = 0;
};

inline UncertaintyMatrix gaussian_uncertainty_matrix(Index p, RngStream& stream, UncertaintyOptions opt = {}) {
    if (p < 1 || (p < 50 && !opt.allow_small)) throw std::invalid_argument("gaussian_uncertainty_matrix: p too small");
    const Index k = p / 50;
    const double target = (1.0 / 33.0) * (1.0 - opt.slack);
    for (Index attempt = 0; attempt < opt.retries; ++attempt) {
        RngStream draw = stream.child(static_cast<std::uint64_t>(attempt));
        UncertaintyMatrix u;
        u.A = gaussian_draw(draw, p, p) / std::sqrt(static_cast<double>(p));
        Eigen::JacobiSVD<DenseMatrix> svd(u.A);
        u.op_norm = svd.singularValues()(0);
        u.attempts = attempt + 1;
        if (u.op_norm > 3.0) continue;
        u.min_dist = std::numeric_limits<double>::infinity();
        for (Index t = 0; t < opt.draws; ++t) {
            Vector x = Vector::Zero(p);
            if (t % 2 == 0) {
                Index s = 1 + draw.integer(std::max<Index>(1, std::min<Index>(p, 2 * k + 1)));
                for (Index i : random_subset(draw, p, std::min(s, p))) x(i) = draw.normal();
            } else {
                x = gaussian_vector(draw, p);
            }
            if (x.norm() == 0.0) x(0) = 1.0;
            x.normalize();
            Vector stacked(2 * p);
            stacked << x, u.A * x;
            u.min_dist = std::min(u.min_dist, dist_k(stacked, k));
        }
        if (u.min_dist >= target) return u;
    }
    throw GenerationFailed("no uncertainty matrix passed verification");
}

// Simplicized grid circuit ---------------------------------------------------------------------

namespace graphs {

// N×N grid plus the diagonal (i,j)–(i−1,j+1) in every cell; vertex (i,j) ↦ i·N + j.
inline Graph simplicized_grid(Index N) {
    Graph g = grid(N, N);
    for (Index i = 1; i < N; ++i)
        for (Index j = 0; j + 1 < N; ++j) g.add_edge(i * N + j, (i - 1) * N + j + 1);
    return g;
}

}  // namespace graphs

enum class GridMode { Faithful, Compact };

struct Cell {
    Index i = 0, j = 0;
    bool operator==(const Cell&) const = default;
};

// v(target) = Σ coeff·v(term); zero equations have no terms.
struct GridEquation {
    Cell target;
    std::vector<std::pair<Cell, double>> terms;
};

enum class GadgetKind { DownRight, DownLeft };

inline std::vector<GridEquation> swap_gadget(GadgetKind kind, Index i, Index j) {
    if (kind == GadgetKind::DownRight)
        return {{{i, j}, {{{i - 1, j}, 1.0}, {{i, j - 1}, 1.0}}},
                {{i + 1, j - 1}, {{{i, j - 1}, 1.0}}},
                {{i + 1, j}, {{{i, j}, 1.0}, {{i + 1, j - 1}, -1.0}}},
                {{i, j + 1}, {{{i, j}, 1.0}, {{i + 1, j}, -1.0}}}};
    return {{{i - 1, j + 1}, {{{i - 1, j}, 1.0}}},
            {{i, j}, {{{i - 1, j + 1}, 1.0}, {{i, j + 1}, 1.0}}},
            {{i + 1, j}, {{{i, j}, 1.0}, {{i, j + 1}, -1.0}}},
            {{i, j - 1}, {{{i, j}, 1.0}, {{i - 1, j}, -1.0}}}};
}

struct GridLayout {
    Index p = 0, N = 0;
    GridMode mode = GridMode::Faithful;
    std::vector<Cell> X, Y;
    Index gadgets_down_right = 0, gadgets_down_left = 0;
    Index rows_needed = 0, cols_needed = 0;
};

struct GridCircuit {
    SparseMatrix M;   // (n − p) × n
    std::vector<GridEquation> equations;   // one per non-input vertex, vertex order
    GridLayout layout;
    DenseMatrix A;

    Index n() const { return layout.N * layout.N; }
    Index id(Cell c) const { return c.i * layout.N + c.j; }
    IndexSet X_ids() const {
        IndexSet out;
        for (const Cell& c : layout.X) out.push_back(id(c));
        return out;
    }
    IndexSet Y_ids() const {
        IndexSet out;
        for (const Cell& c : layout.Y) out.push_back(id(c));
        return out;
    }
};

inline GridLayout grid_layout(Index p, GridMode mode, Index N_override = 0) {
    GridLayout L;
    L.p = p;
    L.mode = mode;
    L.rows_needed = 2 + 6 * p * p + 6 * p;
    L.cols_needed = 6 * p * p - 1;
    if (N_override > 0)
        L.N = N_override;
    else
        L.N = mode == GridMode::Faithful ? 100 * p * p : std::max(L.rows_needed, L.cols_needed);
    if (L.N < L.rows_needed || L.N < L.cols_needed)
        throw LayoutOverflow("side " + std::to_string(L.N) + " below required " +
                             std::to_string(std::max(L.rows_needed, L.cols_needed)));
    for (Index j = 0; j < p; ++j) L.X.push_back({0, 6 * p * j});
    for (Index j = 0; j < p; ++j) L.Y.push_back({1 + 6 * p * p + 6 * p, 6 * p * j + 3});
    return L;
}

inline GridCircuit grid_constraint_matrix(Index p, const DenseMatrix& A, GridMode mode = GridMode::Faithful,
                                          Index N_override = 0) {
    if (p < 1 || A.rows() != p || A.cols() != p) throw std::invalid_argument("grid_constraint_matrix: A must be p×p");
    GridCircuit c;
    c.A = A;
    c.layout = grid_layout(p, mode, N_override);
    const Index N = c.layout.N;
    const Index R0 = 1 + 6 * p * p;
    std::vector<std::optional<GridEquation>> eq(N * N);
    auto at = [&](Index i, Index j) -> std::optional<GridEquation>& {
        if (i < 0 || j < 0 || i >= N || j >= N) throw LayoutOverflow("cell outside grid");
        return eq[i * N + j];
    };
    auto set = [&](GridEquation e) { at(e.target.i, e.target.j) = std::move(e); };

    // Copy chain on row 1.
    for (Index k = 0; k < N; ++k) {
        if (k % (6 * p) == 0)
            set({{1, k}, {{{0, k}, 1.0}}});
        else
            set({{1, k}, {{{1, k - 1}, 1.0}}});
    }

    // Paths; owner[v] = (path, direction) with direction 0 down, 1 right, 2 left.
    struct Mark {
        Index path = -1;
        int dir = -1;
    };
    std::vector<std::vector<Mark>> marks(N * N);
    std::vector<std::vector<std::pair<Cell, Cell>>> paths;   // (cell, predecessor)
    for (Index j = 0; j < p; ++j)
        for (Index k = 0; k < p; ++k) {
            const Index c1 = 6 * p * j + 6 * k, c2 = 6 * p * k + 6 * j + 3, r = 2 + 6 * p * j + 6 * k;
            std::vector<std::pair<Cell, Cell>> path;
            Index id = static_cast<Index>(paths.size());
            for (Index i = 2; i <= r; ++i) {
                path.push_back({{i, c1}, {i - 1, c1}});
                marks[i * N + c1].push_back({id, 0});
            }
            const int step = c2 > c1 ? 1 : -1;
            for (Index col = c1 + step; col != c2 + step; col += step) {
                path.push_back({{r, col}, {r, col - step}});
                marks[r * N + col].push_back({id, step > 0 ? 1 : 2});
            }
            for (Index i = r + 1; i <= R0; ++i) {
                path.push_back({{i, c2}, {i - 1, c2}});
                marks[i * N + c2].push_back({id, 0});
            }
            paths.push_back(std::move(path));
        }
    for (const auto& path : paths)
        for (const auto& [cell, prev] : path) set({cell, {{prev, 1.0}}});

    // Crossings: a down mark and a horizontal mark on the same cell.
    for (Index v = 0; v < N * N; ++v) {
        if (marks[v].size() < 2) continue;
        if (marks[v].size() > 2) throw LayoutOverflow("three paths meet at a cell");
        const Mark& a = marks[v][0];
        const Mark& b = marks[v][1];
        const Mark& horiz = a.dir == 0 ? b : a;
        if ((a.dir == 0) == (b.dir == 0)) throw LayoutOverflow("parallel paths overlap");
        const Index i = v / N, j = v % N;
        for (Index di = -1; di <= 1; ++di)
            for (Index dj = -1; dj <= 1; ++dj) {
                if (di == 0 || dj == 0) continue;
                Index w = (i + di) * N + (j + dj);
                if (i + di < 0 || j + dj < 0 || i + di >= N || j + dj >= N || !marks[w].empty() || i + di <= 1)
                    throw LayoutOverflow("gadget neighborhood not free");
            }
        GadgetKind kind = horiz.dir == 1 ? GadgetKind::DownRight : GadgetKind::DownLeft;
        for (auto& e : swap_gadget(kind, i, j)) set(std::move(e));
        (kind == GadgetKind::DownRight ? c.layout.gadgets_down_right : c.layout.gadgets_down_left)++;
    }

    // Output rows: weighted accumulation on R0+1, leftward routing on R0+2, then down to 𝒴.
    for (Index k = 0; k < p; ++k) {
        const Index first = 6 * p * k + 3, last = 6 * p * k + 6 * (p - 1) + 3;
        for (Index col = first; col <= last; ++col) {
            GridEquation e{{R0 + 1, col}, {}};
            if ((col - first) % 6 == 0) e.terms.push_back({{R0, col}, A(k, (col - first) / 6)});
            if (col > first) e.terms.push_back({{R0 + 1, col - 1}, 1.0});
            set(std::move(e));
        }
        set({{R0 + 2, last}, {{{R0 + 1, last}, 1.0}}});
        for (Index col = last - 1; col >= first; --col) set({{R0 + 2, col}, {{{R0 + 2, col + 1}, 1.0}}});
        for (Index i = R0 + 3; i <= R0 + 6 * p; ++i) set({{i, first}, {{{i - 1, first}, 1.0}}});
    }

    std::vector<char> is_input(N * N, 0);
    for (const Cell& x : c.layout.X) is_input[x.i * N + x.j] = 1;
    std::vector<Triplet> t;
    Index row = 0;
    for (Index v = 0; v < N * N; ++v) {
        if (is_input[v]) continue;
        GridEquation e = eq[v] ? *eq[v] : GridEquation{{v / N, v % N}, {}};
        t.emplace_back(row, v, 1.0);
        for (const auto& [cell, coeff] : e.terms) t.emplace_back(row, cell.i * N + cell.j, -coeff);
        c.equations.push_back(std::move(e));
        ++row;
    }
    c.M = sparse_from_triplets(N * N - p, N * N, t);
    return c;
}

// Every equation's cells must form a clique of the simplicized grid.
inline std::string check_triangle_support(const GridCircuit& c) {
    const Index N = c.layout.N;
    auto adjacent = [&](Cell a, Cell b) {
        Index di = b.i - a.i, dj = b.j - a.j;
        if (std::abs(di) + std::abs(dj) == 1) return true;
        return (di == -1 && dj == 1) || (di == 1 && dj == -1);
    };
    for (const auto& e : c.equations) {
        std::vector<Cell> cells{e.target};
        for (const auto& term : e.terms) cells.push_back(term.first);
        for (const Cell& x : cells)
            if (x.i < 0 || x.j < 0 || x.i >= N || x.j >= N) return "cell out of range";
        for (std::size_t a = 0; a < cells.size(); ++a)
            for (std::size_t b = a + 1; b < cells.size(); ++b)
                if (!adjacent(cells[a], cells[b]))
                    return "equation at (" + std::to_string(e.target.i) + "," + std::to_string(e.target.j) +
                           ") is not a simplicized-grid clique";
    }
    return {};
}

// Solves the circuit forward from input values on 𝒳.
inline Vector propagate_circuit(const GridCircuit& c, const Vector& x_in) {
    const Index N = c.layout.N, n = N * N;
    std::vector<const GridEquation*> def(n, nullptr);
    for (const auto& e : c.equations) def[e.target.i * N + e.target.j] = &e;
    Vector v = Vector::Zero(n);
    std::vector<char> state(n, 0);   // 0 new, 1 on stack, 2 done
    for (std::size_t a = 0; a < c.layout.X.size(); ++a) {
        Index id = c.layout.X[a].i * N + c.layout.X[a].j;
        v(id) = x_in(static_cast<Index>(a));
        state[id] = 2;
    }
    for (Index s = 0; s < n; ++s) {
        if (state[s] == 2) continue;
        std::vector<std::pair<Index, std::size_t>> stack{{s, 0}};
        state[s] = 1;
        while (!stack.empty()) {
            auto& [u, next] = stack.back();
            const GridEquation* e = def[u];
            if (e && next < e->terms.size()) {
                Index w = e->terms[next].first.i * N + e->terms[next].first.j;
                ++next;
                if (state[w] == 1) throw LayoutOverflow("circuit has a cycle");
                if (state[w] == 0) {
                    state[w] = 1;
                    stack.push_back({w, 0});
                }
                continue;
            }
            double val = 0.0;
            if (e)
                for (const auto& [cell, coeff] : e->terms) val += coeff * v(cell.i * N + cell.j);
            v(u) = val;
            state[u] = 2;
            stack.pop_back();
        }
    }
    return v;
}

inline DenseMatrix grid_kernel_basis(const GridCircuit& c) {
    const Index p = c.layout.p;
    DenseMatrix K(c.n(), p);
    for (Index a = 0; a < p; ++a) K.col(a) = propagate_circuit(c, Vector::Unit(p, a));
    return K;
}

struct GridOptions {
    GridMode mode = GridMode::Faithful;
    Index N_override = 0;
};

inline HardInstance grid_instance(Index p, RngStream& stream, GridOptions opt = {}) {
    UncertaintyOptions uo;
    uo.allow_small = true;
    RngStream as = stream.child(hash_string("A"));
    UncertaintyMatrix um = gaussian_uncertainty_matrix(p, as, uo);
    GridCircuit c = grid_constraint_matrix(p, um.A, opt.mode, opt.N_override);
    std::string tri = check_triangle_support(c);
    if (!tri.empty()) throw LayoutOverflow(tri);

    HardInstance h;
    h.label = "grid-p" + std::to_string(p) + (opt.mode == GridMode::Compact ? "-compact" : "-faithful");
    const Index n = c.n();
    h.theta0 = SparseMatrix(c.M.transpose() * c.M);
    h.theta0.prune(0.0);
    h.kernel_basis = grid_kernel_basis(c);
    h.support = graphs::simplicized_grid(c.layout.N);
    h.X_set = c.X_ids();
    h.Y_set = c.Y_ids();
    h.V = *h.X_set;
    h.V.insert(h.V.end(), h.Y_set->begin(), h.Y_set->end());
    std::sort(h.V.begin(), h.V.end());
    h.tau = static_cast<Index>(h.V.size()) / 100;
    EtaResult eta = robust_density(h.kernel_basis, h.V, h.tau);
    h.eta = eta.value;
    h.eta_exact = eta.exact && p <= 8;
    ExtremeResult small = eigen_extremes(h.theta0, Extreme::SmallestNonzero);
    ExtremeResult large = eigen_extremes(h.theta0, Extreme::Largest);
    h.lambda_min_nz = small.value;
    h.epsilon = epsilon_for_lower_bound(h.theta0, h.eta, h.lambda_min_nz);
    h.theta_tilde = h.theta0 + h.epsilon * sparse_identity(n);

    double kernel_residual = (h.theta0 * h.kernel_basis).norm() / h.kernel_basis.norm();
    double circuit_error = 0.0;
    for (Index a = 0; a < h.kernel_basis.cols(); ++a) {
        Vector x(p), y(p);
        for (Index j = 0; j < p; ++j) {
            x(j) = h.kernel_basis((*h.X_set)[j], a);
            y(j) = h.kernel_basis((*h.Y_set)[j], a);
        }
        circuit_error = std::max(circuit_error, (y - um.A * x).norm());
    }
    nlohmann::json sets = {{"X", *h.X_set}, {"Y", *h.Y_set}};
    h.certificate = {{"n", n},
                     {"p", p},
                     {"N", c.layout.N},
                     {"mode", opt.mode == GridMode::Compact ? "compact" : "faithful"},
                     {"kernel_dim", small.count},
                     {"kernel_residual", kernel_residual},
                     {"circuit_error", circuit_error},
                     {"eta", h.eta},
                     {"eta_exact", h.eta_exact},
                     {"tau", h.tau},
                     {"lambda", h.lambda_min_nz},
                     {"lambda_max", large.value},
                     {"epsilon", h.epsilon},
                     {"frobenius", h.theta0.norm()},
                     {"kappa", (large.value + h.epsilon) / h.epsilon},
                     {"pd_certificate", "theta0 = M^T M is a Gram matrix and epsilon > 0"},
                     {"gadgets_down_right", c.layout.gadgets_down_right},
                     {"gadgets_down_left", c.layout.gadgets_down_left},
                     {"A_op_norm", um.op_norm},
                     {"A_min_dist", um.min_dist},
                     {"sets", sets}};
    return h;
}

// Minor models and unminoring ------------------------------------------------------------------

struct MinorModel {
    Graph host;
    Graph pattern;
    std::vector<IndexSet> branch_sets;
    std::map<Edge, Edge> edge_map;   // pattern edge (a<b) ↦ host edge (x∈Z_a, y∈Z_b)
};

inline std::string check_minor_model(const MinorModel& m) {
    const Index h = m.pattern.n();
    if (static_cast<Index>(m.branch_sets.size()) != h) return "branch set count mismatch";
    std::vector<Index> owner(m.host.n(), -1);
    for (Index a = 0; a < h; ++a) {
        const IndexSet& Z = m.branch_sets[a];
        if (Z.empty()) return "empty branch set " + std::to_string(a);
        std::vector<char> keep(m.host.n(), 0);
        for (Index v : Z) {
            if (v < 0 || v >= m.host.n()) return "branch vertex out of range";
            if (owner[v] >= 0) return "branch sets overlap at " + std::to_string(v);
            owner[v] = a;
            keep[v] = 1;
        }
        if (m.host.components(keep).size() != 1) return "branch set " + std::to_string(a) + " not connected";
    }
    for (auto [a, b] : m.pattern.edges()) {
        auto it = m.edge_map.find({a, b});
        if (it == m.edge_map.end()) return "pattern edge unmapped";
        auto [x, y] = it->second;
        if (x < 0 || y < 0 || x >= m.host.n() || y >= m.host.n()) return "mapped edge out of range";
        if (!m.host.has_edge(x, y)) return "mapped pair is not a host edge";
        if (!((owner[x] == a && owner[y] == b) || (owner[x] == b && owner[y] == a)))
            return "mapped edge does not join the right branch sets";
    }
    return {};
}

// Fills unmapped pattern edges with the lexicographically smallest host edge between the sets.
inline void complete_edge_map(MinorModel& m) {
    std::vector<Index> owner(m.host.n(), -1);
    for (Index a = 0; a < static_cast<Index>(m.branch_sets.size()); ++a)
        for (Index v : m.branch_sets[a]) owner[v] = a;
    for (auto [a, b] : m.pattern.edges()) {
        if (m.edge_map.count({a, b})) continue;
        for (auto [x, y] : m.host.edges()) {
            if ((owner[x] == a && owner[y] == b) || (owner[x] == b && owner[y] == a)) {
                m.edge_map[{a, b}] = {x, y};
                break;
            }
        }
    }
}

// Random minor of a connected host: h seeds grown by random frontier steps, each quotient edge kept
// with probability keep_edge. Vertices left unclaimed after `growth_steps` stay unassigned.
inline MinorModel random_minor_model(const Graph& host, Index h, RngStream& rng, Index growth_steps = -1,
                                     double keep_edge = 0.7) {
    const Index n = host.n();
    if (h < 1 || h > n) throw std::invalid_argument("random_minor_model: need 1 <= h <= n");
    if (growth_steps < 0) growth_steps = n;
    MinorModel m;
    m.host = host;
    std::vector<Index> owner(n, -1);
    m.branch_sets.resize(h);
    IndexSet seeds = random_subset(rng, n, h);
    rng.shuffle(seeds.begin(), seeds.end());
    for (Index a = 0; a < h; ++a) {
        owner[seeds[a]] = a;
        m.branch_sets[a].push_back(seeds[a]);
    }
    for (Index step = 0; step < growth_steps; ++step) {
        std::vector<Edge> frontier;
        for (Index v = 0; v < n; ++v)
            if (owner[v] >= 0)
                for (Index u : host.neighbors(v))
                    if (owner[u] < 0) frontier.push_back({v, u});
        if (frontier.empty()) break;
        auto [v, u] = frontier[rng.integer(static_cast<Index>(frontier.size()))];
        if (owner[u] >= 0) continue;
        owner[u] = owner[v];
        m.branch_sets[owner[v]].push_back(u);
    }
    for (auto& Z : m.branch_sets) std::sort(Z.begin(), Z.end());
    m.pattern = Graph(h);
    std::set<Edge> quotient;
    for (auto [x, y] : host.edges())
        if (owner[x] >= 0 && owner[y] >= 0 && owner[x] != owner[y])
            quotient.insert({std::min(owner[x], owner[y]), std::max(owner[x], owner[y])});
    for (auto [a, b] : quotient)
        if (rng.bernoulli(keep_edge)) m.pattern.add_edge(a, b);
    complete_edge_map(m);
    return m;
}

// φ(i,j) in 1-based coordinates, mapped to 0-based ids of the 2N×2N grid.
inline MinorModel simplicized_grid_minor_model(Index N) {
    if (N < 1) throw std::invalid_argument("simplicized_grid_minor_model: N < 1");
    MinorModel m;
    const Index W = 2 * N;
    m.host = graphs::grid(W, W);
    m.pattern = graphs::simplicized_grid(N);
    auto host = [&](Index r, Index c) { return (r - 1) * W + (c - 1); };
    auto pat = [&](Index i, Index j) { return (i - 1) * N + (j - 1); };
    m.branch_sets.resize(N * N);
    for (Index i = 1; i <= N; ++i)
        for (Index j = 1; j <= N; ++j) {
            IndexSet Z{host(2 * i - 1, 2 * j), host(2 * i, 2 * j - 1), host(2 * i, 2 * j)};
            if (j < N) Z.push_back(host(2 * i - 1, 2 * j + 1));
            std::sort(Z.begin(), Z.end());
            m.branch_sets[pat(i, j)] = Z;
        }
    auto put = [&](Index a, Index b, Index x, Index y) {
        if (a > b) {
            std::swap(a, b);
            std::swap(x, y);
        }
        m.edge_map[{a, b}] = {x, y};
    };
    for (Index i = 1; i <= N; ++i)
        for (Index j = 1; j <= N; ++j) {
            if (i > 1) put(pat(i, j), pat(i - 1, j), host(2 * i - 1, 2 * j), host(2 * i - 2, 2 * j));
            if (i > 1 && j < N)
                put(pat(i, j), pat(i - 1, j + 1), host(2 * i - 1, 2 * j + 1), host(2 * i - 2, 2 * j + 1));
            if (j < N) put(pat(i, j), pat(i, j + 1), host(2 * i - 1, 2 * j + 1), host(2 * i - 1, 2 * j + 2));
        }
    return m;
}

struct UnminorOptions {
    double t0 = 0.0;        // 0: 2ε⁻¹·n·‖Γ‖_F
    double growth = 4.0;
    double target_fraction = 0.5;   // accept once the Schur error ≤ fraction·ε‖Γ‖_F
};

struct UnminorResult {
    SparseMatrix theta;
    IndexSet X;   // representative of pattern vertex a at X[a]
    IndexSet Y;
    std::vector<IndexSet> sets;   // branch sets after absorbing unassigned host vertices
    double t = 0.0;
    double t_worst_case = 0.0;
    double schur_error = 0.0;     // ‖Θ/Θ_YY − Γ‖_F
};

inline DenseMatrix schur_onto(const SparseMatrix& theta, const IndexSet& X, const IndexSet& Y) {
    DenseMatrix T(theta);
    DenseMatrix TXX = submatrix(T, X, X);
    if (Y.empty()) return TXX;
    DenseMatrix TYY = submatrix(T, Y, Y), TYX = submatrix(T, Y, X);
    Eigen::LLT<DenseMatrix> llt(TYY);
    if (llt.info() != Eigen::Success) throw SingularBlock("Theta_YY not PD");
    return TXX - TYX.transpose() * llt.solve(TYX);
}

inline UnminorResult unminor(const SparseMatrix& gamma, const MinorModel& model, double epsilon,
                             UnminorOptions opt = {}) {
    if (std::string err = check_minor_model(model); !err.empty()) throw InvalidMinorModel(err);
    const Index h = model.pattern.n(), n = model.host.n();
    if (gamma.rows() != h || gamma.cols() != h) throw InvalidMinorModel("Gamma size does not match pattern");
    if (!(epsilon > 0)) throw std::invalid_argument("unminor: epsilon must be positive");
    for (const Triplet& e : to_triplets(gamma))
        if (e.row() != e.col() && e.value() != 0.0 && !model.pattern.has_edge(e.row(), e.col()))
            throw InvalidMinorModel("Gamma not supported on pattern");

    UnminorResult res;
    res.sets = model.branch_sets;
    std::vector<Index> owner(n, -1);
    for (Index a = 0; a < h; ++a)
        for (Index v : res.sets[a]) owner[v] = a;
    for (Index a = 0; a < h; ++a) res.X.push_back(*std::min_element(res.sets[a].begin(), res.sets[a].end()));
    {
        // Absorb unassigned host vertices by multi-source BFS.
        std::vector<Index> queue;
        for (Index v = 0; v < n; ++v)
            if (owner[v] >= 0) queue.push_back(v);
        for (std::size_t q = 0; q < queue.size(); ++q)
            for (Index w : model.host.neighbors(queue[q]))
                if (owner[w] < 0) {
                    owner[w] = owner[queue[q]];
                    res.sets[owner[w]].push_back(w);
                    queue.push_back(w);
                }
        for (auto& Z : res.sets) std::sort(Z.begin(), Z.end());
    }
    std::vector<char> is_rep(n, 0);
    for (Index x : res.X) is_rep[x] = 1;
    for (Index v = 0; v < n; ++v)
        if (!is_rep[v]) res.Y.push_back(v);

    const double gf = gamma.norm();
    const double nn = static_cast<double>(n);
    res.t_worst_case = 2.0 / epsilon * std::pow(nn, 6) * gf;
    double t = opt.t0 > 0 ? opt.t0 : 2.0 / epsilon * nn * std::max(gf, 1e-300);
    t = std::min(t, res.t_worst_case);

    DenseMatrix G(gamma);
    auto build = [&](double tt) {
        std::vector<Triplet> tr;
        for (auto [u, v] : model.host.edges()) {
            if (owner[u] < 0 || owner[u] != owner[v]) continue;
            tr.emplace_back(u, v, -tt);
            tr.emplace_back(v, u, -tt);
            tr.emplace_back(u, u, tt);
            tr.emplace_back(v, v, tt);
        }
        for (Index v = 0; v < n; ++v)
            if (owner[v] < 0) tr.emplace_back(v, v, tt);   // isolated from every branch set
        for (const auto& [ab, xy] : model.edge_map) {
            double g = G(ab.first, ab.second);
            if (g == 0.0) continue;
            tr.emplace_back(xy.first, xy.second, g);
            tr.emplace_back(xy.second, xy.first, g);
        }
        SparseMatrix theta = sparse_from_triplets(n, n, tr);
        // δ so that the Schur complement diagonal is Γ_aa.
        DenseMatrix T(theta);
        DenseMatrix corr = DenseMatrix::Zero(h, h);
        if (!res.Y.empty()) {
            DenseMatrix TYY = submatrix(T, res.Y, res.Y), TYX = submatrix(T, res.Y, res.X);
            Eigen::LLT<DenseMatrix> llt(TYY);
            if (llt.info() != Eigen::Success) return std::optional<SparseMatrix>{};
            corr = TYX.transpose() * llt.solve(TYX);
        }
        std::vector<Triplet> fix;
        for (Index a = 0; a < h; ++a) {
            double delta = G(a, a) + corr(a, a) - T(res.X[a], res.X[a]);
            fix.emplace_back(res.X[a], res.X[a], delta);
        }
        SparseMatrix d = sparse_from_triplets(n, n, fix);
        return std::optional<SparseMatrix>{theta + d};
    };

    const double target = opt.target_fraction * epsilon * gf;
    std::optional<UnminorResult> best;
    for (;;) {
        std::optional<SparseMatrix> theta = build(t);
        if (theta) {
            DenseMatrix A = schur_onto(*theta, res.X, res.Y);
            double err = (A - G).norm();
            if (!best || err < best->schur_error) {
                best = res;
                best->theta = *theta;
                best->t = t;
                best->schur_error = err;
            }
            if (err <= target) break;
        }
        if (t >= res.t_worst_case) break;
        t = std::min(t * opt.growth, res.t_worst_case);
    }
    if (!best) throw SingularBlock("Theta_YY never became PD");
    return *best;
}

// d_TV bound 1.5·‖Σ₁^{-1/2}Σ₂Σ₁^{-1/2} − I‖_F, capped at 1.
inline double tv_proximity_report(const DenseMatrix& sigma1, const DenseMatrix& sigma2) {
    Eigen::LLT<DenseMatrix> l1(sigma1);
    if (l1.info() != Eigen::Success) throw NotPositiveDefinite("Sigma1");
    Eigen::LLT<DenseMatrix> l2(sigma2);
    if (l2.info() != Eigen::Success) throw NotPositiveDefinite("Sigma2");
    DenseMatrix w = l1.matrixL().solve(sigma2);
    w = l1.matrixL().solve(w.transpose()).transpose();
    double dev = (w - DenseMatrix::Identity(w.rows(), w.cols())).norm();
    return std::min(1.0, 1.5 * dev);
}

// Instance IO -------------------------------------------------------------------------------------

inline void write_instance(const std::filesystem::path& dir, const HardInstance& h) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream os(dir / "theta.mtx");
        write_matrix(os, h.theta_tilde);
    }
    {
        std::ofstream os(dir / "theta0.mtx");
        write_matrix(os, h.theta0);
    }
    {
        std::ofstream os(dir / "kernel.txt");
        write_matrix(os, h.kernel_basis);
    }
    {
        std::ofstream os(dir / "support.graph");
        write_graph(os, h.support);
    }
    nlohmann::json j = h.certificate;
    j["label"] = h.label;
    j["n"] = h.n();
    j["kernel_dim"] = j.value("kernel_dim", h.kernel_basis.cols());
    j["eta"] = h.eta;
    j["eta_exact"] = h.eta_exact;
    j["lambda"] = h.lambda_min_nz;
    j["epsilon"] = h.epsilon;
    j["tau"] = h.tau;
    j["frobenius"] = h.theta0.norm();
    j["V"] = h.V;
    if (h.X_set) j["sets"]["X"] = *h.X_set;
    if (h.Y_set) j["sets"]["Y"] = *h.Y_set;
    std::ofstream os(dir / "certificate.json");
    os << j.dump(2) << '\n';
}

inline HardInstance read_instance(const std::filesystem::path& dir) {
    std::ifstream js(dir / "certificate.json");
    if (!js) throw MalformedInput("missing certificate.json in " + dir.string());
    HardInstance h;
    h.certificate = nlohmann::json::parse(js);
    const auto& j = h.certificate;
    auto read_sparse = [&](const char* name) {
        std::ifstream is(dir / name);
        if (!is) throw MalformedInput(std::string("missing ") + name);
        return read_sparse_matrix(is);
    };
    h.theta_tilde = read_sparse("theta.mtx");
    h.theta0 = read_sparse("theta0.mtx");
    {
        std::ifstream is(dir / "kernel.txt");
        if (!is) throw MalformedInput("missing kernel.txt");
        h.kernel_basis = read_dense_matrix(is);
    }
    {
        std::ifstream is(dir / "support.graph");
        h.support = is ? read_graph(is) : support_graph(h.theta0);
    }
    h.label = j.value("label", "");
    h.eta = j.at("eta").get<double>();
    h.eta_exact = j.value("eta_exact", false);
    h.lambda_min_nz = j.at("lambda").get<double>();
    h.epsilon = j.at("epsilon").get<double>();
    h.tau = j.value("tau", Index{0});
    h.V = j.value("V", IndexSet{});
    if (j.contains("sets")) {
        if (j["sets"].contains("X")) h.X_set = j["sets"]["X"].get<IndexSet>();
        if (j["sets"].contains("Y")) h.Y_set = j["sets"]["Y"].get<IndexSet>();
    }
    if (h.theta0.rows() != j.at("n").get<Index>()) throw MalformedInput("instance n mismatch");
    return h;
}

}  // namespace precondlasso
