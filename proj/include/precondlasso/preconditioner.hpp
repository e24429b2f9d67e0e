#pragma once

#include "precondlasso/ggm.hpp"

namespace precondlasso {

struct Preconditioner {
    SparseMatrix S;                 // original index space
    CentroidTree tree;
    std::vector<Index> perm;        // vertex → preorder position
    std::vector<Index> jittered;    // node ids that received jitter
    SparseMatrix L;                 // S permuted to preorder, lower triangular

    Index n() const { return S.rows(); }

    // Sᵀw
    Vector apply_St(const Vector& w) const { return S.transpose() * w; }
    Vector apply_S(const Vector& u) const { return S * u; }

    // (Sᵀ)⁻¹u
    Vector solve_St(const Vector& u) const {
        Vector y = to_preorder(u);
        L.transpose().triangularView<Eigen::Upper>().solveInPlace(y);
        return from_preorder(y);
    }

    // S⁻¹b
    Vector solve_S(const Vector& b) const {
        Vector y = to_preorder(b);
        L.triangularView<Eigen::Lower>().solveInPlace(y);
        return from_preorder(y);
    }

    // X (Sᵀ)⁻¹, row by row: each row r becomes S⁻¹ r.
    DenseMatrix precondition_design(const DenseMatrix& X) const {
        DenseMatrix yt(n(), X.rows());
        for (Index i = 0; i < n(); ++i) yt.row(perm[i]) = X.col(i).transpose();
        L.triangularView<Eigen::Lower>().solveInPlace(yt);
        DenseMatrix out(X.rows(), n());
        for (Index i = 0; i < n(); ++i) out.col(i) = yt.row(perm[i]).transpose();
        return out;
    }

    Vector to_preorder(const Vector& x) const {
        Vector y(x.size());
        for (Index i = 0; i < x.size(); ++i) y(perm[i]) = x(i);
        return y;
    }
    Vector from_preorder(const Vector& y) const {
        Vector x(y.size());
        for (Index i = 0; i < y.size(); ++i) x(i) = y(perm[i]);
        return x;
    }

    void finalize() {
        std::vector<Triplet> t;
        for (const auto& e : to_triplets(S)) t.emplace_back(perm[e.row()], perm[e.col()], e.value());
        L = sparse_from_triplets(S.rows(), S.cols(), t);
    }
};

enum class CovarianceMode { Known, Empirical };

inline Preconditioner graphical_cholesky(const DenseMatrix& sigma_tilde, const CentroidTree& tree,
                                         CovarianceMode mode = CovarianceMode::Known) {
    const Index n = sigma_tilde.rows();
    if (sigma_tilde.cols() != n || tree.n() != n) throw std::invalid_argument("graphical_cholesky: size mismatch");
    if (!is_symmetric(sigma_tilde, 1e-10)) throw std::invalid_argument("graphical_cholesky: not symmetric");
    Preconditioner pc;
    pc.tree = tree;
    pc.perm = tree.position;
    std::vector<Triplet> trip;
    if (n == 0) {
        pc.S = SparseMatrix(0, 0);
        pc.finalize();
        return pc;
    }

    // Recursion on node with the current (denoised) matrix over the node's subtree vertices,
    // indexed by `verts` in preorder.
    std::function<void(Index, const DenseMatrix&, const IndexSet&)> rec =
        [&](Index node, const DenseMatrix& m, const IndexSet& verts) {
            const auto& nd = tree.nodes[node];
            const Index a = static_cast<Index>(nd.group.size());
            const Index rest = static_cast<Index>(verts.size()) - a;
            DenseMatrix maa = m.topLeftCorner(a, a);
            DenseMatrix la;
            try {
                la = cholesky_spd(maa);
            } catch (const NotPositiveDefinite&) {
                if (mode != CovarianceMode::Empirical) throw BlockNotPD("node " + std::to_string(node));
                maa.diagonal().array() += 1e-10 * maa.trace() / static_cast<double>(a);
                try {
                    la = cholesky_spd(maa);
                } catch (const NotPositiveDefinite&) {
                    throw BlockNotPD("node " + std::to_string(node) + " after jitter");
                }
                pc.jittered.push_back(node);
            }
            for (Index j = 0; j < a; ++j)
                for (Index i = j; i < a; ++i)
                    if (la(i, j) != 0.0) trip.emplace_back(verts[i], verts[j], la(i, j));
            if (rest == 0) return;
            // H = L_A⁻¹ M_{A,rest}; S_{rest,A} = Hᵀ.
            DenseMatrix h = la.triangularView<Eigen::Lower>().solve(m.topRightCorner(a, rest));
            for (Index j = 0; j < a; ++j)
                for (Index i = 0; i < rest; ++i)
                    if (h(j, i) != 0.0) trip.emplace_back(verts[a + i], verts[j], h(j, i));
            const Index np = nd.left >= 0 ? static_cast<Index>(tree.subtree_vertices(nd.left).size()) : 0;
            const Index nq = rest - np;
            if (np > 0) {
                DenseMatrix hp = h.leftCols(np);
                DenseMatrix child = m.block(a, a, np, np);
                child.selfadjointView<Eigen::Lower>().rankUpdate(hp.transpose(), -1.0);
                child = DenseMatrix(child.selfadjointView<Eigen::Lower>());
                rec(nd.left, child, IndexSet(verts.begin() + a, verts.begin() + a + np));
            }
            if (nq > 0) {
                DenseMatrix hq = h.rightCols(nq);
                DenseMatrix child = m.block(a + np, a + np, nq, nq);
                child.selfadjointView<Eigen::Lower>().rankUpdate(hq.transpose(), -1.0);
                child = DenseMatrix(child.selfadjointView<Eigen::Lower>());
                rec(nd.right, child, IndexSet(verts.begin() + a + np, verts.end()));
            }
        };

    const IndexSet& order = tree.order;
    DenseMatrix m(n, n);
    for (Index j = 0; j < n; ++j)
        for (Index i = 0; i < n; ++i) m(i, j) = sigma_tilde(order[i], order[j]);
    rec(0, m, order);
    pc.S = sparse_from_triplets(n, n, trip);
    pc.finalize();
    return pc;
}

inline Preconditioner preconditioner_from_samples(const DenseMatrix& X, const Graph& g) {
    if (X.cols() != g.n()) throw std::invalid_argument("preconditioner_from_samples: size mismatch");
    TreeDecomposition td = min_fill_tree_decomposition(g);
    CentroidTree tree = build_centroid_tree(g, td);
    Index largest = 0;
    for (const auto& nd : tree.nodes) largest = std::max<Index>(largest, nd.group.size());
    if (X.rows() < largest + 1)
        throw BlockNotPD("m = " + std::to_string(X.rows()) + " below group size + 1 = " + std::to_string(largest + 1));
    return graphical_cholesky(empirical_covariance(X), tree, CovarianceMode::Empirical);
}

inline Preconditioner preconditioner_from_sigma(const DenseMatrix& sigma, const Graph& g) {
    TreeDecomposition td = min_fill_tree_decomposition(g);
    return graphical_cholesky(sigma, build_centroid_tree(g, td), CovarianceMode::Known);
}

struct RipRange {
    double min_ratio = std::numeric_limits<double>::infinity();
    double max_ratio = -std::numeric_limits<double>::infinity();
    Index evaluated = 0;
};

// vᵀSSᵀv / vᵀΣ̂v over random k-sparse unit v, Σ̂ = XᵀX/m.
inline RipRange check_sparse_rip(const Preconditioner& p, const DenseMatrix& X, Index k, Index trials,
                                 const RngStream& stream) {
    if (trials < 1) throw std::invalid_argument("check_sparse_rip: trials < 1");
    const Index n = p.n();
    RipRange r;
    for (Index t = 0; t < trials; ++t) {
        RngStream rng = stream.child(static_cast<std::uint64_t>(t));
        IndexSet supp = random_subset(rng, n, std::min(k, n));
        Vector v = Vector::Zero(n);
        for (Index i : supp) v(i) = rng.normal();
        if (v.norm() == 0.0) continue;
        v.normalize();
        double den = (X * v).squaredNorm() / static_cast<double>(X.rows());
        if (den < 1e-12) continue;
        double num = p.apply_St(v).squaredNorm();
        double ratio = num / den;
        r.min_ratio = std::min(r.min_ratio, ratio);
        r.max_ratio = std::max(r.max_ratio, ratio);
        ++r.evaluated;
    }
    return r;
}

// Size of the ancestor closure of the groups touched by supp(w).
inline Index group_tree_sparsity(const CentroidTree& tree, const Vector& w, double zero_tol = 0.0) {
    std::vector<char> mark(tree.size(), 0);
    Index count = 0;
    for (Index i = 0; i < w.size(); ++i) {
        if (std::abs(w(i)) <= zero_tol) continue;
        for (Index x = tree.node_of[i]; x >= 0 && !mark[x]; x = tree.nodes[x].parent) {
            mark[x] = 1;
            ++count;
        }
    }
    return count;
}

inline Index group_tree_sparsity(const Preconditioner& p, const Vector& w, double zero_tol = 0.0) {
    return group_tree_sparsity(p.tree, w, zero_tol);
}

// Row i of S may only reference i's group and its ancestors.
inline bool row_support_ok(const Preconditioner& p) {
    for (const auto& e : to_triplets(p.S))
        if (!p.tree.is_ancestor_or_self(p.tree.node_of[e.col()], p.tree.node_of[e.row()])) return false;
    return true;
}

// Site percolation ----------------------------------------------------------------------

inline constexpr double kPercolationEpsilon0 = 0.3;

struct PercolationRound {
    IndexSet U;
    std::vector<IndexSet> components;
    double p = 0.0;

    Index largest() const {
        Index s = 0;
        for (const auto& c : components) s = std::max<Index>(s, c.size());
        return s;
    }
};

inline PercolationRound percolation_round(const Graph& g, Index d, double epsilon, RngStream& stream) {
    if (!(epsilon > 0.0 && epsilon < kPercolationEpsilon0))
        throw std::invalid_argument("percolation_round: epsilon outside (0, eps0)");
    if (d < std::max<Index>(1, g.max_degree())) throw std::invalid_argument("percolation_round: d below max degree");
    PercolationRound r;
    r.p = std::clamp((1.0 - epsilon) / static_cast<double>(d), std::numeric_limits<double>::min(),
                     std::nextafter(1.0, 0.0));
    std::vector<char> keep(g.n(), 0);
    for (Index v = 0; v < g.n(); ++v)
        if (stream.bernoulli(r.p)) {
            keep[v] = 1;
            r.U.push_back(v);
        }
    r.components = g.components(keep);
    return r;
}

// Whitens each kept component by its covariance Cholesky factor; √Σ_ii elsewhere.
inline SparseMatrix percolation_preconditioner(const DenseMatrix& sigma, const PercolationRound& round) {
    const Index n = sigma.rows();
    std::vector<char> covered(n, 0);
    std::vector<Triplet> t;
    for (const auto& c : round.components) {
        DenseMatrix l = cholesky_spd(submatrix(sigma, c, c));
        for (size_t j = 0; j < c.size(); ++j) {
            covered[c[j]] = 1;
            for (size_t i = j; i < c.size(); ++i)
                if (l(i, j) != 0.0) t.emplace_back(c[i], c[j], l(i, j));
        }
    }
    for (Index i = 0; i < n; ++i)
        if (!covered[i]) t.emplace_back(i, i, std::sqrt(sigma(i, i)));
    return sparse_from_triplets(n, n, t);
}

// Preconditioner IO ------------------------------------------------------------------------

inline nlohmann::json centroid_tree_json(const CentroidTree& t) {
    nlohmann::json nodes = nlohmann::json::array();
    for (Index i = 0; i < t.size(); ++i) {
        const auto& nd = t.nodes[i];
        nodes.push_back({{"id", i}, {"parent", nd.parent}, {"left", nd.left}, {"right", nd.right},
                         {"group", nd.group}});
    }
    return {{"n", t.n()}, {"nodes", nodes}};
}

inline CentroidTree centroid_tree_from_json(const nlohmann::json& j) {
    std::vector<CentroidTree::Node> nodes;
    for (const auto& e : j.at("nodes")) {
        CentroidTree::Node nd;
        nd.parent = e.at("parent").get<Index>();
        nd.left = e.at("left").get<Index>();
        nd.right = e.at("right").get<Index>();
        nd.group = e.at("group").get<IndexSet>();
        nodes.push_back(std::move(nd));
    }
    return CentroidTree::from_nodes(j.at("n").get<Index>(), std::move(nodes));
}

inline void write_preconditioner(const std::filesystem::path& dir, const Preconditioner& p) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream os(dir / "perm.txt");
        for (size_t i = 0; i < p.perm.size(); ++i) os << (i ? " " : "") << p.perm[i];
        os << '\n';
    }
    {
        std::ofstream os(dir / "S.mtx");
        write_matrix(os, p.S);
    }
    std::ofstream os(dir / "tree.json");
    os << centroid_tree_json(p.tree).dump(2) << '\n';
}

inline Preconditioner read_preconditioner(const std::filesystem::path& dir) {
    Preconditioner p;
    {
        std::ifstream is(dir / "S.mtx");
        if (!is) throw MalformedInput("missing S.mtx");
        p.S = read_sparse_matrix(is);
    }
    {
        std::ifstream is(dir / "tree.json");
        if (!is) throw MalformedInput("missing tree.json");
        p.tree = centroid_tree_from_json(nlohmann::json::parse(is));
    }
    {
        std::ifstream is(dir / "perm.txt");
        Index v;
        while (is >> v) p.perm.push_back(v);
    }
    if (static_cast<Index>(p.perm.size()) != p.S.rows()) throw MalformedInput("perm length");
    p.finalize();
    return p;
}

}  // namespace precondlasso
