#pragma once

#include "precondlasso/numerics.hpp"

#include <functional>
#include <map>
#include <numeric>
#include <queue>
#include <set>
#include <utility>

namespace precondlasso {

using Edge = std::pair<Index, Index>;

class Graph {
public:
    Graph() = default;
    explicit Graph(Index n) : adj_(n) {}

    Index n() const { return static_cast<Index>(adj_.size()); }

    void add_edge(Index u, Index v) {
        if (u == v) throw std::invalid_argument("Graph: self-loop");
        if (u < 0 || v < 0 || u >= n() || v >= n()) throw std::invalid_argument("Graph: endpoint out of range");
        auto ins = [](IndexSet& a, Index x) {
            auto it = std::lower_bound(a.begin(), a.end(), x);
            if (it == a.end() || *it != x) a.insert(it, x);
        };
        ins(adj_[u], v);
        ins(adj_[v], u);
    }

    bool has_edge(Index u, Index v) const {
        const auto& a = adj_[u];
        return std::binary_search(a.begin(), a.end(), v);
    }

    const IndexSet& neighbors(Index v) const { return adj_[v]; }
    Index degree(Index v) const { return static_cast<Index>(adj_[v].size()); }

    Index max_degree() const {
        Index d = 0;
        for (const auto& a : adj_) d = std::max<Index>(d, a.size());
        return d;
    }

    std::vector<Edge> edges() const {
        std::vector<Edge> out;
        for (Index u = 0; u < n(); ++u)
            for (Index v : adj_[u])
                if (u < v) out.emplace_back(u, v);
        return out;
    }

    Index edge_count() const {
        Index c = 0;
        for (const auto& a : adj_) c += a.size();
        return c / 2;
    }

    // Connected components of the subgraph induced by `keep` (all vertices when empty mask).
    std::vector<IndexSet> components(const std::vector<char>& keep = {}) const {
        std::vector<char> seen(n(), 0);
        std::vector<IndexSet> out;
        for (Index s = 0; s < n(); ++s) {
            if (seen[s] || (!keep.empty() && !keep[s])) continue;
            IndexSet comp{s};
            seen[s] = 1;
            for (size_t h = 0; h < comp.size(); ++h)
                for (Index v : adj_[comp[h]])
                    if (!seen[v] && (keep.empty() || keep[v])) {
                        seen[v] = 1;
                        comp.push_back(v);
                    }
            std::sort(comp.begin(), comp.end());
            out.push_back(std::move(comp));
        }
        return out;
    }

private:
    std::vector<IndexSet> adj_;
};

// Off-diagonal support of a symmetric sparse matrix.
inline Graph support_graph(const SparseMatrix& m) {
    Graph g(m.rows());
    for (Index k = 0; k < m.outerSize(); ++k)
        for (SparseMatrix::InnerIterator it(m, k); it; ++it)
            if (it.row() != it.col() && it.value() != 0.0) g.add_edge(it.row(), it.col());
    return g;
}

// True when every off-diagonal nonzero of m is an edge of g.
inline bool support_within(const SparseMatrix& m, const Graph& g) {
    for (Index k = 0; k < m.outerSize(); ++k)
        for (SparseMatrix::InnerIterator it(m, k); it; ++it)
            if (it.row() != it.col() && it.value() != 0.0 && !g.has_edge(it.row(), it.col())) return false;
    return true;
}

namespace graphs {

inline Graph path(Index n) {
    Graph g(n);
    for (Index i = 0; i + 1 < n; ++i) g.add_edge(i, i + 1);
    return g;
}

inline Graph cycle(Index n) {
    Graph g = path(n);
    if (n >= 3) g.add_edge(n - 1, 0);
    return g;
}

inline Graph complete(Index n) {
    Graph g(n);
    for (Index i = 0; i < n; ++i)
        for (Index j = i + 1; j < n; ++j) g.add_edge(i, j);
    return g;
}

// rows×cols grid, vertex (i,j) ↦ i·cols + j.
inline Graph grid(Index rows, Index cols) {
    Graph g(rows * cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) {
            if (i + 1 < rows) g.add_edge(i * cols + j, (i + 1) * cols + j);
            if (j + 1 < cols) g.add_edge(i * cols + j, i * cols + j + 1);
        }
    return g;
}

// Vertices i, j adjacent iff 0 < |i − j| ≤ t.
inline Graph banded(Index n, Index t) {
    Graph g(n);
    for (Index i = 0; i < n; ++i)
        for (Index j = i + 1; j <= std::min(n - 1, i + t); ++j) g.add_edge(i, j);
    return g;
}

// Uniform random recursive tree: vertex i attaches to a uniform earlier vertex.
inline Graph random_tree(Index n, RngStream& rng) {
    Graph g(n);
    for (Index i = 1; i < n; ++i) g.add_edge(i, rng.integer(i));
    return g;
}

// Union of d/2 random Hamiltonian cycles; max degree ≤ d.
inline Graph random_regularish(Index n, Index d, RngStream& rng) {
    Graph g(n);
    IndexSet order(n);
    for (Index c = 0; c < d / 2; ++c) {
        std::iota(order.begin(), order.end(), Index{0});
        rng.shuffle(order.begin(), order.end());
        for (Index i = 0; i < n; ++i) {
            Index u = order[i], v = order[(i + 1) % n];
            if (u != v) g.add_edge(u, v);
        }
    }
    return g;
}

}  // namespace graphs

// Tree decompositions -------------------------------------------------------

struct TreeDecomposition {
    std::vector<IndexSet> bags;        // sorted vertex lists
    std::vector<Edge> tree_edges;      // over bag ids

    Index width() const {
        Index w = 0;
        for (const auto& b : bags) w = std::max<Index>(w, b.size());
        return w - 1;
    }

    std::vector<IndexSet> tree_adjacency() const {
        std::vector<IndexSet> adj(bags.size());
        for (auto [a, b] : tree_edges) {
            adj[a].push_back(b);
            adj[b].push_back(a);
        }
        for (auto& a : adj) std::sort(a.begin(), a.end());
        return adj;
    }
};

// Returns the width iff all decomposition axioms hold.
inline Index validate_tree_decomposition(const Graph& g, const TreeDecomposition& t) {
    const Index nb = static_cast<Index>(t.bags.size());
    for (auto [a, b] : t.tree_edges)
        if (a < 0 || b < 0 || a >= nb || b >= nb || a == b)
            throw std::invalid_argument("tree decomposition: bad tree edge");
    // The bag graph must be a forest.
    {
        std::vector<Index> parent(nb);
        std::iota(parent.begin(), parent.end(), Index{0});
        std::function<Index(Index)> find = [&](Index x) { return parent[x] == x ? x : parent[x] = find(parent[x]); };
        for (auto [a, b] : t.tree_edges) {
            Index ra = find(a), rb = find(b);
            if (ra == rb) throw std::invalid_argument("tree decomposition: bag graph has a cycle");
            parent[ra] = rb;
        }
    }
    std::vector<IndexSet> holders(g.n());
    for (Index b = 0; b < nb; ++b)
        for (Index v : t.bags[b]) {
            if (v < 0 || v >= g.n()) throw std::invalid_argument("tree decomposition: vertex out of range");
            holders[v].push_back(b);
        }
    for (auto [u, v] : g.edges()) {
        IndexSet common;
        std::set_intersection(holders[u].begin(), holders[u].end(), holders[v].begin(), holders[v].end(),
                              std::back_inserter(common));
        if (common.empty())
            throw EdgeUncovered("(" + std::to_string(u) + "," + std::to_string(v) + ")");
    }
    auto adj = t.tree_adjacency();
    std::vector<char> mark(nb, 0);
    for (Index v = 0; v < g.n(); ++v) {
        const auto& h = holders[v];
        if (h.empty()) throw DisconnectedVertexSubtree(std::to_string(v) + " in no bag");
        for (Index b : h) mark[b] = 1;
        std::vector<Index> stack{h[0]};
        std::vector<char> seen(nb, 0);
        seen[h[0]] = 1;
        size_t reached = 1;
        while (!stack.empty()) {
            Index b = stack.back();
            stack.pop_back();
            for (Index c : adj[b])
                if (mark[c] && !seen[c]) {
                    seen[c] = 1;
                    ++reached;
                    stack.push_back(c);
                }
        }
        for (Index b : h) mark[b] = 0;
        if (reached != h.size()) throw DisconnectedVertexSubtree(std::to_string(v));
    }
    return t.width();
}

// Elimination-ordering decomposition from the min-fill heuristic
// (ties: smaller degree, then smaller vertex id). Components are chained
// into a single tree.
inline TreeDecomposition min_fill_tree_decomposition(const Graph& g) {
    const Index n = g.n();
    std::vector<std::set<Index>> adj(n);
    for (Index v = 0; v < n; ++v) adj[v].insert(g.neighbors(v).begin(), g.neighbors(v).end());

    auto fill_of = [&](Index v) {
        Index f = 0;
        for (auto a = adj[v].begin(); a != adj[v].end(); ++a)
            for (auto b = std::next(a); b != adj[v].end(); ++b)
                if (!adj[*a].count(*b)) ++f;
        return f;
    };
    using Key = std::tuple<Index, Index, Index>;
    std::set<Key> queue;
    std::vector<Key> key(n);
    for (Index v = 0; v < n; ++v) {
        key[v] = {fill_of(v), static_cast<Index>(adj[v].size()), v};
        queue.insert(key[v]);
    }

    TreeDecomposition td;
    td.bags.resize(n);
    std::vector<Index> position(n, -1);
    std::vector<IndexSet> later(n);
    for (Index step = 0; step < n; ++step) {
        Index v = std::get<2>(*queue.begin());
        queue.erase(queue.begin());
        position[v] = step;
        IndexSet nb(adj[v].begin(), adj[v].end());
        later[step] = nb;
        IndexSet bag = nb;
        bag.push_back(v);
        std::sort(bag.begin(), bag.end());
        td.bags[step] = bag;
        for (size_t a = 0; a < nb.size(); ++a)
            for (size_t b = a + 1; b < nb.size(); ++b) {
                adj[nb[a]].insert(nb[b]);
                adj[nb[b]].insert(nb[a]);
            }
        for (Index u : nb) adj[u].erase(v);
        std::set<Index> touched(nb.begin(), nb.end());
        for (Index u : nb) touched.insert(adj[u].begin(), adj[u].end());
        for (Index u : touched) {
            if (position[u] >= 0) continue;
            queue.erase(key[u]);
            key[u] = {fill_of(u), static_cast<Index>(adj[u].size()), u};
            queue.insert(key[u]);
        }
    }
    // Parent bag: the earliest-eliminated remaining neighbour.
    Index prev_root = -1;
    for (Index step = 0; step < n; ++step) {
        Index parent = -1;
        for (Index u : later[step])
            if (parent < 0 || position[u] < parent) parent = position[u];
        if (parent >= 0) {
            td.tree_edges.emplace_back(step, parent);
        } else {
            if (prev_root >= 0) td.tree_edges.emplace_back(prev_root, step);
            prev_root = step;
        }
    }
    return td;
}

// Centroid decomposition ------------------------------------------------------

struct CentroidSplit {
    IndexSet A, P, Q;
    Index centroid_bag = -1;
    std::vector<Index> P_bags, Q_bags;   // bag ids carried into each side
};

namespace detail {

// Split on the decomposition restricted to R, considering only `candidates` bags.
inline CentroidSplit centroid_split_on(const TreeDecomposition& t, const std::vector<IndexSet>& tree_adj,
                                       const IndexSet& R, const std::vector<Index>& candidates,
                                       std::vector<char>& in_r, std::vector<Index>& local) {
    CentroidSplit out;
    for (Index v : R) in_r[v] = 1;
    std::vector<Index> active;
    std::vector<IndexSet> rbag;
    for (Index b : candidates) {
        IndexSet r;
        for (Index v : t.bags[b])
            if (in_r[v]) r.push_back(v);
        if (!r.empty()) {
            local[b] = static_cast<Index>(active.size());
            active.push_back(b);
            rbag.push_back(std::move(r));
        }
    }
    const Index na = static_cast<Index>(active.size());
    std::vector<IndexSet> adj(na);
    for (Index i = 0; i < na; ++i)
        for (Index c : tree_adj[active[i]])
            if (local[c] >= 0 && c != active[i]) adj[i].push_back(local[c]);

    // Ownership weights: each vertex counts for the smallest bag id holding it.
    std::vector<Index> weight(na, 0);
    {
        std::map<Index, Index> owner;
        for (Index i = 0; i < na; ++i)
            for (Index v : rbag[i]) {
                auto it = owner.find(v);
                if (it == owner.end() || active[it->second] > active[i]) owner[v] = i;
            }
        for (auto [v, i] : owner) weight[i] += 1;
    }

    // Forest components, rooted at their smallest bag id.
    std::vector<Index> comp(na, -1), order;
    std::vector<Index> parent(na, -1);
    std::vector<Index> comp_weight, comp_min;
    std::vector<Index> by_id(na);
    std::iota(by_id.begin(), by_id.end(), Index{0});
    std::sort(by_id.begin(), by_id.end(), [&](Index a, Index b) { return active[a] < active[b]; });
    for (Index s : by_id) {
        if (comp[s] >= 0) continue;
        Index c = static_cast<Index>(comp_weight.size());
        comp_weight.push_back(0);
        comp_min.push_back(active[s]);
        comp[s] = c;
        std::vector<Index> q{s};
        for (size_t h = 0; h < q.size(); ++h) {
            Index x = q[h];
            order.push_back(x);
            comp_weight[c] += weight[x];
            for (Index y : adj[x])
                if (comp[y] < 0) {
                    comp[y] = c;
                    parent[y] = x;
                    q.push_back(y);
                }
        }
    }
    Index big = 0;
    for (Index c = 1; c < static_cast<Index>(comp_weight.size()); ++c)
        if (comp_weight[c] > comp_weight[big]) big = c;

    std::vector<Index> sub(weight);
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if (parent[*it] >= 0) sub[parent[*it]] += sub[*it];
    const Index total = comp_weight[big];
    Index centroid = -1;
    for (Index s : by_id) {
        if (comp[s] != big) continue;
        Index worst = total - sub[s];
        for (Index y : adj[s])
            if (parent[y] == s) worst = std::max(worst, sub[y]);
        if (2 * worst <= total) {
            centroid = s;
            break;
        }
    }
    out.centroid_bag = active[centroid];
    out.A = rbag[centroid];

    // Components of the forest minus the centroid bag.
    for (Index v : out.A) in_r[v] = 2;
    std::vector<Index> piece(na, -1);
    piece[centroid] = -2;
    struct Piece {
        IndexSet vertices;
        std::vector<Index> bags;
        Index min_bag;
    };
    std::vector<Piece> pieces;
    for (Index s : by_id) {
        if (piece[s] != -1) continue;
        Index p = static_cast<Index>(pieces.size());
        pieces.push_back({{}, {}, active[s]});
        piece[s] = p;
        std::vector<Index> q{s};
        for (size_t h = 0; h < q.size(); ++h) {
            Index x = q[h];
            pieces[p].bags.push_back(active[x]);
            for (Index v : rbag[x])
                if (in_r[v] == 1) pieces[p].vertices.push_back(v);
            for (Index y : adj[x])
                if (piece[y] == -1) {
                    piece[y] = p;
                    q.push_back(y);
                }
        }
        auto& vs = pieces[p].vertices;
        std::sort(vs.begin(), vs.end());
        vs.erase(std::unique(vs.begin(), vs.end()), vs.end());
    }
    std::vector<Index> ord(pieces.size());
    std::iota(ord.begin(), ord.end(), Index{0});
    std::sort(ord.begin(), ord.end(), [&](Index a, Index b) {
        if (pieces[a].vertices.size() != pieces[b].vertices.size())
            return pieces[a].vertices.size() > pieces[b].vertices.size();
        return pieces[a].min_bag < pieces[b].min_bag;
    });
    for (Index p : ord) {
        if (pieces[p].vertices.empty()) continue;
        bool left = out.P.size() <= out.Q.size();
        auto& side = left ? out.P : out.Q;
        auto& side_bags = left ? out.P_bags : out.Q_bags;
        side.insert(side.end(), pieces[p].vertices.begin(), pieces[p].vertices.end());
        side_bags.insert(side_bags.end(), pieces[p].bags.begin(), pieces[p].bags.end());
    }
    std::sort(out.P.begin(), out.P.end());
    std::sort(out.Q.begin(), out.Q.end());
    std::sort(out.P_bags.begin(), out.P_bags.end());
    std::sort(out.Q_bags.begin(), out.Q_bags.end());

    for (Index v : R) in_r[v] = 0;
    for (Index b : active) local[b] = -1;
    return out;
}

}  // namespace detail

inline CentroidSplit centroid_split(const TreeDecomposition& t, const IndexSet& R) {
    if (R.empty()) throw std::invalid_argument("centroid_split: empty restriction");
    Index n = *std::max_element(R.begin(), R.end()) + 1;
    for (const auto& b : t.bags)
        for (Index v : b) n = std::max(n, v + 1);
    std::vector<char> in_r(n, 0);
    std::vector<Index> local(t.bags.size(), -1);
    std::vector<Index> all(t.bags.size());
    std::iota(all.begin(), all.end(), Index{0});
    return detail::centroid_split_on(t, t.tree_adjacency(), R, all, in_r, local);
}

struct CentroidTree {
    struct Node {
        IndexSet group;
        Index left = -1, right = -1, parent = -1;
        Index depth = 0;
    };
    std::vector<Node> nodes;            // ids in preorder; root = 0
    std::vector<Index> node_of;         // vertex → node id
    std::vector<Index> order;           // preorder vertex sequence
    std::vector<Index> position;        // vertex → index in `order`

    Index n() const { return static_cast<Index>(node_of.size()); }
    Index size() const { return static_cast<Index>(nodes.size()); }

    Index depth() const {
        Index d = 0;
        for (const auto& nd : nodes) d = std::max(d, nd.depth + 1);
        return d;
    }

    // Vertex set of the subtree rooted at `node`.
    IndexSet subtree_vertices(Index node) const {
        IndexSet out;
        if (node < 0) return out;
        std::vector<Index> stack{node};
        while (!stack.empty()) {
            Index x = stack.back();
            stack.pop_back();
            out.insert(out.end(), nodes[x].group.begin(), nodes[x].group.end());
            if (nodes[x].left >= 0) stack.push_back(nodes[x].left);
            if (nodes[x].right >= 0) stack.push_back(nodes[x].right);
        }
        std::sort(out.begin(), out.end());
        return out;
    }

    bool is_ancestor_or_self(Index anc, Index node) const {
        for (Index x = node; x >= 0; x = nodes[x].parent)
            if (x == anc) return true;
        return false;
    }

    // Builds a tree from explicit nodes (parent links, groups); used by readers and tests.
    static CentroidTree from_nodes(Index n, std::vector<Node> nodes) {
        CentroidTree t;
        t.nodes = std::move(nodes);
        t.node_of.assign(n, -1);
        for (Index i = 0; i < t.size(); ++i) {
            for (Index v : t.nodes[i].group) t.node_of[v] = i;
            Index p = t.nodes[i].parent;
            t.nodes[i].depth = p >= 0 ? t.nodes[p].depth + 1 : 0;
        }
        t.order.clear();
        std::vector<Index> stack{0};
        while (!stack.empty() && t.size() > 0) {
            Index x = stack.back();
            stack.pop_back();
            t.order.insert(t.order.end(), t.nodes[x].group.begin(), t.nodes[x].group.end());
            if (t.nodes[x].right >= 0) stack.push_back(t.nodes[x].right);
            if (t.nodes[x].left >= 0) stack.push_back(t.nodes[x].left);
        }
        t.position.assign(n, -1);
        for (Index i = 0; i < static_cast<Index>(t.order.size()); ++i) t.position[t.order[i]] = i;
        return t;
    }
};

inline CentroidTree build_centroid_tree(const Graph& g, const TreeDecomposition& t) {
    const Index n = g.n();
    CentroidTree ct;
    if (n == 0) return ct;
    auto tree_adj = t.tree_adjacency();
    std::vector<char> in_r(n, 0);
    std::vector<Index> local(t.bags.size(), -1);

    std::vector<CentroidTree::Node> nodes;
    std::function<Index(const IndexSet&, const std::vector<Index>&, Index, Index)> build =
        [&](const IndexSet& R, const std::vector<Index>& cand, Index parent, Index depth) -> Index {
        if (R.empty()) return -1;
        CentroidSplit s = detail::centroid_split_on(t, tree_adj, R, cand, in_r, local);
        Index id = static_cast<Index>(nodes.size());
        nodes.push_back({s.A, -1, -1, parent, depth});
        Index l = build(s.P, s.P_bags, id, depth + 1);
        Index r = build(s.Q, s.Q_bags, id, depth + 1);
        nodes[id].left = l;
        nodes[id].right = r;
        return id;
    };
    IndexSet all(n);
    std::iota(all.begin(), all.end(), Index{0});
    std::vector<Index> bags(t.bags.size());
    std::iota(bags.begin(), bags.end(), Index{0});
    build(all, bags, -1, 0);
    return CentroidTree::from_nodes(n, std::move(nodes));
}

// Checks partition, separator and size invariants; returns an empty string when valid.
inline std::string check_centroid_tree(const Graph& g, const CentroidTree& ct) {
    std::vector<int> seen(g.n(), 0);
    for (const auto& nd : ct.nodes)
        for (Index v : nd.group) ++seen[v];
    for (Index v = 0; v < g.n(); ++v)
        if (seen[v] != 1) return "vertex " + std::to_string(v) + " covered " + std::to_string(seen[v]) + " times";
    for (Index i = 0; i < ct.size(); ++i) {
        const auto& nd = ct.nodes[i];
        IndexSet p = ct.subtree_vertices(nd.left), q = ct.subtree_vertices(nd.right);
        IndexSet r = ct.subtree_vertices(i);
        if (3 * p.size() > 2 * r.size() || 3 * q.size() > 2 * r.size())
            return "node " + std::to_string(i) + " unbalanced";
        std::vector<char> inq(g.n(), 0);
        for (Index v : q) inq[v] = 1;
        for (Index u : p)
            for (Index v : g.neighbors(u))
                if (inq[v]) return "edge across node " + std::to_string(i);
    }
    return {};
}

// IO ------------------------------------------------------------------------------

inline void write_graph(std::ostream& os, const Graph& g) {
    os << g.n() << '\n';
    for (auto [u, v] : g.edges()) os << u << ' ' << v << '\n';
}

inline Graph read_graph(std::istream& is) {
    long long n;
    if (!(is >> n) || n < 0) throw MalformedInput("graph header");
    Graph g(n);
    long long u, v;
    while (is >> u >> v) g.add_edge(u, v);
    return g;
}

// PACE td format; ids in the file are 1-based as in the PACE convention.
inline void write_tree_decomposition(std::ostream& os, const TreeDecomposition& t, Index n) {
    os << "s td " << t.bags.size() << ' ' << t.width() + 1 << ' ' << n << '\n';
    for (size_t b = 0; b < t.bags.size(); ++b) {
        os << "b " << b + 1;
        for (Index v : t.bags[b]) os << ' ' << v + 1;
        os << '\n';
    }
    for (auto [a, b] : t.tree_edges) os << a + 1 << ' ' << b + 1 << '\n';
}

inline TreeDecomposition read_tree_decomposition(std::istream& is) {
    TreeDecomposition t;
    std::string line;
    bool header = false;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == 'c') continue;
        std::istringstream ls(line);
        if (line[0] == 's') {
            std::string s, td;
            long long nb, w, n;
            if (!(ls >> s >> td >> nb >> w >> n) || td != "td") throw MalformedInput("td header");
            t.bags.resize(nb);
            header = true;
        } else if (line[0] == 'b') {
            std::string b;
            long long id, v;
            ls >> b >> id;
            if (!header || id < 1 || id > static_cast<long long>(t.bags.size())) throw MalformedInput("td bag id");
            while (ls >> v) t.bags[id - 1].push_back(v - 1);
            std::sort(t.bags[id - 1].begin(), t.bags[id - 1].end());
        } else {
            long long a, b;
            if (!(ls >> a >> b)) throw MalformedInput("td edge line");
            t.tree_edges.emplace_back(a - 1, b - 1);
        }
    }
    if (!header) throw MalformedInput("td header missing");
    return t;
}

}  // namespace precondlasso
