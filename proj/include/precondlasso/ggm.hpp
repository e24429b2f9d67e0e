#pragma once

#include "precondlasso/graph.hpp"

#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>

#include <json.hpp>

namespace precondlasso {

struct PrecisionModel {
    SparseMatrix theta;
    Graph support;
    std::optional<DenseMatrix> sigma;
    std::string label;
    double noise_sigma = 0.0;

    Index n() const { return theta.rows(); }
};

struct SampleSet {
    DenseMatrix X;
    Vector Y;
    std::optional<Vector> w_star;
    double noise_sigma = 0.0;
};

// Checks the PrecisionModel invariants; returns an empty string when they hold.
inline std::string check_model(const PrecisionModel& m) {
    if (m.theta.rows() != m.theta.cols()) return "theta not square";
    if (m.support.n() != m.n()) return "support size mismatch";
    if (!is_symmetric(m.theta)) return "theta not symmetric";
    if (!support_within(m.theta, m.support)) return "theta support exceeds graph";
    if (m.sigma) {
        DenseMatrix r = DenseMatrix(m.theta) * *m.sigma - DenseMatrix::Identity(m.n(), m.n());
        if (r.norm() > 1e-8 * std::sqrt(static_cast<double>(m.n()))) return "theta * sigma != I";
    }
    return {};
}

// Precision-side sampler: rows of X are Pᵀ L⁻ᵀ z with P Θ Pᵀ = L Lᵀ.
class CovariateSampler {
public:
    explicit CovariateSampler(const SparseMatrix& theta) : n_(theta.rows()) {
        llt_ = std::make_shared<Eigen::SimplicialLLT<SparseMatrix>>(theta);
        if (llt_->info() != Eigen::Success) throw NotPositiveDefinite("precision matrix");
        SparseMatrix l = llt_->matrixL();
        Vector d = l.diagonal();
        const double threshold = 1e-12 * std::abs(theta.diagonal().sum()) / std::max<Index>(1, n_);
        for (Index i = 0; i < d.size(); ++i)
            if (!(d(i) * d(i) > threshold)) throw NotPositiveDefinite("pivot " + std::to_string(i));
    }

    DenseMatrix sample(Index m, RngStream& stream) const {
        DenseMatrix z = gaussian_draw(stream, m, n_);
        DenseMatrix y = z.transpose();
        llt_->matrixU().solveInPlace(y);
        DenseMatrix x = llt_->permutationPinv() * y;
        return x.transpose();
    }

private:
    Index n_;
    std::shared_ptr<Eigen::SimplicialLLT<SparseMatrix>> llt_;
};

inline DenseMatrix sample_covariates(const PrecisionModel& model, Index m, RngStream& stream) {
    return CovariateSampler(model.theta).sample(m, stream);
}

inline SampleSet make_labels(const DenseMatrix& X, const Vector& w_star, double noise_sigma, RngStream& stream) {
    if (X.cols() != w_star.size()) throw std::invalid_argument("make_labels: dimension mismatch");
    SampleSet s;
    s.X = X;
    s.Y = X * w_star;
    if (noise_sigma > 0)
        for (Index i = 0; i < s.Y.size(); ++i) s.Y(i) += noise_sigma * stream.normal();
    s.w_star = w_star;
    s.noise_sigma = noise_sigma;
    return s;
}

inline DenseMatrix empirical_covariance(const DenseMatrix& X) {
    if (X.rows() < 1) throw std::invalid_argument("empirical_covariance: no samples");
    DenseMatrix c = DenseMatrix::Zero(X.cols(), X.cols());
    c.selfadjointView<Eigen::Lower>().rankUpdate(X.transpose(), 1.0 / static_cast<double>(X.rows()));
    return c.selfadjointView<Eigen::Lower>();
}

// Generators --------------------------------------------------------------------

inline constexpr Index kExactSigmaLimit = 4096;

inline PrecisionModel make_identity_model(Index n) {
    PrecisionModel m;
    m.theta = sparse_identity(n);
    m.support = Graph(n);
    m.sigma = DenseMatrix::Identity(n, n);
    m.label = "identity";
    return m;
}

// Σ_ij = min(i, j) in 1-based indices; Θ is the tridiagonal path precision.
inline PrecisionModel make_random_walk(Index n) {
    if (n < 1) throw std::invalid_argument("make_random_walk: n < 1");
    std::vector<Triplet> t;
    for (Index i = 0; i < n; ++i) {
        t.emplace_back(i, i, i + 1 < n ? 2.0 : 1.0);
        if (i + 1 < n) {
            t.emplace_back(i, i + 1, -1.0);
            t.emplace_back(i + 1, i, -1.0);
        }
    }
    PrecisionModel m;
    m.theta = sparse_from_triplets(n, n, t);
    m.support = graphs::path(n);
    if (n <= kExactSigmaLimit) {
        DenseMatrix s(n, n);
        for (Index j = 0; j < n; ++j)
            for (Index i = 0; i < n; ++i) s(i, j) = static_cast<double>(std::min(i, j) + 1);
        m.sigma = std::move(s);
    }
    m.label = "random-walk";
    return m;
}

struct StandardizedWalk {
    PrecisionModel model;
    SparseMatrix S;   // diag(√i), 1-based
};

inline StandardizedWalk make_standardized_walk(Index n) {
    StandardizedWalk w{make_random_walk(n), SparseMatrix(n, n)};
    w.model.label = "standardized-walk";
    std::vector<Triplet> t;
    for (Index i = 0; i < n; ++i) t.emplace_back(i, i, std::sqrt(static_cast<double>(i + 1)));
    w.S = sparse_from_triplets(n, n, t);
    return w;
}

inline SparseMatrix diagonal_preconditioner(const Vector& d) {
    std::vector<Triplet> t;
    for (Index i = 0; i < d.size(); ++i) t.emplace_back(i, i, d(i));
    return sparse_from_triplets(d.size(), d.size(), t);
}

// Laplacian of the bandwidth-t path plus e₀e₀ᵀ; t = 1 is the random walk.
inline PrecisionModel make_banded_walk(Index n, Index t) {
    Graph g = graphs::banded(n, t);
    std::vector<Triplet> tr;
    Vector diag = Vector::Zero(n);
    for (auto [u, v] : g.edges()) {
        tr.emplace_back(u, v, -1.0);
        tr.emplace_back(v, u, -1.0);
        diag(u) += 1.0;
        diag(v) += 1.0;
    }
    diag(0) += 1.0;
    for (Index i = 0; i < n; ++i) tr.emplace_back(i, i, diag(i));
    PrecisionModel m;
    m.theta = sparse_from_triplets(n, n, tr);
    m.support = g;
    if (n <= 1024) {
        Eigen::SimplicialLLT<SparseMatrix> llt(m.theta);
        m.sigma = llt.solve(DenseMatrix::Identity(n, n));
    }
    m.label = "banded-walk-t" + std::to_string(t);
    return m;
}

// Diagonally dominant precision on a given support with random signed weights.
inline PrecisionModel make_random_model(const Graph& g, RngStream& rng, bool exact_sigma = true) {
    const Index n = g.n();
    std::vector<Triplet> t;
    Vector diag = Vector::Zero(n);
    for (auto [u, v] : g.edges()) {
        double w = (0.2 + 0.8 * rng.uniform()) * (rng.bernoulli(0.5) ? 1.0 : -1.0);
        t.emplace_back(u, v, w);
        t.emplace_back(v, u, w);
        diag(u) += std::abs(w);
        diag(v) += std::abs(w);
    }
    for (Index i = 0; i < n; ++i) t.emplace_back(i, i, diag(i) + 0.5 + rng.uniform());
    PrecisionModel m;
    m.theta = sparse_from_triplets(n, n, t);
    m.support = g;
    if (exact_sigma && n <= kExactSigmaLimit) {
        Eigen::SimplicialLLT<SparseMatrix> llt(m.theta);
        DenseMatrix s = llt.solve(DenseMatrix::Identity(n, n));
        m.sigma = 0.5 * (s + s.transpose());
    }
    m.label = "random";
    return m;
}

// Model IO ------------------------------------------------------------------------------

inline void write_model(const std::filesystem::path& dir, const PrecisionModel& m) {
    std::filesystem::create_directories(dir);
    nlohmann::json j;
    j["n"] = m.n();
    j["label"] = m.label;
    j["noise_sigma"] = m.noise_sigma;
    j["theta"] = "theta.mtx";
    j["support"] = "support.graph";
    {
        std::ofstream os(dir / "theta.mtx");
        write_matrix(os, m.theta);
    }
    {
        std::ofstream os(dir / "support.graph");
        write_graph(os, m.support);
    }
    if (m.sigma) {
        j["sigma"] = "sigma.mtx";
        std::ofstream os(dir / "sigma.mtx");
        write_matrix(os, *m.sigma);
    }
    std::ofstream os(dir / "model.json");
    os << j.dump(2) << '\n';
}

inline PrecisionModel read_model(const std::filesystem::path& dir) {
    std::ifstream js(dir / "model.json");
    if (!js) throw MalformedInput("missing model.json in " + dir.string());
    nlohmann::json j = nlohmann::json::parse(js);
    PrecisionModel m;
    m.label = j.value("label", "");
    m.noise_sigma = j.value("noise_sigma", 0.0);
    {
        std::ifstream is(dir / j.at("theta").get<std::string>());
        m.theta = read_sparse_matrix(is);
    }
    if (j.contains("support")) {
        std::ifstream is(dir / j["support"].get<std::string>());
        m.support = read_graph(is);
    } else {
        m.support = support_graph(m.theta);
    }
    if (j.contains("sigma")) {
        std::ifstream is(dir / j["sigma"].get<std::string>());
        m.sigma = read_dense_matrix(is);
    }
    if (m.theta.rows() != j.at("n").get<Index>()) throw MalformedInput("model n mismatch");
    return m;
}

}  // namespace precondlasso
