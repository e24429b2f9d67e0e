#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

namespace precondlasso {

using Index = Eigen::Index;
using DenseMatrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;
using IndexSet = std::vector<Index>;

// Errors ------------------------------------------------------------------

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

#define PRECONDLASSO_ERROR(Name)                                   \
    struct Name : Error {                                          \
        explicit Name(const std::string& what)                     \
            : Error(std::string(#Name ": ") + what) {}             \
    }

PRECONDLASSO_ERROR(NotPositiveDefinite);
PRECONDLASSO_ERROR(SingularBlock);
PRECONDLASSO_ERROR(NoConvergence);
PRECONDLASSO_ERROR(EdgeUncovered);
PRECONDLASSO_ERROR(DisconnectedVertexSubtree);
PRECONDLASSO_ERROR(BlockNotPD);
PRECONDLASSO_ERROR(Infeasible);
PRECONDLASSO_ERROR(NumericalFailure);
PRECONDLASSO_ERROR(TooLarge);
PRECONDLASSO_ERROR(RankDeficient);
PRECONDLASSO_ERROR(GenerationFailed);
PRECONDLASSO_ERROR(LayoutOverflow);
PRECONDLASSO_ERROR(InvalidMinorModel);
PRECONDLASSO_ERROR(MalformedCSV);
PRECONDLASSO_ERROR(MalformedInput);

#undef PRECONDLASSO_ERROR

// Random streams ------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) {
    return splitmix64(h ^ (splitmix64(v) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2)));
}

inline std::uint64_t hash_string(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

// Deterministic (seed, stream-id) keyed generator.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream_id)
        : seed_(seed), stream_id_(stream_id),
          engine_(splitmix64(seed ^ splitmix64(stream_id + 0x632be59bd9b4e019ULL))) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream_id() const { return stream_id_; }

    double normal() { return normal_(engine_); }
    double uniform() { return uniform_(engine_); }
    bool bernoulli(double p) { return uniform() < p; }

    // Uniform integer in [0, n).
    Index integer(Index n) {
        std::uniform_int_distribution<Index> d(0, n - 1);
        return d(engine_);
    }

    template <class It>
    void shuffle(It first, It last) { std::shuffle(first, last, engine_); }

    // Child stream derived from this stream's key; does not advance the parent.
    RngStream child(std::uint64_t tag) const { return RngStream(seed_, hash_combine(stream_id_, tag)); }

    std::mt19937_64& engine() { return engine_; }

private:
    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

inline DenseMatrix gaussian_draw(RngStream& stream, Index rows, Index cols) {
    DenseMatrix out(rows, cols);
    // Row-major fill order so that the sequence matches the serialized layout.
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) out(i, j) = stream.normal();
    return out;
}

inline Vector gaussian_vector(RngStream& stream, Index n) {
    Vector out(n);
    for (Index i = 0; i < n; ++i) out(i) = stream.normal();
    return out;
}

// k distinct indices from [0, n), ascending.
inline IndexSet random_subset(RngStream& stream, Index n, Index k) {
    IndexSet all(n);
    for (Index i = 0; i < n; ++i) all[i] = i;
    for (Index i = 0; i < k; ++i) std::swap(all[i], all[i + stream.integer(n - i)]);
    IndexSet out(all.begin(), all.begin() + k);
    std::sort(out.begin(), out.end());
    return out;
}

// Dense helpers -------------------------------------------------------------

inline bool is_symmetric(const DenseMatrix& m, double rel = 1e-12) {
    if (m.rows() != m.cols()) return false;
    double scale = std::max(1.0, m.norm());
    return (m - m.transpose()).norm() <= rel * scale;
}

inline DenseMatrix submatrix(const DenseMatrix& m, const IndexSet& rows, const IndexSet& cols) {
    DenseMatrix out(rows.size(), cols.size());
    for (size_t j = 0; j < cols.size(); ++j)
        for (size_t i = 0; i < rows.size(); ++i) out(i, j) = m(rows[i], cols[j]);
    return out;
}

inline IndexSet complement(Index n, const IndexSet& set) {
    std::vector<char> in(n, 0);
    for (Index i : set) in[i] = 1;
    IndexSet out;
    for (Index i = 0; i < n; ++i)
        if (!in[i]) out.push_back(i);
    return out;
}

// Lower-triangular L with L Lᵀ = M.
inline DenseMatrix cholesky_spd(const DenseMatrix& m) {
    const Index n = m.rows();
    if (m.cols() != n) throw std::invalid_argument("cholesky_spd: matrix not square");
    if (n == 0) return DenseMatrix(0, 0);
    if (!is_symmetric(m)) throw std::invalid_argument("cholesky_spd: matrix not symmetric");
    const double threshold = 1e-12 * std::abs(m.trace()) / static_cast<double>(n);
    Eigen::LLT<DenseMatrix> llt(m);
    if (llt.info() != Eigen::Success) throw NotPositiveDefinite("factorization broke down");
    DenseMatrix l = llt.matrixL();
    for (Index i = 0; i < n; ++i) {
        double pivot = l(i, i) * l(i, i);
        if (!(pivot > threshold))
            throw NotPositiveDefinite("pivot " + std::to_string(i) + " = " + std::to_string(pivot));
    }
    return l;
}

// M / M_bb on the complement of `block`, complement taken in ascending order.
inline DenseMatrix schur_complement(const DenseMatrix& m, const IndexSet& block) {
    if (!is_symmetric(m)) throw std::invalid_argument("schur_complement: matrix not symmetric");
    IndexSet rest = complement(m.rows(), block);
    DenseMatrix d = submatrix(m, rest, rest);
    if (block.empty()) return d;
    DenseMatrix a = submatrix(m, block, block);
    DenseMatrix b = submatrix(m, block, rest);
    DenseMatrix l;
    try {
        l = cholesky_spd(a);
    } catch (const NotPositiveDefinite& e) {
        throw SingularBlock(e.what());
    }
    DenseMatrix h = l.triangularView<Eigen::Lower>().solve(b);
    DenseMatrix out = d - h.transpose() * h;
    return 0.5 * (out + out.transpose());
}

// Sparse helpers ------------------------------------------------------------

inline SparseMatrix sparse_from_triplets(Index rows, Index cols, std::vector<Triplet> t) {
    SparseMatrix s(rows, cols);
    s.setFromTriplets(t.begin(), t.end());
    s.prune(0.0);
    s.makeCompressed();
    return s;
}

inline SparseMatrix sparse_identity(Index n) {
    SparseMatrix s(n, n);
    s.setIdentity();
    return s;
}

inline std::vector<Triplet> to_triplets(const SparseMatrix& s) {
    std::vector<Triplet> out;
    out.reserve(s.nonZeros());
    for (Index k = 0; k < s.outerSize(); ++k)
        for (SparseMatrix::InnerIterator it(s, k); it; ++it)
            if (it.value() != 0.0) out.emplace_back(it.row(), it.col(), it.value());
    std::sort(out.begin(), out.end(), [](const Triplet& a, const Triplet& b) {
        return std::tie(a.row(), a.col()) < std::tie(b.row(), b.col());
    });
    return out;
}

inline bool is_symmetric(const SparseMatrix& m, double rel = 1e-12) {
    if (m.rows() != m.cols()) return false;
    SparseMatrix t = m.transpose();
    return (m - t).norm() <= rel * std::max(1.0, m.norm());
}

// Eigen-extremes ------------------------------------------------------------

enum class Extreme { Largest, SmallestNonzero, KernelDim };

struct ExtremeResult {
    double value = 0.0;      // eigenvalue for Largest/SmallestNonzero, cutoff for KernelDim
    Index count = 0;         // kernel dimension (all modes compute it when cheap)
    double residual = 0.0;   // ‖Mx − θx‖ of the returned eigenpair, 0 for dense
    bool dense = true;
};

struct EigenOptions {
    Index dense_limit = 2048;
    Index iteration_cap = 2000;
};

namespace detail {

inline ExtremeResult dense_extremes(const DenseMatrix& m, Extreme which, double tol) {
    ExtremeResult r;
    const Index n = m.rows();
    if (n == 0) return r;
    Eigen::SelfAdjointEigenSolver<DenseMatrix> es(m, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw NoConvergence("dense eigensolver failed");
    const Vector& ev = es.eigenvalues();
    const double cutoff = tol * m.norm();
    Index k = 0;
    while (k < n && ev(k) < cutoff) ++k;
    r.count = k;
    switch (which) {
        case Extreme::Largest: r.value = ev(n - 1); break;
        case Extreme::SmallestNonzero:
            r.value = k < n ? ev(k) : std::numeric_limits<double>::quiet_NaN();
            break;
        case Extreme::KernelDim: r.value = cutoff; break;
    }
    return r;
}

inline void orthonormalize(DenseMatrix& q) {
    Eigen::HouseholderQR<DenseMatrix> qr(q);
    q = qr.householderQ() * DenseMatrix::Identity(q.rows(), q.cols());
}

}  // namespace detail

inline ExtremeResult eigen_extremes(const SparseMatrix& m, Extreme which, double tol = 1e-9,
                                    EigenOptions opt = {}) {
    const Index n = m.rows();
    if (m.cols() != n) throw std::invalid_argument("eigen_extremes: matrix not square");
    if (n <= opt.dense_limit) return detail::dense_extremes(DenseMatrix(m), which, tol);

    ExtremeResult r;
    r.dense = false;
    const double fro = m.norm();
    const double cutoff = tol * fro;
    RngStream rng(0x5eed, static_cast<std::uint64_t>(n));

    if (which == Extreme::Largest) {
        Vector x = gaussian_vector(rng, n).normalized();
        double theta = 0.0;
        for (Index it = 0; it < opt.iteration_cap; ++it) {
            Vector y = m * x;
            theta = x.dot(y);
            double res = (y - theta * x).norm();
            x = y.normalized();
            if (res <= 1e-9 * std::max(std::abs(theta), 1e-300)) {
                r.value = theta;
                r.residual = res;
                return r;
            }
            r.residual = res;
        }
        throw NoConvergence("power iteration residual " + std::to_string(r.residual));
    }

    // Inertia of M − cI counts eigenvalues below the cutoff.
    SparseMatrix shifted = m - cutoff * sparse_identity(n);
    Eigen::SimplicialLDLT<SparseMatrix> ldlt(shifted);
    if (ldlt.info() != Eigen::Success) throw NoConvergence("LDLT of shifted matrix failed");
    Vector d = ldlt.vectorD();
    for (Index i = 0; i < n; ++i)
        if (d(i) < 0) ++r.count;
    if (which == Extreme::KernelDim) {
        r.value = cutoff;
        return r;
    }

    // Shift-invert subspace iteration on M + cI, Rayleigh-Ritz in M.
    SparseMatrix pd = m + cutoff * sparse_identity(n);
    Eigen::SimplicialLLT<SparseMatrix> llt(pd);
    if (llt.info() != Eigen::Success) throw NoConvergence("LLT of shifted matrix failed");
    const Index b = std::min<Index>(n, r.count + 8);
    DenseMatrix q = gaussian_draw(rng, n, b);
    detail::orthonormalize(q);
    double prev = std::numeric_limits<double>::infinity();
    for (Index it = 0; it < opt.iteration_cap; ++it) {
        q = llt.solve(q);
        detail::orthonormalize(q);
        DenseMatrix mq = m * q;
        DenseMatrix h = q.transpose() * mq;
        Eigen::SelfAdjointEigenSolver<DenseMatrix> es(0.5 * (h + h.transpose()));
        Index k = 0;
        while (k < b && es.eigenvalues()(k) < cutoff) ++k;
        if (k == b) continue;
        double theta = es.eigenvalues()(k);
        Vector y = q * es.eigenvectors().col(k);
        double res = (m * y - theta * y).norm();
        r.value = theta;
        r.residual = res;
        if (res <= 1e-8 * fro && std::abs(theta - prev) <= 1e-10 * std::max(theta, 1e-300)) return r;
        prev = theta;
    }
    throw NoConvergence("subspace iteration residual " + std::to_string(r.residual));
}

// Matrix text format ----------------------------------------------------------

inline void write_matrix(std::ostream& os, const SparseMatrix& m) {
    auto t = to_triplets(m);
    os << m.rows() << ' ' << m.cols() << ' ' << t.size() << '\n';
    char buf[64];
    for (const auto& e : t) {
        std::snprintf(buf, sizeof buf, "%.17g", e.value());
        os << e.row() << ' ' << e.col() << ' ' << buf << '\n';
    }
}

inline void write_matrix(std::ostream& os, const DenseMatrix& m) {
    os << m.rows() << ' ' << m.cols() << ' ' << m.rows() * m.cols() << '\n';
    char buf[64];
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", m(i, j));
            os << i << ' ' << j << ' ' << buf << '\n';
        }
}

inline std::vector<Triplet> read_triplets(std::istream& is, Index& rows, Index& cols) {
    long long r, c, nnz;
    if (!(is >> r >> c >> nnz) || r < 0 || c < 0 || nnz < 0) throw MalformedInput("matrix header");
    rows = r;
    cols = c;
    std::vector<Triplet> t;
    t.reserve(nnz);
    for (long long k = 0; k < nnz; ++k) {
        long long i, j;
        double v;
        if (!(is >> i >> j >> v)) throw MalformedInput("matrix entry " + std::to_string(k));
        if (i < 0 || i >= r || j < 0 || j >= c) throw MalformedInput("index out of range");
        t.emplace_back(i, j, v);
    }
    return t;
}

inline SparseMatrix read_sparse_matrix(std::istream& is) {
    Index r, c;
    auto t = read_triplets(is, r, c);
    return sparse_from_triplets(r, c, std::move(t));
}

inline DenseMatrix read_dense_matrix(std::istream& is) {
    Index r, c;
    auto t = read_triplets(is, r, c);
    DenseMatrix m = DenseMatrix::Zero(r, c);
    for (const auto& e : t) m(e.row(), e.col()) = e.value();
    return m;
}

}  // namespace precondlasso
