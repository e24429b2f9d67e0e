#include "oracles.hpp"

#include <gtest/gtest.h>

#include <map>

using namespace precondlasso;

namespace {

using CellMap = std::map<std::pair<Index, Index>, double>;

void run_equations(const std::vector<GridEquation>& eqs, CellMap& v) {
    for (const auto& e : eqs) {
        double s = 0.0;
        for (const auto& [c, coeff] : e.terms) {
            auto it = v.find({c.i, c.j});
            ASSERT_NE(it, v.end()) << "gadget reads an undefined cell";
            s += coeff * it->second;
        }
        v[{e.target.i, e.target.j}] = s;
    }
}

bool clique(const GridEquation& e) {
    std::vector<Cell> cells{e.target};
    for (const auto& t : e.terms) cells.push_back(t.first);
    for (std::size_t a = 0; a < cells.size(); ++a)
        for (std::size_t b = a + 1; b < cells.size(); ++b) {
            Index di = cells[b].i - cells[a].i, dj = cells[b].j - cells[a].j;
            bool adj = std::abs(di) + std::abs(dj) == 1 || (di == -1 && dj == 1) || (di == 1 && dj == -1);
            if (!adj) return false;
        }
    return true;
}

}  // namespace

TEST(Epsilon, PlugIn) {
    SparseMatrix one = sparse_from_triplets(1, 1, {{0, 0, 1.0}});
    EXPECT_NEAR(epsilon_for_lower_bound(one, 1.0, 1.0), 0.5 / 16200.0, 1e-18);
    RngStream s(1, 1);
    SparseMatrix t = DenseMatrix(gaussian_draw(s, 5, 5)).sparseView();
    EXPECT_NEAR(epsilon_for_lower_bound(t, 0.2, 0.3), 4.0 * epsilon_for_lower_bound(t, 0.1, 0.3), 1e-25);
    EXPECT_THROW(epsilon_for_lower_bound(one, 0.0, 1.0), std::invalid_argument);
}

TEST(DistK, RemovesLargestEntries) {
    Vector v(4);
    v << 3, -4, 1, 0;
    EXPECT_NEAR(dist_k(v, 0), std::sqrt(26.0), 1e-15);
    EXPECT_NEAR(dist_k(v, 1), std::sqrt(10.0), 1e-15);
    EXPECT_NEAR(dist_k(v, 2), 1.0, 1e-15);
    EXPECT_EQ(dist_k(v, 4), 0.0);
    EXPECT_NEAR(dist_k(v, 1, {0, 2}), 1.0, 1e-15);
}

TEST(RobustDensity, MatchesAngularSweep) {
    RngStream s(2, 1);
    DenseMatrix K = gaussian_draw(s, 30, 2);
    IndexSet V{0, 3, 5, 8, 11, 12, 20, 29};
    EtaResult r = robust_density(K, V, 2);
    EXPECT_TRUE(r.exact);
    double sweep = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 200000; ++a) {
        double th = M_PI * a / 200000.0;
        Vector x = K * Eigen::Vector2d(std::cos(th), std::sin(th));
        sweep = std::min(sweep, dist_k(x, 2, V) / x.norm());
    }
    EXPECT_LE(r.value, sweep + 1e-12);
    EXPECT_NEAR(r.value, sweep, 1e-6);
}

TEST(Uncertainty, VerifiedMatrix) {
    RngStream s(3, 1);
    UncertaintyMatrix u = gaussian_uncertainty_matrix(50, s);
    EXPECT_LE(u.op_norm, 3.0);
    EXPECT_GE(u.min_dist, (1.0 / 33.0) * 0.9);
    Vector stacked(100);
    stacked << Vector::Unit(50, 0), u.A * Vector::Unit(50, 0);
    EXPECT_GT(dist_k(stacked, 1), 1.0 / 33.0);
    EXPECT_THROW(gaussian_uncertainty_matrix(10, s), std::invalid_argument);
}

TEST(Gadget, DownRightPassThrough) {
    RngStream s(4, 1);
    for (int t = 0; t < 20; ++t) {
        const Index i = 5, j = 7;
        double x = s.normal(), y = s.normal();
        CellMap v{{{i - 1, j}, x}, {{i, j - 1}, y}};
        auto eqs = swap_gadget(GadgetKind::DownRight, i, j);
        run_equations(eqs, v);
        EXPECT_NEAR((v[{i + 1, j}]), x, 1e-15);
        EXPECT_NEAR((v[{i, j + 1}]), y, 1e-15);
    }
}

TEST(Gadget, DownLeftPassThrough) {
    RngStream s(4, 2);
    for (int t = 0; t < 20; ++t) {
        const Index i = 5, j = 7;
        double x = s.normal(), y = s.normal();
        CellMap v{{{i - 1, j}, x}, {{i, j + 1}, y}};
        auto eqs = swap_gadget(GadgetKind::DownLeft, i, j);
        run_equations(eqs, v);
        EXPECT_NEAR((v[{i + 1, j}]), x, 1e-15);
        EXPECT_NEAR((v[{i, j - 1}]), y, 1e-15);
    }
}

TEST(Gadget, LocalAndCliqueSupported) {
    for (GadgetKind k : {GadgetKind::DownRight, GadgetKind::DownLeft})
        for (const auto& e : swap_gadget(k, 4, 4)) {
            EXPECT_TRUE(clique(e));
            EXPECT_LE(std::abs(e.target.i - 4), 1);
            EXPECT_LE(std::abs(e.target.j - 4), 1);
            for (const auto& term : e.terms) {
                EXPECT_LE(std::abs(term.first.i - 4), 1);
                EXPECT_LE(std::abs(term.first.j - 4), 1);
            }
        }
}

TEST(GridLayout, SetsAndOverflow) {
    GridLayout L = grid_layout(2, GridMode::Faithful);
    EXPECT_EQ(L.N, 400);
    EXPECT_EQ(L.X, (std::vector<Cell>{{0, 0}, {0, 12}}));
    EXPECT_EQ(L.Y, (std::vector<Cell>{{37, 3}, {37, 15}}));
    EXPECT_EQ(grid_layout(2, GridMode::Compact).N, 38);
    EXPECT_THROW(grid_layout(2, GridMode::Compact, 20), LayoutOverflow);
}

TEST(GridCircuit, SinglePath) {
    DenseMatrix A(1, 1);
    A << -1.7;
    GridCircuit c = grid_constraint_matrix(1, A, GridMode::Compact);
    EXPECT_EQ(check_triangle_support(c), "");
    DenseMatrix K = grid_kernel_basis(c);
    ASSERT_EQ(K.cols(), 1);
    EXPECT_LE((c.M * K).norm(), 1e-12);
    EXPECT_NEAR(K(c.Y_ids()[0], 0), -1.7 * K(c.X_ids()[0], 0), 1e-12);
    SparseMatrix theta = c.M.transpose() * c.M;
    EXPECT_EQ(eigen_extremes(theta, Extreme::KernelDim).count, 1);
    EXPECT_EQ(c.layout.gadgets_down_right + c.layout.gadgets_down_left, 0);
    // Path vertices carry the same value as the input.
    const Vector& x = K.col(0);
    Index carriers = 0;
    for (Index v = 0; v < x.size(); ++v)
        if (std::abs(x(v) - x(c.X_ids()[0])) < 1e-15) ++carriers;
    EXPECT_GT(carriers, 10);
}

TEST(GridCircuit, SymbolicSemanticsPThree) {
    RngStream s(5, 1);
    const Index p = 3;
    DenseMatrix A = gaussian_draw(s, p, p);
    GridCircuit c = grid_constraint_matrix(p, A, GridMode::Compact);
    EXPECT_EQ(check_triangle_support(c), "");
    EXPECT_GT(c.layout.gadgets_down_left, 0);
    EXPECT_GT(c.layout.gadgets_down_right, 0);
    EXPECT_EQ(c.M.rows(), c.n() - p);
    for (int t = 0; t < 5; ++t) {
        Vector x = gaussian_vector(s, p);
        Vector v = propagate_circuit(c, x);
        Vector y(p);
        for (Index j = 0; j < p; ++j) y(j) = v(c.Y_ids()[j]);
        EXPECT_LE((y - A * x).norm(), 1e-10 * (1 + (A * x).norm()));
        EXPECT_LE((c.M * v).norm(), 1e-10 * v.norm());
    }
}

TEST(GridCircuit, FaithfulPOneMatchesCompactSemantics) {
    DenseMatrix A(1, 1);
    A << 0.5;
    GridCircuit f = grid_constraint_matrix(1, A, GridMode::Faithful);
    EXPECT_EQ(f.layout.N, 100);
    Vector v = propagate_circuit(f, Vector::Ones(1));
    EXPECT_NEAR(v(f.Y_ids()[0]), 0.5, 1e-15);
    EXPECT_LE((f.M * v).norm(), 1e-12);
}

TEST(GridInstance, PTwoCompactCertificates) {
    RngStream s(6, 1);
    GridOptions o;
    o.mode = GridMode::Compact;
    HardInstance h = grid_instance(2, s, o);
    const auto& c = h.certificate;
    EXPECT_EQ(c["kernel_dim"].get<Index>(), 2);
    EXPECT_LE(c["circuit_error"].get<double>(), 1e-8);
    EXPECT_LE(c["kernel_residual"].get<double>(), 1e-8);
    EXPECT_TRUE(support_within(h.theta_tilde, h.support));
    EXPECT_GT(h.eta, 0.0);
    EXPECT_GT(h.epsilon, 0.0);
    const double n = static_cast<double>(h.n());
    EXPECT_LE(c["kappa"].get<double>(), std::pow(n, 13));
    EXPECT_LE(h.theta0.norm(), 10.0 * std::sqrt(n));
    EXPECT_LT(h.epsilon, h.eta * h.eta * std::pow(h.lambda_min_nz, 3) /
                             (16200.0 * n * n * n * h.theta0.squaredNorm()));
}

TEST(Expander, Certificates) {
    RngStream s(7, 1);
    HardInstance h = expander_instance(256, s);
    const auto& c = h.certificate;
    EXPECT_GE(h.kernel_basis.cols(), 128);
    EXPECT_LE((h.theta0 * h.kernel_basis).norm(), 1e-8 * h.kernel_basis.norm());
    const double logn = std::log(256.0);
    EXPECT_LE(max_row_nnz(h.theta0), 10.0 * logn * logn);
    EXPECT_LE(c["uncertainty_violations"].get<double>(), 5.0);
    EXPECT_TRUE(support_within(h.theta_tilde, h.support));
    EXPECT_THROW(expander_instance(100, s), std::invalid_argument);
}

TEST(MinorModel, SimplicizedGridModels) {
    MinorModel one = simplicized_grid_minor_model(1);
    EXPECT_EQ(check_minor_model(one), "");
    ASSERT_EQ(one.branch_sets.size(), 1u);
    EXPECT_LE(one.branch_sets[0].size(), 4u);
    MinorModel three = simplicized_grid_minor_model(3);
    EXPECT_EQ(check_minor_model(three), "");
    EXPECT_EQ(three.branch_sets.size(), 9u);
    EXPECT_EQ(three.edge_map.size(), static_cast<std::size_t>(three.pattern.edge_count()));
    EXPECT_EQ(three.pattern.edge_count(), 12 + 4);
}

TEST(MinorModel, ValidatorCatchesErrors) {
    MinorModel m = simplicized_grid_minor_model(2);
    MinorModel overlap = m;
    overlap.branch_sets[1].push_back(overlap.branch_sets[0][0]);
    EXPECT_NE(check_minor_model(overlap), "");
    MinorModel unmapped = m;
    unmapped.edge_map.erase(unmapped.edge_map.begin());
    EXPECT_NE(check_minor_model(unmapped), "");
}

TEST(MinorModel, RandomModelsAreValid) {
    RngStream rng(8, 1);
    for (int t = 0; t < 20; ++t) {
        Graph host = oracle::random_connected_graph(30, 10, rng);
        MinorModel m = random_minor_model(host, 6, rng, 15);
        EXPECT_EQ(check_minor_model(m), "");
    }
}

TEST(Unminor, IdentityMinorIsExact) {
    Graph g = graphs::cycle(5);
    MinorModel m;
    m.host = g;
    m.pattern = g;
    for (Index v = 0; v < 5; ++v) m.branch_sets.push_back({v});
    complete_edge_map(m);
    RngStream rng(9, 1);
    SparseMatrix gamma = oracle::random_psd_on(g, rng, 1.0);
    UnminorResult r = unminor(gamma, m, 0.01);
    EXPECT_TRUE(r.Y.empty());
    EXPECT_LE((DenseMatrix(r.theta) - DenseMatrix(gamma)).norm(), 1e-12 * gamma.norm());
}

TEST(Unminor, EdgeOntoPathFour) {
    MinorModel m;
    m.host = graphs::path(4);
    m.pattern = graphs::path(2);
    m.branch_sets = {{0, 1}, {2, 3}};
    complete_edge_map(m);
    SparseMatrix gamma = sparse_from_triplets(2, 2, {{0, 0, 2.0}, {1, 1, 2.0}, {0, 1, 1.0}, {1, 0, 1.0}});
    const double eps = 0.01;
    UnminorResult r = unminor(gamma, m, eps);
    DenseMatrix schur = schur_onto(r.theta, r.X, r.Y);
    EXPECT_LE((schur - DenseMatrix(gamma)).norm(), eps * gamma.norm());
    EXPECT_NEAR(schur(0, 0), 2.0, 1e-9);
    EXPECT_NEAR(schur(1, 1), 2.0, 1e-9);
    EXPECT_TRUE(support_within(r.theta, m.host));
}

TEST(Unminor, SpectralFloorOnGridModel) {
    MinorModel m = simplicized_grid_minor_model(3);
    RngStream rng(9, 2);
    SparseMatrix gamma = oracle::random_psd_on(m.pattern, rng, 4.0);
    const double eps = 0.01, fro = gamma.norm();
    Eigen::SelfAdjointEigenSolver<DenseMatrix> eg{DenseMatrix(gamma)};
    ASSERT_GE(eg.eigenvalues().minCoeff(), 2 * eps * fro);
    UnminorResult r = unminor(gamma, m, eps);
    EXPECT_LE(r.schur_error, eps * fro);
    Eigen::SelfAdjointEigenSolver<DenseMatrix> et{DenseMatrix(r.theta)};
    EXPECT_GE(et.eigenvalues().minCoeff(), eps * fro / (8.0 * static_cast<double>(m.host.n())));
    EXPECT_TRUE(support_within(r.theta, m.host));
}

TEST(Unminor, RejectsBadInput) {
    MinorModel m = simplicized_grid_minor_model(2);
    SparseMatrix wrong = sparse_identity(3);
    EXPECT_THROW(unminor(wrong, m, 0.01), InvalidMinorModel);
    SparseMatrix off = sparse_from_triplets(4, 4, {{0, 0, 1}, {1, 1, 1}, {2, 2, 1}, {3, 3, 1}, {0, 3, 0.1}, {3, 0, 0.1}});
    if (!m.pattern.has_edge(0, 3)) {
        EXPECT_THROW(unminor(off, m, 0.01), InvalidMinorModel);
    }
}

TEST(TvProximity, Basics) {
    RngStream s(10, 1);
    DenseMatrix B = gaussian_draw(s, 6, 6);
    DenseMatrix S1 = B * B.transpose() + DenseMatrix::Identity(6, 6);
    EXPECT_NEAR(tv_proximity_report(S1, S1), 0.0, 1e-12);
    DenseMatrix one(1, 1), scaled(1, 1);
    one << 2.0;
    scaled << 2.0 * 1.1;
    EXPECT_NEAR(tv_proximity_report(one, scaled), 1.5 * 0.1, 1e-12);
    EXPECT_EQ(tv_proximity_report(one, 10 * one), 1.0);
}

TEST(InstanceFiles, RoundTrip) {
    RngStream s(11, 1);
    DenseMatrix A(1, 1);
    A << 2.0;
    GridOptions o;
    o.mode = GridMode::Compact;
    HardInstance h = grid_instance(1, s, o);
    std::filesystem::path dir = std::filesystem::path(PRECONDLASSO_TEST_TMP) / "instance_roundtrip";
    std::filesystem::remove_all(dir);
    write_instance(dir, h);
    for (const char* f : {"theta.mtx", "theta0.mtx", "kernel.txt", "certificate.json"})
        EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
    HardInstance back = read_instance(dir);
    EXPECT_EQ(DenseMatrix(back.theta_tilde), DenseMatrix(h.theta_tilde));
    EXPECT_EQ(back.epsilon, h.epsilon);
    EXPECT_EQ(back.support.edges(), h.support.edges());
    EXPECT_EQ(back.kernel_basis, h.kernel_basis);
}
