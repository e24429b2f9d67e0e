#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace precondlasso;

namespace {

Preconditioner identity_preconditioner(Index n) {
    return preconditioner_from_sigma(DenseMatrix::Identity(n, n), Graph(n));
}

}  // namespace

TEST(BasisPursuit, IdentityDesign) {
    Vector Y = Vector::LinSpaced(6, -2, 3);
    SolverReport r = basis_pursuit(DenseMatrix::Identity(6, 6), Y, sparse_identity(6));
    EXPECT_LE((r.w_hat - Y).norm(), 1e-9);
}

TEST(BasisPursuit, SingleSampleVertexObjective) {
    DenseMatrix X(1, 2);
    X << 1, 1;
    Vector Y(1);
    Y << 1;
    SolverReport r = basis_pursuit(X, Y, sparse_identity(2));
    EXPECT_NEAR(r.objective, 1.0, 1e-8);
    EXPECT_NEAR(r.w_hat.sum(), 1.0, 1e-9);
    EXPECT_GE(r.w_hat.minCoeff(), -1e-9);
}

TEST(BasisPursuit, DualCertificate) {
    RngStream s(1, 1);
    DenseMatrix X = gaussian_draw(s, 15, 40);
    Vector w = Vector::Zero(40);
    w(3) = 1.5;
    w(17) = -2;
    Vector Y = X * w;
    SolverReport r = basis_pursuit(X, Y, sparse_identity(40));
    ASSERT_TRUE(r.duality_gap && r.dual);
    EXPECT_TRUE(r.converged);
    EXPECT_LE(*r.duality_gap, 1e-8 * (1 + std::abs(r.objective)));
    EXPECT_LE((X.transpose() * *r.dual).cwiseAbs().maxCoeff(), 1 + 1e-8);
    EXPECT_LE((X * r.w_hat - Y).norm(), 1e-8 * Y.norm());
    EXPECT_LE((r.w_hat - w).norm(), 1e-6);
}

TEST(BasisPursuit, RectangularS) {
    // Penalty on first differences: S is n×(n−1), not invertible.
    const Index n = 12;
    std::vector<Triplet> t;
    for (Index j = 0; j + 1 < n; ++j) {
        t.emplace_back(j, j, -1.0);
        t.emplace_back(j + 1, j, 1.0);
    }
    SparseMatrix S = sparse_from_triplets(n, n - 1, t);
    RngStream s(1, 2);
    DenseMatrix X = gaussian_draw(s, 8, n);
    Vector w = Vector::Ones(n);
    w.tail(4).setConstant(3.0);
    SolverReport r = basis_pursuit(X, X * w, S);
    EXPECT_LE((X * r.w_hat - X * w).norm(), 1e-7 * (X * w).norm());
    EXPECT_LE(r.objective, (S.transpose() * w).lpNorm<1>() + 1e-7);
}

TEST(BasisPursuit, PreconditionedRecoversRandomWalkSignal) {
    const Index n = 256;
    PrecisionModel m = make_random_walk(n);
    Preconditioner p = preconditioner_from_sigma(*m.sigma, m.support);
    Vector w = Vector::Zero(n);
    w(n - 2) = -3;
    w(n - 1) = 3;
    for (std::uint64_t t = 0; t < 5; ++t) {
        RngStream s(2, t);
        DenseMatrix X = sample_covariates(m, 30, s);
        SolverReport r = basis_pursuit(X, X * w, p);
        attach_errors(r, w, &*m.sigma);
        EXPECT_TRUE(exact_recovery(*r.l2_error, w)) << *r.l2_error;
    }
}

TEST(ExactRecovery, ThresholdIsRelative) {
    Vector w = Vector::Zero(4);
    EXPECT_TRUE(exact_recovery(1e-6, w));
    EXPECT_FALSE(exact_recovery(1.1e-6, w));
    w(0) = 100;
    EXPECT_TRUE(exact_recovery(9e-5, w));
}

TEST(Lasso, ZeroLambdaSquareSystem) {
    RngStream s(3, 1);
    DenseMatrix X = gaussian_draw(s, 10, 10);
    Vector Y = gaussian_vector(s, 10);
    SolverReport r = lasso_preconditioned(X, Y, identity_preconditioner(10), 0.0);
    EXPECT_LE((r.w_hat - X.lu().solve(Y)).norm(), 1e-8 * X.lu().solve(Y).norm());
}

TEST(Lasso, LargeLambdaKillsEverything) {
    PrecisionModel m = make_random_walk(30);
    Preconditioner p = preconditioner_from_sigma(*m.sigma, m.support);
    RngStream s(3, 2);
    DenseMatrix X = sample_covariates(m, 20, s);
    Vector Y = gaussian_vector(s, 20);
    double lam = 2.0 * (p.precondition_design(X).transpose() * Y).cwiseAbs().maxCoeff();
    SolverReport r = lasso_preconditioned(X, Y, p, lam);
    EXPECT_EQ(r.w_hat.norm(), 0.0);
}

TEST(Lasso, OrthogonalDesignSoftThreshold) {
    RngStream s(3, 3);
    DenseMatrix Q = Eigen::HouseholderQR<DenseMatrix>(gaussian_draw(s, 20, 8)).householderQ() *
                    DenseMatrix::Identity(20, 8);
    Vector Y = 3.0 * gaussian_vector(s, 20);
    const double lam = 2.0;
    SolverReport r = lasso_preconditioned(Q, Y, identity_preconditioner(8), lam);
    Vector z = Q.transpose() * Y;
    for (Index j = 0; j < 8; ++j) {
        double oracle = std::copysign(std::max(0.0, std::abs(z(j)) - lam / 2.0), z(j));
        EXPECT_NEAR(r.w_hat(j), oracle, 1e-9);
    }
}

TEST(Lasso, KktConditions) {
    PrecisionModel m = make_banded_walk(40, 2);
    Preconditioner p = preconditioner_from_sigma(*m.sigma, m.support);
    RngStream s(3, 4);
    DenseMatrix X = sample_covariates(m, 30, s);
    Vector w = Vector::Zero(40);
    w(5) = 1;
    w(30) = -1;
    Vector Y = X * w + 0.1 * gaussian_vector(s, 30);
    const double lam = 3.0;
    SolverReport r = lasso_preconditioned(X, Y, p, lam);
    DenseMatrix Z = p.precondition_design(X);
    Vector u = p.apply_St(r.w_hat);
    Vector g = 2.0 * Z.transpose() * (Z * u - Y);
    Index active = 0;
    for (Index j = 0; j < 40; ++j) {
        EXPECT_LE(std::abs(g(j)), lam + 1e-6);
        if (std::abs(u(j)) > 1e-10) {
            ++active;
            EXPECT_NEAR(g(j), -lam * (u(j) > 0 ? 1 : -1), 1e-6);
        }
    }
    EXPECT_GT(active, 0);
}

TEST(Lasso, DefaultLambdaRule) {
    EXPECT_NEAR(default_lasso_lambda(1.0, 100, 50), 2 * 50 * 4 * std::sqrt(std::log(100.0) / 50), 1e-12);
}

TEST(Projection, Trivial) {
    Graph g = graphs::path(20);
    CentroidTree t = build_centroid_tree(g, min_fill_tree_decomposition(g));
    RngStream s(4, 1);
    Vector v = gaussian_vector(s, 20);
    EXPECT_EQ(project_group_tree_sparse(v, t, t.size()), v);
    EXPECT_EQ(project_group_tree_sparse(v, t, 0), Vector::Zero(20));
}

TEST(Projection, MatchesBruteForceNineGroups) {
    RngStream rng(4, 2);
    for (int trial = 0; trial < 50; ++trial) {
        CentroidTree t = oracle::random_centroid_tree(9, rng);
        Vector v = gaussian_vector(rng, t.n());
        Vector pv = project_group_tree_sparse(v, t, 3);
        EXPECT_NEAR((v - pv).norm(), oracle::projection_distance_brute(v, t, 3), 1e-10);
        EXPECT_LE(group_tree_sparsity(t, pv), 3);
        for (Index i = 0; i < v.size(); ++i)
            if (pv(i) != 0.0) {
                EXPECT_EQ(pv(i), v(i));
            }
    }
}

TEST(Projection, OptimalOverAllSubtreesUpToTwelveGroups) {
    RngStream rng(4, 3);
    for (int trial = 0; trial < 100; ++trial) {
        Index g = 1 + rng.integer(12), k = rng.integer(6);
        CentroidTree t = oracle::random_centroid_tree(g, rng);
        Vector v = gaussian_vector(rng, t.n());
        EXPECT_LE((v - project_group_tree_sparse(v, t, k)).norm(),
                  oracle::projection_distance_brute(v, t, k) + 1e-10);
    }
}

TEST(Iht, NoiselessIdentityRecovers) {
    const Index n = 128, k = 3;
    Preconditioner p = identity_preconditioner(n);
    const Index m = static_cast<Index>(std::ceil(4.0 * k * std::log(static_cast<double>(n))));
    Index wins = 0;
    for (std::uint64_t t = 0; t < 10; ++t) {
        RngStream s(5, t);
        Vector w = Vector::Zero(n);
        for (Index i : random_subset(s, n, k)) w(i) = s.bernoulli(0.5) ? 1.0 : -1.0;
        DenseMatrix X = gaussian_draw(s, m, n);
        SolverReport r = iht_model_based(X, X * w, p, k);
        attach_errors(r, w);
        if (exact_recovery(*r.l2_error, w)) ++wins;
    }
    EXPECT_GE(wins, 8);
}

TEST(Iht, ZeroLabelsStopImmediately) {
    RngStream s(5, 20);
    DenseMatrix X = gaussian_draw(s, 30, 16);
    SolverReport r = iht_model_based(X, Vector::Zero(30), identity_preconditioner(16), 2);
    EXPECT_EQ(r.w_hat.norm(), 0.0);
    EXPECT_EQ(r.iterations, 1);
    EXPECT_TRUE(r.converged);
}

TEST(Iht, ContractsOnWellConditionedNoiselessData) {
    const Index n = 64, m = 2000;
    PrecisionModel model = make_random_walk(n);
    Preconditioner p = preconditioner_from_sigma(*model.sigma, model.support);
    RngStream s(5, 21);
    DenseMatrix X = sample_covariates(model, m, s);
    Vector w = Vector::Zero(n);
    w(10) = 1;
    w(40) = -2;
    Vector u_star = p.apply_St(w);
    double prev = u_star.norm();
    for (Index cap = 1; cap <= 8; ++cap) {
        IhtOptions o;
        o.iter_cap = cap;
        SolverReport r = iht_model_based(X, X * w, p, 2, o);
        double e = (p.apply_St(r.w_hat) - u_star).norm();
        EXPECT_LT(e, prev) << cap;
        prev = e;
    }
}

TEST(Iht, GroupBudgetDefaultsToDepth) {
    Graph g = graphs::path(64);
    CentroidTree t = build_centroid_tree(g, min_fill_tree_decomposition(g));
    EXPECT_EQ(iht_group_budget(t, 3), 3 * t.depth());
    EXPECT_EQ(iht_group_budget(t, 3, 2.0), 6);
}

TEST(BestSubset, FullSupportIsOls) {
    RngStream s(6, 1);
    DenseMatrix X = gaussian_draw(s, 12, 5);
    Vector Y = gaussian_vector(s, 12);
    EXPECT_LE((best_subset(X, Y, 5).w_hat - ols(X, Y).w_hat).norm(), 1e-10);
}

TEST(BestSubset, NoiselessExact) {
    RngStream s(6, 2);
    DenseMatrix X = gaussian_draw(s, 4, 12);
    Vector w = Vector::Zero(12);
    w(2) = 1;
    w(9) = -0.5;
    SolverReport r = best_subset(X, X * w, 2);
    EXPECT_LE((r.w_hat - w).norm(), 1e-10);
}

TEST(BestSubset, AgreesWithDirectEnumeration) {
    RngStream s(6, 3);
    DenseMatrix X = gaussian_draw(s, 20, 12);
    Vector w = Vector::Zero(12);
    w(1) = 2;
    w(7) = 1;
    Vector Y = X * w + 0.1 * gaussian_vector(s, 20);
    SolverReport r = best_subset(X, Y, 2);
    double best = Y.squaredNorm();
    for (Index i = 0; i < 12; ++i)
        for (Index j = i + 1; j < 12; ++j) {
            DenseMatrix xs(20, 2);
            xs << X.col(i), X.col(j);
            Vector c = xs.colPivHouseholderQr().solve(Y);
            best = std::min(best, (Y - xs * c).squaredNorm());
        }
    EXPECT_NEAR(r.objective, best, 1e-9 * best);
}

TEST(BestSubset, GuardThrows) {
    DenseMatrix X = DenseMatrix::Zero(3, 100);
    EXPECT_THROW(best_subset(X, Vector::Zero(3), 5), TooLarge);
}
