#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace precondlasso;

TEST(Alpha, IdentityIsOneOverK) {
    const Index n = 10;
    DenseMatrix I = DenseMatrix::Identity(n, n);
    for (Index k : {1, 2, 3}) {
        AlphaResult a = alpha_l1(I, sparse_identity(n), k);
        EXPECT_TRUE(a.exact);
        EXPECT_NEAR(a.value, 1.0 / static_cast<double>(k), 1e-10);
        Index nz = 0;
        for (Index i = 0; i < n; ++i)
            if (a.w(i) != 0.0) {
                ++nz;
                EXPECT_NEAR(std::abs(a.w(i)), a.w.cwiseAbs().maxCoeff(), 1e-10);
            }
        EXPECT_EQ(nz, k);
    }
}

TEST(Alpha, SingleCoordinateReduction) {
    RngStream rng(1, 1);
    PrecisionModel m = make_random_model(graphs::grid(3, 4), rng);
    Preconditioner p = preconditioner_from_sigma(*m.sigma, m.support);
    DenseMatrix S(p.S);
    double oracle = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < m.n(); ++i) {
        double r = S.row(i).lpNorm<1>();
        oracle = std::min(oracle, (*m.sigma)(i, i) / (r * r));
    }
    EXPECT_NEAR(alpha_l1(*m.sigma, p.S, 1).value, oracle, 1e-12 * oracle);
}

TEST(Alpha, RandomWalkMatchesGridSearch) {
    PrecisionModel m = make_random_walk(12);
    AlphaResult a = alpha_l1(*m.sigma, sparse_identity(12), 2);
    double grid = oracle::alpha_grid_search_2sparse(*m.sigma, sparse_identity(12));
    EXPECT_NEAR(a.value, grid, 1e-3 * grid);
    EXPECT_LE(a.value, grid + 1e-12);
    double l1 = a.w.lpNorm<1>();
    EXPECT_NEAR(a.w.dot(*m.sigma * a.w) / (l1 * l1), a.value, 1e-8 * a.value);
}

TEST(Alpha, ExactBelowRandomSearchOnSmallInstances) {
    RngStream rng(1, 2);
    for (int t = 0; t < 4; ++t) {
        PrecisionModel m = make_random_model(graphs::random_tree(10, rng), rng);
        Preconditioner p = preconditioner_from_sigma(*m.sigma, m.support);
        AlphaResult a = alpha_l1(*m.sigma, p.S, 2);
        double rs = oracle::alpha_random_search(*m.sigma, p.S, 2, 20000, rng);
        EXPECT_LE(a.value, rs + 1e-6 * rs);
    }
}

TEST(Alpha, MultistartIsFeasibleUpperBound) {
    PrecisionModel m = make_random_walk(40);
    AlphaResult ex = alpha_l1(*m.sigma, sparse_identity(40), 2, AlphaMode::Exact);
    AlphaResult ms = alpha_l1(*m.sigma, sparse_identity(40), 2, AlphaMode::Multistart);
    EXPECT_FALSE(ms.exact);
    EXPECT_GE(ms.value, ex.value - 1e-12);
    EXPECT_NEAR(ms.value, ex.value, 1e-6 * ex.value);
}

TEST(Alpha, GuardThrows) {
    AlphaOptions o;
    o.support_guard = 10;
    EXPECT_THROW(alpha_l1(DenseMatrix::Identity(10, 10), sparse_identity(10), 2, AlphaMode::Exact, o), TooLarge);
}

TEST(Beta, IdentityCoordinateSpan) {
    for (Index m : {1, 2, 3}) {
        DenseMatrix V = spaced_coordinate_span(10, m);
        BetaCertificate b = certify_subspace(DenseMatrix::Identity(10, 10), sparse_identity(10), V);
        EXPECT_GE(b.value, 1.0 / (2.0 * m) - 1e-8);
        EXPECT_NEAR(b.value, 1.0 / (2.0 * m), 1e-10);
    }
}

TEST(Beta, RandomWalkSpacedSpan) {
    const Index n = 256;
    PrecisionModel model = make_random_walk(n);
    StandardizedWalk sw = make_standardized_walk(n);
    for (Index m : {2, 4, 8}) {
        DenseMatrix V = spaced_coordinate_span(n, m);
        BetaCertificate plain = certify_subspace(*model.sigma, sparse_identity(n), V);
        EXPECT_GE(plain.value, n / (16.0 * m * m));
        BetaCertificate st = certify_subspace(*model.sigma, sw.S, V);
        EXPECT_GE(st.value, 1.0 / (32.0 * m * m));
    }
}

TEST(Beta, CertifiedBoundsBelowExactOnSmallSubspace) {
    // The bound used above the enumeration guard must not exceed the enumerated value.
    PrecisionModel model = make_random_walk(64);
    DenseMatrix V = spaced_coordinate_span(64, 4);
    BetaCertificate ex = certify_subspace(*model.sigma, sparse_identity(64), V);
    BetaCertificate lb = certify_subspace(*model.sigma, sparse_identity(64), V, 1.0);
    EXPECT_EQ(ex.method, "exact-sign-enumeration");
    EXPECT_NE(lb.method, "exact-sign-enumeration");
    EXPECT_LE(lb.value, ex.value * (1 + 1e-12));
    RngStream rng(2, 2);
    for (int t = 0; t < 2000; ++t) {
        Vector w = V * gaussian_vector(rng, V.cols());
        double r = w.dot(*model.sigma * w) / std::pow(w.lpNorm<1>(), 2);
        EXPECT_GE(r, ex.value * (1 - 1e-12));
    }
}

TEST(Beta, RejectsThinCandidates) {
    EXPECT_THROW(beta_l1_lower_bound(DenseMatrix::Identity(10, 10), sparse_identity(10), 3, 2,
                                     {spaced_coordinate_span(10, 2)}),
                 std::invalid_argument);
}

TEST(Gamma, IdentityCase) {
    for (Index k : {1, 2, 3})
        for (Index m : {1, 2}) {
            CompatReport r = compat_report(DenseMatrix::Identity(10, 10), sparse_identity(10), m, k, {},
                                           {spaced_coordinate_span(10, m)});
            EXPECT_TRUE(r.alpha_exact);
            EXPECT_GE(r.gamma_lb, static_cast<double>(k) / (2.0 * m) - 1e-6);
        }
}

TEST(Gamma, ScalingHomogeneity) {
    PrecisionModel model = make_random_walk(24);
    const double c2 = 9.0;
    DenseMatrix s2 = c2 * *model.sigma;
    CompatReport a = compat_report(*model.sigma, sparse_identity(24), 2, 2);
    CompatReport b = compat_report(s2, sparse_identity(24), 2, 2);
    EXPECT_NEAR(b.alpha_l1, c2 * a.alpha_l1, 1e-9 * b.alpha_l1);
    EXPECT_NEAR(b.beta_l1_lb, c2 * a.beta_l1_lb, 1e-6 * b.beta_l1_lb);
    EXPECT_NEAR(b.gamma_lb, a.gamma_lb, 1e-6 * a.gamma_lb);
}

TEST(WeakRe, FactoredCovarianceGivesOne) {
    PrecisionModel model = make_random_walk(16);
    Preconditioner p = preconditioner_from_sigma(*model.sigma, model.support);
    WeakReResult r = weak_re_gamma(*model.sigma, p.S, 2, 2);
    EXPECT_NEAR(r.alpha, 1.0, 1e-8);
    EXPECT_NEAR(r.beta, 1.0, 1e-8);
    EXPECT_NEAR(r.gamma, 1.0, 1e-8);
    WeakReResult id = weak_re_gamma(DenseMatrix::Identity(8, 8), sparse_identity(8), 2, 2);
    EXPECT_NEAR(id.gamma, 1.0, 1e-10);
}

TEST(WeakRe, RandomWalkMagnitude) {
    PrecisionModel model = make_random_walk(64);
    WeakReResult r = weak_re_gamma(*model.sigma, sparse_identity(64), 4, 2);
    EXPECT_GE(r.gamma, 10.0);
}

TEST(WeakRe, L1BoundDominatesScaledL2) {
    for (Index n : {16, 64}) {
        PrecisionModel model = make_random_walk(n);
        const Index m = 4, k = 2;
        WeakReResult re = weak_re_gamma(*model.sigma, sparse_identity(n), m, k);
        CompatReport r = compat_report(*model.sigma, sparse_identity(n), m, k);
        EXPECT_GE(r.gamma_lb, re.gamma / static_cast<double>(n) - 1e-9);
    }
}

TEST(Witness, ZeroSignal) {
    RngStream s(3, 0);
    DenseMatrix X = gaussian_draw(s, 4, 20);
    FailureWitness f = failure_witness(X, DenseMatrix::Identity(20, 20), sparse_identity(20), Vector::Zero(20),
                                       spaced_coordinate_span(20, 4));
    EXPECT_EQ(f.v.norm(), 0.0);
    EXPECT_EQ(f.penalty_v, f.penalty_star);
    EXPECT_FALSE(f.beats);
}

TEST(Witness, ConstraintAlwaysHolds) {
    const Index n = 64, m = 6;
    PrecisionModel model = make_random_walk(n);
    DenseMatrix V = spaced_coordinate_span(n, m);
    for (std::uint64_t t = 0; t < 10; ++t) {
        RngStream s(3, t + 1);
        DenseMatrix X = sample_covariates(model, m, s);
        Vector w = gaussian_vector(s, n);
        FailureWitness f = failure_witness(X, *model.sigma, sparse_identity(n), w, V);
        EXPECT_LE((X * f.v - X * w).norm(), 1e-8 * std::max(1.0, (X * w).norm()));
    }
}

TEST(Witness, RankDeficientDesign) {
    DenseMatrix X = DenseMatrix::Zero(3, 10);
    X.row(0).setOnes();
    X.row(1).setOnes();
    X.row(2) = Vector::LinSpaced(10, 0, 1).transpose();
    EXPECT_THROW(failure_witness(X, DenseMatrix::Identity(10, 10), sparse_identity(10), Vector::Ones(10),
                                 spaced_coordinate_span(10, 3)),
                 RankDeficient);
}

TEST(Witness, BeatsAdversarialSignalOnRandomWalk) {
    const Index n = 256, m = 8;
    PrecisionModel model = make_random_walk(n);
    AlphaResult a = alpha_l1(*model.sigma, sparse_identity(n), 2);
    Vector w = a.w / a.w.cwiseAbs().maxCoeff();
    DenseMatrix V = spaced_coordinate_span(n, m);
    Index beats = 0;
    for (std::uint64_t t = 0; t < 50; ++t) {
        RngStream s(4, t);
        DenseMatrix X = sample_covariates(model, m, s);
        if (failure_witness(X, *model.sigma, sparse_identity(n), w, V).beats) ++beats;
    }
    EXPECT_GE(beats, 40);
}

TEST(CompatJson, ReportsLowerBoundOnly) {
    CompatReport r = compat_report(DenseMatrix::Identity(10, 10), sparse_identity(10), 2, 2);
    nlohmann::json j = compat_json(r);
    EXPECT_TRUE(j["alpha_exact"].get<bool>());
    EXPECT_NEAR(j["alpha_l1"].get<double>(), 0.5, 1e-10);
    EXPECT_TRUE(j.contains("note"));
    EXPECT_EQ(j["witness_w"].size(), 2u);
}
