#include "holokit/numerics.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace holokit;

TEST(DetectLimit, ConstantSequenceConverges) {
    const auto r = detect_limit({1.0, 1.0, 1.0}, 3, 1e-9);
    EXPECT_TRUE(r.converged);
    ASSERT_TRUE(r.limit.has_value());
    EXPECT_DOUBLE_EQ(*r.limit, 1.0);
}

TEST(DetectLimit, HalvingSequenceDoesNotConverge) {
    const auto r = detect_limit({1.0, 0.5, 0.25, 0.125}, 3, 1e-9);
    EXPECT_FALSE(r.converged);
    EXPECT_FALSE(r.limit.has_value());
}

TEST(DetectLimit, GeometricTailToLog3) {
    std::vector<double> v;
    for (int n = 1; n <= 40; ++n) v.push_back(std::log(3.0) + std::ldexp(1.0, -n));
    const auto r = detect_limit(v, 5, 1e-6);
    ASSERT_TRUE(r.converged);
    double oracle = 0.0;
    for (int n = 36; n <= 40; ++n) oracle += std::log(3.0) + std::ldexp(1.0, -n);
    oracle /= 5.0;
    EXPECT_NEAR(*r.limit, oracle, 1e-15);
    EXPECT_NEAR(*r.limit, 1.098612, 1e-6);
}

TEST(DetectLimit, TooFewValuesIsAnError) {
    try {
        (void)detect_limit({1.0, 2.0}, 3, 1e-6);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "not-enough-data");
    }
}

TEST(DetectLimit, IdempotentUnderAppendingLimit) {
    std::vector<double> v;
    for (int n = 1; n <= 30; ++n) v.push_back(2.0 + std::pow(0.3, n));
    const auto r = detect_limit(v, 6, 1e-8);
    ASSERT_TRUE(r.converged);
    v.push_back(*r.limit);
    const auto r2 = detect_limit(v, 6, 1e-8);
    EXPECT_TRUE(r2.converged);
    EXPECT_NEAR(*r2.limit, *r.limit, 1e-8);
}

TEST(NumericalJacobian, IdentityMap) {
    const CPoint z = (CPoint(2) << cplx(0.1, 0.2), cplx(-0.3, 0.05)).finished();
    const CMatrix J = numerical_jacobian([](const CPoint& x) { return x; }, z);
    EXPECT_LT((J - CMatrix::Identity(2, 2)).norm(), 1e-10);
}

TEST(NumericalJacobian, LinearMapIsRecovered) {
    CMatrix A(2, 2);
    A << cplx(1, 2), cplx(0, -1), cplx(0.5, 0), cplx(-2, 0.25);
    const CPoint z = (CPoint(2) << cplx(0.2, 0.1), cplx(0.0, -0.4)).finished();
    const CMatrix J = numerical_jacobian([&](const CPoint& x) { return CPoint(A * x); }, z);
    EXPECT_LT((J - A).norm(), 1e-9);
}

TEST(NumericalJacobian, QuadraticMapByHand) {
    auto f = [](const CPoint& x) {
        CPoint y(2);
        y << x[0] * x[0], x[0] * x[1];
        return y;
    };
    const CPoint z = (CPoint(2) << 0.3, 0.1).finished();
    CMatrix expected(2, 2);
    expected << 0.6, 0.0, 0.1, 0.3;
    EXPECT_LT((numerical_jacobian(f, z) - expected).norm(), 1e-9);
}

TEST(NumericalJacobian, ChainRuleOnRandomPolynomialMaps) {
    SeededSampler rng(11, 2);
    const double h = 1e-3;
    for (int trial = 0; trial < 20; ++trial) {
        CMatrix A = CMatrix::Zero(2, 2), B = CMatrix::Zero(2, 2);
        for (int i = 0; i < 2; ++i) {
            A.col(i) = rng.gaussian(2) * 0.5;
            B.col(i) = rng.gaussian(2) * 0.5;
        }
        const cplx c = cplx(rng.normal(), rng.normal()) * 0.3;
        auto f = [&](const CPoint& x) {
            CPoint y = A * x;
            y[0] += c * x[0] * x[1];
            return y;
        };
        auto g = [&](const CPoint& x) {
            CPoint y = B * x;
            y[1] += c * x[0] * x[0];
            return y;
        };
        const CPoint z = rng.ball(2, 0.5);
        const CMatrix Jc = numerical_jacobian([&](const CPoint& x) { return g(f(x)); }, z, h);
        const CMatrix Jp = numerical_jacobian(g, f(z), h) * numerical_jacobian(f, z, h);
        EXPECT_LE((Jc - Jp).norm() / Jp.norm(), 10.0 * h * h);
    }
}

TEST(MonotoneLiminf, MonotoneLimitReturnsFinalValue) {
    EXPECT_DOUBLE_EQ(monotone_liminf({3, 2, 1, 1, 1}, LiminfMode::monotone_limit), 1.0);
}

TEST(MonotoneLiminf, TailMinimumOfAlternatingSequence) {
    std::vector<double> v;
    for (int i = 0; i < 20; ++i) v.push_back(i % 2 == 0 ? 1.0 : 0.0);
    EXPECT_DOUBLE_EQ(monotone_liminf(v, LiminfMode::liminf_tail), 0.0);
}

TEST(MonotoneLiminf, SlowSequenceTowardLog3) {
    std::vector<double> v;
    for (int n = 1; n <= 100; ++n) v.push_back(std::log(3.0) * (1.0 + 1.0 / n));
    const double out = monotone_liminf(v, LiminfMode::monotone_limit);
    // The final term carries an error of log(3)/100.
    EXPECT_DOUBLE_EQ(out, std::log(3.0) * 1.01);
    EXPECT_NEAR(out, std::log(3.0), 1.1e-2);
}

TEST(MonotoneLiminf, ViolationCarriesIndex) {
    try {
        (void)monotone_liminf({3, 2, 2.5, 1}, LiminfMode::monotone_limit);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "monotonicity-violation");
        EXPECT_NE(std::string(e.what()).find("index 2"), std::string::npos);
    }
}

TEST(SeededSampler, BitExactReplay) {
    SeededSampler a(42, 3), b(42, 3);
    for (int i = 0; i < 100; ++i) {
        const CPoint x = a.ball(3), y = b.ball(3);
        ASSERT_EQ(x, y);
        ASSERT_LT(x.norm(), 1.0);
    }
    SeededSampler c(43, 3);
    EXPECT_NE(a.uniform(), c.uniform());
}

TEST(SeededSampler, HaarUnitaryIsUnitary) {
    SeededSampler rng(5, 3);
    const CMatrix U = rng.unitary(3);
    EXPECT_LT((U.adjoint() * U - CMatrix::Identity(3, 3)).norm(), 1e-12);
}

TEST(SphereDirections, UnitAndSpread) {
    const auto d = sphere_directions(2, 512);
    ASSERT_EQ(d.size(), 512u);
    CPoint mean = CPoint::Zero(2);
    for (const auto& v : d) {
        EXPECT_NEAR(v.norm(), 1.0, 1e-12);
        mean += v;
    }
    EXPECT_LT((mean / 512.0).norm(), 0.1);
}

TEST(GaugeUnitary, MakesJacobianHermitianPositive) {
    SeededSampler rng(9, 3);
    CMatrix J(3, 3);
    for (int i = 0; i < 3; ++i) J.col(i) = rng.gaussian(3);
    const CMatrix G = gauge_unitary(J);
    const CMatrix H = G * J;
    EXPECT_LT((H - H.adjoint()).norm(), 1e-12);
    Eigen::SelfAdjointEigenSolver<CMatrix> es(0.5 * (H + H.adjoint()));
    EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
}

TEST(GoldenSection, FindsParabolaMinimum) {
    const double t = golden_section_min([](double x) { return (x - 0.3) * (x - 0.3); }, -2, 2);
    EXPECT_NEAR(t, 0.3, 1e-7);
}
