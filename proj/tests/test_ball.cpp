#include "holokit/ball.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace holokit;
using namespace holokit::ball;

namespace {

const cplx I(0.0, 1.0);

CPoint pt(std::initializer_list<cplx> v) {
    CPoint z(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (auto c : v) z[i++] = c;
    return z;
}

// One-variable oracle: disc distance from the pseudo-hyperbolic distance.
double disc_distance(cplx a, cplx b) {
    const double r = std::abs(a - b) / std::abs(1.0 - a * std::conj(b));
    return std::log((1 + r) / (1 - r));
}

}  // namespace

TEST(KobayashiBall, Examples) {
    EXPECT_DOUBLE_EQ(kobayashi_ball(pt({0, 0}), pt({0, 0})), 0.0);
    EXPECT_NEAR(kobayashi_ball(pt({0, 0}), pt({0.5, 0})), std::log(3.0), 1e-15);
    EXPECT_NEAR(kobayashi_ball(pt({0.5, 0}), pt({-0.5, 0})), 2 * std::log(3.0), 1e-14);
    EXPECT_NEAR(kobayashi_ball(pt({0.5, 0}), pt({-0.5, 0})), disc_distance(0.5, -0.5), 1e-14);
}

TEST(KobayashiBall, MatchesDiscOnSlices) {
    SeededSampler rng(3, 1);
    for (int i = 0; i < 200; ++i) {
        const CPoint a = rng.ball(1), b = rng.ball(1);
        EXPECT_NEAR(kobayashi_ball(pt({a[0], 0, 0}), pt({b[0], 0, 0})), disc_distance(a[0], b[0]),
                    1e-11);
    }
}

TEST(KobayashiBall, RejectsBoundaryPoints) {
    EXPECT_THROW((void)kobayashi_ball(pt({1.0, 0}), pt({0, 0})), Error);
}

TEST(KobayashiBall, MetricAxiomsAndInvariance) {
    SeededSampler rng(17, 3);
    for (int i = 0; i < 2000; ++i) {
        const CPoint x = rng.ball(3), y = rng.ball(3), z = rng.ball(3);
        const double dxy = kobayashi_ball(x, y);
        EXPECT_LE(std::abs(dxy - kobayashi_ball(y, x)), 1e-12);
        EXPECT_GE(kobayashi_ball(x, z) + kobayashi_ball(z, y) - dxy, -1e-9);
        BallAutomorphism s{rng.ball(3, 0.9), rng.unitary(3)};
        EXPECT_LE(std::abs(kobayashi_ball(s(x), s(y)) - dxy), 1e-9);
        EXPECT_LE(std::abs(kobayashi_siegel(cayley(x), cayley(y)) - dxy), 1e-9);
    }
}

TEST(Mobius, OriginCases) {
    const auto id = mobius_to_origin(pt({0, 0}));
    const CPoint z = pt({cplx(0.2, 0.1), cplx(-0.3, 0.4)});
    EXPECT_LT((id(z) - z).norm(), 1e-15);

    const CPoint a = pt({0.3, cplx(0, 0.4)});
    const auto s = mobius_to_origin(a);
    EXPECT_LT(s(a).norm(), 1e-15);
    EXPECT_LT((s(pt({0, 0})) - a).norm(), 1e-15);
}

TEST(Mobius, InvolutionOnRandomPoints) {
    SeededSampler rng(23, 3);
    for (int i = 0; i < 500; ++i) {
        const auto s = mobius_to_origin(rng.ball(3, 0.99));
        const CPoint z = rng.ball(3);
        EXPECT_LT((s(s(z)) - z).norm(), 1e-10);
    }
    EXPECT_THROW((void)mobius_to_origin(pt({1.0, 0})), Error);
}

TEST(Cayley, Substitutions) {
    EXPECT_LT((cayley(pt({0, 0})) - pt({I, 0})).norm(), 1e-15);
    EXPECT_LT((cayley(pt({0.5, 0})) - pt({3.0 * I, 0})).norm(), 1e-15);
    EXPECT_THROW((void)cayley(pt({1.0, 0})), Error);
    SeededSampler rng(2, 2);
    for (int i = 0; i < 100; ++i) {
        const CPoint z = rng.ball(2);
        EXPECT_LT((cayley_inverse(cayley(z)) - z).norm(), 1e-12);
        EXPECT_GT(siegel_rho(cayley(z)), 0.0);
        // Im w1 - |w'|^2 = (1 - |z|^2) / |1 - z1|^2
        EXPECT_NEAR(siegel_rho(cayley(z)), (1 - z.squaredNorm()) / std::norm(1.0 - z[0]), 1e-9);
    }
}

TEST(KobayashiSiegel, HalfPlaneClosedForms) {
    for (int n = 1; n <= 200; n += 13) {
        const CPoint a = pt({I, 0});
        const CPoint b = pt({std::pow(4.0, n) * I, 0});
        EXPECT_NEAR(kobayashi_siegel(a, b), n * std::log(4.0), 1e-9 * n);
    }
    const double s1 = std::log((std::sqrt(5.0) + 1) / (std::sqrt(5.0) - 1));
    EXPECT_NEAR(kobayashi_siegel(pt({I, 0}), pt({1.0 + I, 0})), s1, 1e-14);
    EXPECT_NEAR(kobayashi_siegel(pt({I}), pt({3.0 * I})), std::log(3.0), 1e-15);
}

TEST(Horosphere, ClosedFormsAndRadialLimit) {
    const CPoint e1 = pt({1, 0});
    const CPoint zero = pt({0, 0});
    EXPECT_DOUBLE_EQ(horo_value(zero, e1, zero), 1.0);
    EXPECT_NEAR(horo_value(zero, e1, pt({0.5, 0})), 1.0 / 3.0, 1e-15);
    EXPECT_THROW((void)horo_value(zero, pt({0.5, 0}), zero), Error);

    SeededSampler rng(31, 2);
    for (int i = 0; i < 100; ++i) {
        const CPoint zeta = rng.sphere(2);
        const CPoint p = rng.ball(2, 0.8), pp = rng.ball(2, 0.8), z = rng.ball(2, 0.8);
        // Radial limit oracle exp(k(z,w) - k(p,w)) as w -> zeta.
        const CPoint w = (1.0 - 1e-9) * zeta;
        const double radial = std::exp(kobayashi_ball(z, w) - kobayashi_ball(p, w));
        EXPECT_NEAR(horo_value(p, zeta, z) / radial, 1.0, 1e-6);
        EXPECT_NEAR(horo_value(pp, zeta, z), horo_value(p, zeta, z) * horo_value(pp, zeta, p),
                    1e-8 * horo_value(pp, zeta, z));
    }
}

TEST(Horosphere, SiegelMatchesPullback) {
    SeededSampler rng(37, 2);
    const CPoint e1 = pt({1, 0});
    for (int i = 0; i < 100; ++i) {
        const CPoint p = rng.ball(2, 0.8), z = rng.ball(2, 0.8);
        for (const CPoint& c : {e1, CPoint(-e1), CPoint(rng.sphere(2))}) {
            EXPECT_NEAR(horo_value_siegel(cayley(p), c, cayley(z)) / horo_value(p, c, z), 1.0,
                        1e-9);
        }
    }
}

TEST(Horosphere, ShrinkingChain) {
    SeededSampler rng(41, 2);
    const CPoint e1 = pt({1, 0}), zero = pt({0, 0});
    const double R = 0.5, Rt = 3.0 * std::exp(1.0);
    for (int i = 0; i < 2000; ++i) {
        const CPoint z = rng.ball(2);
        if (horo_value(zero, e1, z) < R / Rt) EXPECT_LT(horo_value(zero, e1, z), R);
    }
}

TEST(Koranyi, ExamplesAndEuclideanFormula) {
    const CPoint e1 = pt({1, 0}), zero = pt({0, 0});
    EXPECT_NEAR(koranyi_value(zero, e1, zero), 1.0, 1e-15);
    EXPECT_NEAR(koranyi_value(zero, e1, pt({0.5, 0})), 1.0, 1e-14);
    SeededSampler rng(43, 2);
    for (int i = 0; i < 1000; ++i) {
        const CPoint z = rng.ball(2, 0.999), zeta = rng.sphere(2);
        const double euclid = std::abs(1.0 - inner(z, zeta)) / (1.0 - z.norm());
        EXPECT_NEAR(koranyi_value(zero, zeta, z) / euclid, 1.0, 1e-9);
    }
}

TEST(Geodesic, DiameterCases) {
    const auto g = geodesic(pt({0, 0}), pt({0.5, 0}), GeodesicKind::segment);
    EXPECT_LT(g(0.0).norm(), 1e-15);
    EXPECT_LT((g(std::log(3.0)) - pt({0.5, 0})).norm(), 1e-14);
    const auto r = geodesic(pt({0, 0}), pt({1, 0}), GeodesicKind::ray);
    for (double t : {0.1, 1.0, 5.0}) {
        EXPECT_LT((r(t) - pt({std::tanh(t / 2), 0})).norm(), 1e-14);
    }
    EXPECT_THROW((void)geodesic(pt({0.2, 0}), pt({0.2, 0}), GeodesicKind::segment), Error);
}

TEST(Geodesic, UnitSpeedAndAdditivityAfterTransport) {
    SeededSampler rng(47, 3);
    for (int i = 0; i < 50; ++i) {
        const auto g = geodesic(rng.ball(3, 0.9), rng.ball(3, 0.9), GeodesicKind::segment);
        const BallAutomorphism s = mobius_to_origin(rng.ball(3, 0.7));
        const double L = g.length;
        const double a = 0.1 * L, b = 0.5 * L, c = 0.9 * L;
        EXPECT_NEAR(kobayashi_ball(s(g(a)), s(g(c))), c - a, 1e-9);
        EXPECT_NEAR(kobayashi_ball(g(a), g(c)), kobayashi_ball(g(a), g(b)) + kobayashi_ball(g(b), g(c)),
                    1e-9);
    }
}

TEST(Geodesic, EuclideanLengthShrinksNearBoundary) {
    double prev = std::numeric_limits<double>::infinity();
    for (double delta : {0.2, 0.1, 0.05, 0.02, 0.01, 0.005}) {
        const CPoint z = pt({1.0 - delta / 2, 0});
        const CPoint w = (1.0 - delta / 2) * pt({std::cos(delta / 2), std::sin(delta / 2)});
        const auto g = geodesic(z, w, GeodesicKind::segment);
        double len = 0.0;
        CPoint prev_pt = g(0.0);
        for (int k = 1; k <= 2000; ++k) {
            const CPoint p = g(g.length * k / 2000.0);
            len += (p - prev_pt).norm();
            prev_pt = p;
        }
        EXPECT_LT(len, prev);
        prev = len;
    }
    EXPECT_LT(prev, 0.01);
}

TEST(HorosphereMetric, DominatesBallAndSearch) {
    const CPoint x = pt({0.6, 0.1}), y = pt({0.7, cplx(0, -0.1)});
    EXPECT_NEAR(horosphere_metric(1.0, x, x), 0.0, 1e-12);
    SeededSampler rng(53, 2);
    for (int i = 0; i < 300; ++i) {
        const CPoint a = sample_horosphere(1.0, 2, rng), b = sample_horosphere(1.0, 2, rng);
        EXPECT_GE(horosphere_metric(1.0, a, b) - kobayashi_ball(a, b), -1e-9);
    }
    EXPECT_THROW((void)horosphere_metric(0.1, pt({0, 0}), y), Error);
    const auto res = horosphere_radius_for(1.0, 0.01, 2, 1000, 7);
    EXPECT_GT(res.R_eps, 0.0);
    EXPECT_LE(res.worst_excess, 0.0);
    EXPECT_GE(res.R_eps, res.closed_form * (1 - 1e-6));
}

TEST(Slimness, CollinearIsZeroAndTransportInvariant) {
    const auto flat = slimness_delta(pt({-0.5, 0}), pt({0.1, 0}), pt({0.7, 0}));
    EXPECT_LT(flat.delta, 1e-6);
    const CPoint a = pt({0, 0}), b = pt({0.9, 0}), c = pt({0, 0.9});
    const auto s = slimness_delta(a, b, c);
    EXPECT_GT(s.delta, 0.1);
    const BallAutomorphism m = mobius_to_origin(pt({0.3, cplx(0.1, 0.2)}));
    EXPECT_NEAR(slimness_delta(m(a), m(b), m(c)).delta, s.delta, 1e-8);
    EXPECT_TRUE(slimness_delta(a, a, c).degenerate);
}

TEST(LineProjection, OnLineAndOffLine) {
    const auto g = geodesic(pt({0, 0}), pt({1, 0}), GeodesicKind::ray);
    const double delta = slimness_delta(pt({0, 0}), pt({0.9, 0}), pt({0, 0.9})).delta;
    const auto on = line_projection_check(g, 0.0, g(1.3), delta);
    EXPECT_TRUE(on.holds);
    EXPECT_NEAR(on.slack, 6 * delta, 1e-7);
    EXPECT_TRUE(line_projection_check(g, 0.0, pt({0, 0.5}), delta).holds);
}

TEST(RegionInclusion, PointsOnRayAndSamples) {
    const CPoint zero = pt({0, 0}), e1 = pt({1, 0});
    const auto g = geodesic(zero, e1, GeodesicKind::ray);
    std::vector<CPoint> on;
    for (double t : {0.0, 0.5, 2.0, 6.0}) on.push_back(g(t));
    const auto r0 = region_A_vs_koranyi(zero, e1, 2.0, 0.5, on);
    EXPECT_EQ(r0.in_A, 4);
    EXPECT_EQ(r0.in_K, 4);
    EXPECT_EQ(r0.in_A_wide, 4);

    SeededSampler rng(59, 2);
    std::vector<CPoint> pts;
    for (int i = 0; i < 1000; ++i) pts.push_back(rng.ball(2, 0.9999));
    const auto r = region_A_vs_koranyi(zero, e1, 2.0, 0.6, pts);
    EXPECT_EQ(r.violations(), 0);
    const auto thin = region_A_vs_koranyi(zero, e1, 1.0 + 1e-9, 0.6, pts);
    EXPECT_EQ(thin.in_A, 0);
}
