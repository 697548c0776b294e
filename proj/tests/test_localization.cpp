#include "holokit/localization.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace holokit;

namespace {

const cplx I(0.0, 1.0);

CPoint pt(std::initializer_list<cplx> v) {
    CPoint z(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (auto c : v) z[i++] = c;
    return z;
}

Exponent ex(std::initializer_list<int> v) { return Exponent(v); }

/// Largest ratio |P4 - series P4| / (|x|^4 + ||w'||^4) over a few random directions, P4 from heights.
double height_mismatch(const NormalFormChart& ch, int directions, std::uint64_t seed) {
    SeededSampler rng(seed, ch.domain.q);
    double worst = 0.0;
    for (int i = 0; i < directions; ++i) {
        double x = rng.normal();
        CPoint wp(ch.domain.q - 1);
        for (Eigen::Index k = 0; k < wp.size(); ++k) wp[k] = cplx(rng.normal(), rng.normal());
        const double n = std::sqrt(x * x + wp.squaredNorm());
        x /= n;
        wp /= n;
        const double norm4 = x * x * x * x + wp.squaredNorm() * wp.squaredNorm();
        worst = std::max(worst, std::abs(p4_from_heights(ch, x, wp) - ch.p4_at(x, wp)) / norm4);
    }
    return worst;
}

double horo_e1(const CPoint& z) {
    CPoint e1 = CPoint::Zero(z.size());
    e1[0] = 1.0;
    return ball::horo_value(CPoint::Zero(z.size()), e1, z);
}

}  // namespace

TEST(Series, ProductsAndTruncation) {
    const auto x = TruncatedSeries::variable(2, 0);
    const auto y = TruncatedSeries::variable(2, 1);
    const auto p = x * x;
    EXPECT_EQ(p.coeff(ex({2, 0})), cplx(1.0));
    const auto q = (x + y) * (x + y) * (x + y) * (x + y) * x;  // degree 5 only
    EXPECT_TRUE(q.terms().empty());
    EXPECT_GT(q.discarded(), 0);
    EXPECT_EQ(((x + y * I) * (x - y * I)).coeff(ex({0, 2})), cplx(1.0));
}

TEST(Series, ComposeAndInvert) {
    const auto x = TruncatedSeries::variable(1, 0);
    const auto f = x + x * x;
    const auto g = compose(f, {x * 2.0});
    EXPECT_EQ(g.coeff(ex({1})), cplx(2.0));
    EXPECT_EQ(g.coeff(ex({2})), cplx(4.0));
    EXPECT_THROW((void)compose(f, {x + TruncatedSeries::constant(1, 1.0)}), Error);

    // (u + u^2 v, v + i u^3) and its inverse compose to the identity through degree 4.
    const auto u = TruncatedSeries::variable(2, 0);
    const auto v = TruncatedSeries::variable(2, 1);
    const std::vector<TruncatedSeries> m{u + u * u * v, v + u * u * u * I};
    const auto inv = invert_map(m);
    for (int i = 0; i < 2; ++i) {
        auto id = compose(m[static_cast<std::size_t>(i)], inv);
        id -= TruncatedSeries::variable(2, i);
        EXPECT_LT(id.max_abs(), 1e-14);
    }
}

TEST(Series, SingularSubstitutionRejected) {
    const auto u = TruncatedSeries::variable(2, 0);
    const auto v = TruncatedSeries::variable(2, 1);
    try {
        (void)change_variables(u * v, {u + v, u + v});
        FAIL() << "expected a throw";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "non-invertible-substitution");
    }
}

TEST(Chart, BallIsExactSiegel) {
    const auto d = make_ball(2);
    const CPoint zeta = pt({cplx(0.6, 0.0), cplx(0.0, 0.8)});
    const auto ch = normal_form_chart(d, zeta);
    EXPECT_TRUE(ch.exact);
    EXPECT_LE(ch.p4.max_abs(), 1e-10);
    EXPECT_LE(ch.normal_form_error, 1e-12);
    EXPECT_LT(ch.to_chart(zeta).norm(), 1e-14);
    // Boundary points land on Im w1 = ||w'||^2; interior points above it.
    SeededSampler rng(5, 2);
    for (int i = 0; i < 50; ++i) {
        const CPoint s = rng.sphere(2);
        const CPoint w = ch.to_chart(s);
        EXPECT_NEAR(w[0].imag(), std::norm(w[1]), 1e-12);
        const CPoint z = 0.9 * s;
        const CPoint wz = ch.to_chart(z);
        EXPECT_GT(wz[0].imag(), std::norm(wz[1]));
        EXPECT_LT((ch.from_chart(wz) - z).norm(), 1e-13);
    }
    // Taylor series agrees with the rational map to fifth order.
    const CPoint u = pt({cplx(1e-2, 2e-3), cplx(-4e-3, 5e-3)});
    const CPoint via_series = [&] {
        CPoint r(2);
        for (int i = 0; i < 2; ++i) r[i] = ch.map[static_cast<std::size_t>(i)].evaluate(u);
        return r;
    }();
    EXPECT_LT((via_series - ch.to_chart(CPoint(zeta + u))).norm(), 1e-9);
}

TEST(Chart, EllipsoidNormalFormAgainstHeights) {
    const auto d = make_ellipsoid({1.0, 2.0});
    for (const CPoint& zeta : {pt({1.0, 0.0}), pt({0.0, 1.0 / std::sqrt(2.0)}),
                               pt({cplx(0.6, 0.0), cplx(0.0, std::sqrt(0.32))})}) {
        const auto ch = normal_form_chart(d, zeta);
        EXPECT_FALSE(ch.exact);
        EXPECT_LE(ch.normal_form_error, 1e-9);
        EXPECT_GT(ch.p4.max_abs(), 0.1);
        EXPECT_GT(ch.C, 0.0);
        EXPECT_LE(ch.linear_condition, 1e3);
        EXPECT_LT(height_mismatch(ch, 6, 3), 1e-4);
        EXPECT_EQ(sandwich_violations(ch, 10000, 99), 0);
        EXPECT_LT(ch.to_chart(ch.zeta).norm(), 1e-14);
        const CPoint w = pt({cplx(0.01, 0.02), cplx(-0.01, 0.005)});
        EXPECT_LT((ch.to_chart(ch.from_chart(w)) - w).norm(), 1e-12);
    }
}

TEST(Chart, ThreeDimensionalEllipsoid) {
    const auto d = make_ellipsoid({1.0, 2.0, 5.0});
    const CPoint zeta = project_to_boundary(d, pt({0.5, cplx(0.2, 0.3), cplx(0.0, 0.25)}));
    const auto ch = normal_form_chart(d, zeta);
    EXPECT_LE(ch.normal_form_error, 1e-9);
    EXPECT_GE(ch.convexity, ChartOptions{}.convexity);
    EXPECT_GT(ch.C, 0.0);
    EXPECT_GE(ch.D, 2.0 * ch.C);
    EXPECT_LT(height_mismatch(ch, 4, 8), 1e-4);
    EXPECT_EQ(sandwich_violations(ch, 10000, 7), 0);
}

TEST(Chart, EggPoints) {
    const auto d = make_egg();
    try {
        (void)normal_form_chart(d, pt({1.0, 0.0}));
        FAIL() << "expected a throw";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "not-strongly-convex");
        EXPECT_EQ(e.kind(), ErrorKind::precondition);
    }
    const auto ch = normal_form_chart(d, pt({0.0, 1.0}));
    EXPECT_LE(ch.normal_form_error, 1e-9);
    EXPECT_LT(height_mismatch(ch, 6, 4), 1e-4);
}

TEST(Localized, PushMaps) {
    EXPECT_LT(push_T(1.0, pt({0.0, 0.0})).norm(), 1e-15);
    EXPECT_LT((push_T(1.0, pt({I, 0.0})) - pt({0.5 * I, 0.0})).norm(), 1e-15);
    const CPoint w = pt({cplx(0.3, 0.7), cplx(-0.2, 0.1)});
    EXPECT_LT((push_T_inverse(2.0, push_T(2.0, w)) - w).norm(), 1e-15);
    EXPECT_LT((cayley_at_e1_inverse(cayley_at_e1(pt({0.3, 0.4}))) - pt({0.3, 0.4})).norm(), 1e-15);
    EXPECT_LT(cayley_at_e1(pt({1.0, 0.0})).norm(), 1e-15);
}

TEST(Localized, RadiusWindow) {
    const auto ch = normal_form_chart(make_ellipsoid({1.0, 2.0}), pt({1.0, 0.0}));
    ASSERT_GT(ch.D, 0.0);
    for (double R : {0.0, -1.0, 1.0 / ch.D, 2.0 / ch.D}) {
        try {
            (void)localized_chart(ch, R);
            FAIL() << "expected a throw at R = " << R;
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), "invalid-radius");
        }
    }
    const auto ball = normal_form_chart(make_ball(2), pt({1.0, 0.0}));
    EXPECT_NO_THROW((void)localized_chart(ball, 50.0));
}

TEST(Localized, PushedSeriesHasHorosphereForm) {
    for (const auto& d : {make_ball(2), make_ellipsoid({1.0, 2.0})}) {
        const auto ch = normal_form_chart(d, pt({1.0, 0.0}));
        const auto lc = localized_chart(ch, 0.5);
        EXPECT_LE(lc.series_error, 1e-9);
        EXPECT_LE(lc.im_dependence, 1e-9);
        EXPECT_LT((lc.frame.to_ball(ch.zeta) - pt({1.0, 0.0})).norm(), 1e-12);
        const CPoint z = pt({0.5, cplx(0.1, 0.2)});
        EXPECT_LT((lc.frame.from_ball(lc.frame.to_ball(z)) - z).norm(), 1e-10);
    }
}

TEST(Inclusions, BallIsExact) {
    const auto d = make_ball(2);
    const auto id = verify_inclusions(d, identity_frame(), 2.0, 0.5, 20000);
    EXPECT_EQ(id.horosphere_violations, 0);
    EXPECT_EQ(id.neighborhood_violations, 0);
    const auto lc = localized_chart(normal_form_chart(d, pt({1.0, 0.0})), 1.0);
    const auto cert = verify_inclusions(d, lc.frame, 1.0, 0.5, 20000);
    EXPECT_EQ(cert.horosphere_violations, 0);
    EXPECT_EQ(cert.neighborhood_violations, 0);
}

TEST(Inclusions, EllipsoidAdmissibleRadii) {
    const auto d = make_ellipsoid({1.0, 2.0});
    const auto lc = localized_chart(normal_form_chart(d, pt({1.0, 0.0})), 1.0);
    const auto wide = verify_inclusions(d, lc.frame, 1.0, 0.5, 100000);
    ASSERT_GT(wide.horosphere_violations, 0);
    ASSERT_FALSE(wide.witnesses.empty());
    for (const CPoint& z : wide.witnesses) {
        const bool in_horosphere = horo_e1(z) < 1.0;
        const bool in_neighborhood = (z - pt({1.0, 0.0})).norm() < 0.5 && z.norm() >= 1.0;
        EXPECT_TRUE(in_horosphere || in_neighborhood);
    }
    ASSERT_GT(wide.R_admissible, 0.0);
    ASSERT_LT(wide.R_admissible, 1.0);
    // Fresh samples at the bisected radii.
    const auto cert = verify_inclusions(d, lc.frame, wide.R_admissible, wide.rho_admissible, 100000, 101);
    EXPECT_EQ(cert.horosphere_violations, 0);
    EXPECT_EQ(cert.neighborhood_violations, 0);
    EXPECT_EQ(cert.horosphere_samples, 100000);
}

TEST(DistanceComparison, BallIdentityFrame) {
    const auto dc = distance_comparison(make_ball(2), identity_frame(), 0.05, 1.0, 200);
    EXPECT_EQ(dc.violations, 0);
    EXPECT_NEAR(dc.R_eps, 1.0, 1e-12);
    EXPECT_NEAR(dc.min_margin, 0.05, 1e-9);
}

TEST(DistanceComparison, EllipsoidFindsRadius) {
    const auto d = make_ellipsoid({1.0, 2.0});
    const auto lc = localized_chart(normal_form_chart(d, pt({1.0, 0.0})), 1.0);
    const auto dc = distance_comparison(d, lc.frame, 0.05, 1.0, 200);
    EXPECT_GT(dc.R_eps, 0.0);
    EXPECT_EQ(dc.violations, 0);
    EXPECT_GE(dc.min_margin, 0.0);
    EXPECT_EQ(static_cast<int>(dc.margins.size()), dc.pairs);
}

TEST(DistanceComparison, CoarseSandwichIsReported) {
    const auto d = make_egg();
    const auto lc = localized_chart(normal_form_chart(d, pt({0.0, 1.0})), 1.0);
    try {
        (void)distance_comparison(d, lc.frame, 1e-3, 1.0, 50);
        FAIL() << "expected a throw";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "insufficient-precision");
        EXPECT_EQ(e.kind(), ErrorKind::non_convergence);
    }
}
