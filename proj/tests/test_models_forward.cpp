#include "holokit/models_forward.hpp"

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

/// Ball automorphism of B^k conjugate to the Siegel map g.
ball::BallAutomorphism from_siegel(const HoloMap& g, const HoloMap& g_inv, int k) {
    return automorphism_from_maps(
        [&](const CPoint& z) { return ball::cayley_inverse(g(ball::cayley(z))); },
        [&](const CPoint& z) { return ball::cayley_inverse(g_inv(ball::cayley(z))); }, k);
}

ForwardConfig quick() {
    ForwardConfig c;
    c.samples_per_radius = 40;
    return c;
}

}  // namespace

TEST(NormalForm, HyperbolicDilationWithRotation) {
    const double t = 0.3;
    const auto g = siegel_affine({4.0, 2.0 * std::exp(I * t)});
    const auto gi = siegel_affine({0.25, 0.5 * std::exp(-I * t)});
    const auto tau = from_siegel(g, gi, 2);
    const auto nf = normal_form(tau);
    EXPECT_EQ(nf.kind, NormalFormKind::hyperbolic_dilation);
    EXPECT_NEAR(nf.lambda, 0.25, 1e-10);
    ASSERT_EQ(nf.angles.size(), 1u);
    EXPECT_NEAR(nf.angles[0], t, 1e-9);
    EXPECT_LT(nf.conjugation_error, 1e-9);
    EXPECT_LT((nf.attracting - pt({1, 0})).norm(), 1e-9);

    const auto back = normal_form(tau, 1e-3, true);
    EXPECT_NEAR(back.lambda, 4.0, 1e-9);
    EXPECT_LT(back.conjugation_error, 1e-9);
}

TEST(NormalForm, ParabolicKinds) {
    const auto tr = from_siegel(siegel_affine({1.0, std::exp(0.5 * I)}, 1.0),
                                siegel_affine({1.0, std::exp(-0.5 * I)}, -1.0), 2);
    const auto a = normal_form(tr);
    EXPECT_EQ(a.kind, NormalFormKind::parabolic_translation);
    EXPECT_EQ(a.sign, 1);
    ASSERT_EQ(a.angles.size(), 1u);
    EXPECT_NEAR(a.angles[0], 0.5, 1e-6);

    const auto neg = from_siegel(siegel_affine({1.0}, -2.0), siegel_affine({1.0}, 2.0), 1);
    EXPECT_EQ(normal_form(neg).sign, -1);

    const auto shear = siegel_parabolic_shear(2);
    // Inverse of (w1 - 2 w2 + i, w2 - i) is (w1 + 2 w2 + i, w2 + i).
    auto inv = make_holomap("shear-inverse", make_siegel(2), make_siegel(2), [](const CPoint& w) {
        return pt({w[0] + 2.0 * w[1] + I, w[1] + I});
    });
    const auto h = normal_form(from_siegel(shear, inv, 2));
    EXPECT_EQ(h.kind, NormalFormKind::parabolic_heisenberg);
    EXPECT_LT(h.conjugation_error, 1e-6);

    const auto ell = normal_form({pt({0.0, 0.0}), CMatrix::Identity(2, 2) * std::exp(I * 0.4)});
    EXPECT_EQ(ell.kind, NormalFormKind::elliptic);
}

TEST(NormalForm, ApplyMatchesDisplayedMaps) {
    NormalForm nf;
    nf.kind = NormalFormKind::parabolic_heisenberg;
    const CPoint w = pt({cplx(0.5, 2.0), cplx(0.1, 0.2)});
    const CPoint out = apply_normal_form(nf, w);
    EXPECT_NEAR(std::abs(out[0] - (w[0] - 2.0 * w[1] + I)), 0.0, 1e-15);
    EXPECT_GT(ball::siegel_rho(out), 0.0);
    nf.kind = NormalFormKind::elliptic;
    EXPECT_THROW((void)apply_normal_form(nf, w), Error);
}

TEST(AutomorphismFit, RecoversKnownAutomorphism) {
    SeededSampler rng(131, 2);
    const ball::BallAutomorphism tau{rng.ball(2, 0.7), rng.unitary(2)};
    std::vector<CPoint> src, dst;
    for (int i = 0; i < 50; ++i) {
        src.push_back(rng.ball(2, 0.9));
        dst.push_back(tau(src.back()));
    }
    const auto fit = fit_ball_automorphism(src, dst, {});
    EXPECT_LT(fit.residual, 1e-8);
    EXPECT_LT((fit.tau.a - tau.a).norm(), 1e-8);
}

TEST(ModelDimension, GapRule) {
    EXPECT_EQ(model_dimension(Eigen::Vector2d(1.0, 1e-9), 1e-5, 10.0), 1);
    EXPECT_EQ(model_dimension(Eigen::Vector2d(1.0, 0.5), 1e-5, 10.0), 2);
    EXPECT_THROW((void)model_dimension(Eigen::Vector3d(1.0, 2e-5, 5e-6), 1e-5, 10.0), Error);
}

TEST(RescaledStage, CompatibilityAndBasePoint) {
    const auto f = siegel_affine({4.0, 0.0});
    const CPoint base = pt({2.0 * I, 0});
    const CPoint y = pt({cplx(0.3, 1.5), cplx(0.2, 0.1)});
    const int m = 6;
    CPoint fn = base;
    for (int n = 0; n <= m; ++n) {
        const auto st = rescaled_stage(f, base, m, n);
        EXPECT_LT(st(fn).norm(), 1e-10);
        fn = f(fn);
    }
    const auto full = rescaled_stage(f, base, m, 0);
    const auto top = rescaled_stage(f, base, m, m);
    CPoint yy = y;
    for (int j = 0; j < m; ++j) yy = f(yy);
    EXPECT_LT((full(y) - top(yy)).norm(), 1e-12);

    const auto id = identity_map(make_ball(2));
    const CPoint b2 = pt({0.2, -0.1});
    EXPECT_LT((rescaled_stage(id, b2, 3, 0)(b2 * 0.5) - rescaled_stage(id, b2, 1, 0)(b2 * 0.5)).norm(), 1e-14);
}

TEST(RescaledStage, SiegelStagesStabilize) {
    const auto f = siegel_affine({4.0, 0.0});
    const CPoint base = pt({2.0 * I, 0});
    const CPoint y = pt({cplx(-0.4, 3.0), cplx(0.5, 0.2)});
    const CPoint a = rescaled_stage(f, base, 40, 0)(y);
    const CPoint b = rescaled_stage(f, base, 41, 0)(y);
    EXPECT_LT((a - b).norm(), 1e-6);
}

TEST(RescaledStage, AutomorphismStagesAreAutomorphisms) {
    const auto f = ball_translation(pt({0.3, 0.2}));
    const auto st = rescaled_stage(f, pt({0.1, 0.0}), 4, 0);
    SeededSampler rng(137, 2);
    for (int i = 0; i < 20; ++i) {
        const CPoint z = rng.ball(2, 0.8), w = rng.ball(2, 0.8);
        EXPECT_NEAR(ball::kobayashi_ball(st(z), st(w)), ball::kobayashi_ball(z, w), 1e-8);
    }
}

TEST(ForwardModel, SiegelRankOneDilation) {
    const auto f = siegel_affine({4.0, 0.0});
    const CPoint base = pt({2.0 * I, 0});
    const auto est = extract_forward_model(f, base, quick());
    EXPECT_EQ(est.k, 1);
    EXPECT_EQ(est.type, "hyperbolic");
    EXPECT_NEAR(est.dilation, 0.25, 1e-3);
    EXPECT_LE(est.residual, 1e-6);
    EXPECT_LE(est.retract_defect, 1e-6);
    EXPECT_LE(est.metric_agreement, 1e-3);
    EXPECT_GE(est.intertwiner.size(), 100u);
    // The explicit semi-conjugacy is the first coordinate: model distances equal k_{H^1}(y1, y1').
    for (std::size_t i = 1; i + 1 < est.intertwiner.size(); i += 7) {
        const auto& a = est.intertwiner[i];
        const auto& b = est.intertwiner[i + 1];
        const double want = ball::kobayashi_siegel(pt({a.x[0]}), pt({b.x[0]}));
        EXPECT_NEAR(ball::kobayashi_ball(a.h, b.h), want, 1e-7);
    }
    for (std::size_t m = 1; m < est.pullback_trend.size(); ++m) {
        EXPECT_LE(est.pullback_trend[m], est.pullback_trend[m - 1] + 1e-6);
    }
    // Dimension never exceeds the rank of df at the base point.
    const Eigen::JacobiSVD<CMatrix> svd(scaled_jacobian(f, base));
    int rank = 0;
    for (Eigen::Index j = 0; j < svd.singularValues().size(); ++j) {
        if (svd.singularValues()[j] > 1e-5 * svd.singularValues()[0]) ++rank;
    }
    EXPECT_LE(est.k, rank);

    const auto rep = model_step_check(f, base, est, 4);
    EXPECT_NEAR(rep.c_model, std::log(4.0), 1e-3);
    EXPECT_NEAR(rep.c_map, std::log(4.0), 1e-3);
    for (const auto& s : rep.steps) EXPECT_NEAR(s.map_step / s.m, std::log(4.0), 1e-3);
    EXPECT_LE(rep.max_step_gap, 1e-6);
}

TEST(ForwardModel, SiegelParabolicTranslation) {
    const auto f = siegel_affine({1.0, 0.0}, 1.0);
    const auto est = extract_forward_model(f, pt({2.0 * I, 0}), quick());
    EXPECT_EQ(est.k, 1);
    EXPECT_EQ(est.type, "parabolic");
    EXPECT_EQ(est.normal.kind, NormalFormKind::parabolic_translation);
    EXPECT_EQ(est.normal.sign, 1);
    EXPECT_LE(est.residual, 1e-6);
}

TEST(ForwardModel, BallAutomorphismIsItsOwnModel) {
    const double t = 0.7;
    const auto g = cayley_conjugate(siegel_affine({4.0, 2.0 * std::exp(I * t)}));
    const CPoint base = pt({0.1, -0.2});
    const auto est = extract_forward_model(g, base, quick());
    EXPECT_EQ(est.k, 2);
    EXPECT_NEAR(est.dilation, 0.25, 1e-3);
    EXPECT_LE(est.residual, 1e-6);
    ASSERT_EQ(est.angles.size(), 1u);
    EXPECT_NEAR(est.angles[0], t, 1e-4);

    const auto rep = model_step_check(g, base, est, 3);
    EXPECT_LE(rep.max_step_gap, 1e-6);
    // Off the axis the finite minimum of k(x, f^m x)/m approaches c(f) from above.
    EXPECT_GE(rep.c_map, rep.c_model - 1e-9);
}

TEST(ForwardModel, BallHalfDilationStepRate) {
    const auto g = cayley_conjugate(siegel_affine({2.0, std::sqrt(2.0)}));
    const CPoint base = pt({0.3, 0.0});  // on the axis joining the two fixed points
    const auto est = extract_forward_model(g, base, quick());
    const auto rep = model_step_check(g, base, est, 2);
    EXPECT_NEAR(rep.c_model, std::log(2.0), 1e-3);
    EXPECT_NEAR(rep.c_map, std::log(2.0), 1e-3);
}

TEST(ForwardModel, RejectsEllipticMaps) {
    CMatrix A = CMatrix::Identity(2, 2) * 0.5;
    EXPECT_THROW((void)extract_forward_model(linear_map(make_ball(2), A), pt({0.1, 0.1})), Error);
}
