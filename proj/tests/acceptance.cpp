// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include "holokit/cli_reports.hpp"
#include "holokit/models_backward.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

using namespace holokit;

namespace {

const cplx I(0.0, 1.0);

CPoint pt(std::initializer_list<cplx> v) {
    CPoint z(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (auto c : v) z[i++] = c;
    return z;
}

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << " [failed: " << what << "]";
        }
    }
};

int failures = 0;

void run(int n, const char* title, const std::function<void(Outcome&)>& body) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        body(o);
    } catch (const Error& e) {
        o.pass = false;
        o.detail << " [error " << e.code() << ": " << e.what() << "]";
    } catch (const std::exception& e) {
        o.pass = false;
        o.detail << " [exception: " << e.what() << "]";
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) ++failures;
    std::printf("%s [%d] %s (%.2f s):%s\n", o.pass ? "PASS" : "FAIL", n, title, secs, o.detail.str().c_str());
    std::fflush(stdout);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// exp(lim_{s -> 0} [k(z, (1 - s) zeta) - k(0, (1 - s) zeta)]) by polynomial extrapolation in s.
double horo_by_limit(const CPoint& zeta, const CPoint& z) {
    const int levels = 6;
    std::vector<double> s(levels), v(levels);
    const CPoint o = CPoint::Zero(zeta.size());
    for (int j = 0; j < levels; ++j) {
        s[j] = 2e-2 * std::pow(0.5, j);
        const CPoint w = (1.0 - s[j]) * zeta;
        v[j] = ball::kobayashi_ball(z, w) - ball::kobayashi_ball(o, w);
    }
    // Neville at s = 0.
    for (int m = 1; m < levels; ++m) {
        for (int j = levels - 1; j >= m; --j) {
            v[j] = (s[j - m] * v[j] - s[j] * v[j - 1]) / (s[j - m] - s[j]);
        }
    }
    return std::exp(v[levels - 1]);
}

cplx disc_inverse(cplx z) { return (z - 0.5) / (1.0 - 0.5 * z); }

BackwardConfig at(const CPoint& zeta) {
    BackwardConfig c;
    c.zeta = zeta;
    return c;
}

HoloMap product_map() { return cayley_conjugate(siegel_affine({4.0, 0.5})); }

}  // namespace

int main() {
    run(1, "metric kernel on B^3", [](Outcome& o) {
        const auto t0 = std::chrono::steady_clock::now();
        SeededSampler rng(2024, 3);
        double sym = 0.0, tri = 0.0, inv = 0.0, cay = 0.0;
        for (int i = 0; i < 10000; ++i) {
            const CPoint x = rng.ball(3, 0.99), y = rng.ball(3, 0.99), z = rng.ball(3, 0.99);
            const double dxy = ball::kobayashi_ball(x, y);
            sym = std::max(sym, std::abs(dxy - ball::kobayashi_ball(y, x)));
            tri = std::min(tri, ball::kobayashi_ball(x, z) + ball::kobayashi_ball(z, y) - dxy);
            const ball::BallAutomorphism phi{rng.ball(3, 0.95), rng.unitary(3)};
            inv = std::max(inv, std::abs(ball::kobayashi_ball(phi(x), phi(y)) - dxy));
            cay = std::max(cay, std::abs(ball::kobayashi_siegel(ball::cayley(x), ball::cayley(y)) - dxy));
        }
        const double secs = seconds_since(t0);
        o.detail << " symmetry " << sym << ", triangle slack " << tri << ", invariance " << inv
                 << ", Cayley " << cay;
        o.require(sym <= 1e-12, "symmetry");
        o.require(tri >= -1e-9, "triangle");
        o.require(inv <= 1e-9, "automorphism invariance");
        o.require(cay <= 1e-9, "Cayley isometry");
        o.require(secs < 5.0, "runtime < 5 s");
    });

    run(2, "horosphere and Koranyi conventions on B^2", [](Outcome& o) {
        const DomainMetric m(make_ball(2));
        SeededSampler rng(77, 2);
        const CPoint pole = CPoint::Zero(2);
        double lib_h = 0.0, lib_k = 0.0, lim_h = 0.0;
        for (int i = 0; i < 1000; ++i) {
            const CPoint zeta = rng.sphere(2);
            const CPoint z = rng.ball(2, 0.95);
            const double eh = std::norm(1.0 - inner(z, zeta)) / (1.0 - z.squaredNorm());
            const double ek = std::abs(1.0 - inner(z, zeta)) / (1.0 - z.norm());
            lib_h = std::max(lib_h, std::abs(m.horo(pole, zeta, z) - eh) / std::max(1.0, eh));
            lib_k = std::max(lib_k, std::abs(m.koranyi(pole, zeta, z) - ek) / std::max(1.0, ek));
            if (i < 200) lim_h = std::max(lim_h, std::abs(horo_by_limit(zeta, z) - eh) / std::max(1.0, eh));
        }
        o.detail << " horosphere " << lib_h << ", Koranyi " << lib_k << ", limit oracle " << lim_h;
        o.require(lib_h <= 1e-9, "horosphere value");
        o.require(lib_k <= 1e-9, "Koranyi value");
        o.require(lim_h <= 1e-6, "limit definition");
    });

    run(3, "Julia inequality on five maps", [](Outcome& o) {
        struct Case {
            std::string name;
            HoloMap f;
            CPoint zeta;
            double lambda;
        };
        const auto quad = polynomial_map(make_ball(1), {{{0.5, {1}}, {0.5, {2}}}}, "(z+z^2)/2");
        std::vector<Case> cases{
            {"disc automorphism", ball_translation(pt({0.5})), pt({1.0}), 1.0 / 3.0},
            {"Siegel dilation", cayley_conjugate(siegel_affine({4.0, 2.0})), pt({1, 0}), 0.25},
            {"Siegel translation", cayley_conjugate(siegel_affine({1.0, 1.0}, 1.0)), pt({1, 0}), 1.0},
            {"(z+z^2)/2", quad, pt({1.0}), dilation(quad, pt({1.0}), pt({0.0})).value},
            {"product map", product_map(), pt({1, 0}), 0.25},
        };
        int total = 0, bad = 0;
        for (const auto& c : cases) {
            const CPoint pole = CPoint::Zero(c.zeta.size());
            const auto r = julia_check(c.f, c.zeta, pole, c.lambda, {0.5, 1.0, 2.0}, 334, 31);
            total += r.samples;
            bad += r.violations;
            o.require(r.violations == 0, c.name);
            o.require(r.samples >= 900, c.name + " sample count");
        }
        o.detail << " " << total << " samples, " << bad << " violations";
    });

    run(4, "dilation equals exp(-divergence rate)", [](Outcome& o) {
        ClassifyBudget b;
        b.m_max = 200;
        const std::vector<std::pair<HoloMap, CPoint>> cases{{ball_translation(pt({0.5})), pt({0.0})},
                                                            {siegel_affine({4.0, 2.0}), pt({I, 0})}};
        for (const auto& [f, x] : cases) {
            const auto t0 = std::chrono::steady_clock::now();
            const auto c = classify(f, x, b);
            const double secs = seconds_since(t0);
            o.detail << " " << f.name << ": gap " << c.rate_dilation_gap << " in " << secs << " s;";
            o.require(c.rate_dilation_gap <= 1e-3, f.name + " gap");
            o.require(secs < 2.0, f.name + " runtime");
        }
    });

    run(5, "forward models on H^2", [](Outcome& o) {
        ForwardConfig cfg;
        cfg.samples_per_radius = 40;
        auto t0 = std::chrono::steady_clock::now();
        const auto h = extract_forward_model(siegel_affine({4.0, 0.0}), pt({2.0 * I, 0}), cfg);
        double secs = seconds_since(t0);
        o.detail << " dilation: k " << h.k << ", lambda " << h.dilation << ", residual " << h.residual << ", "
                 << h.intertwiner.size() << " samples, " << secs << " s;";
        o.require(h.k == 1, "k = 1");
        o.require(std::abs(h.dilation - 0.25) <= 1e-3, "dilation 0.25");
        o.require(h.residual <= 1e-6, "residual");
        o.require(h.intertwiner.size() >= 100, "100 samples");
        o.require(secs < 30.0, "runtime");

        t0 = std::chrono::steady_clock::now();
        const auto p = extract_forward_model(siegel_affine({1.0, 0.0}, 1.0), pt({2.0 * I, 0}), cfg);
        secs = seconds_since(t0);
        o.detail << " translation: k " << p.k << ", form " << to_string(p.normal.kind) << ", " << secs << " s";
        o.require(p.k == 1, "parabolic k = 1");
        o.require(p.normal.kind == NormalFormKind::parabolic_translation, "translation form");
        o.require(secs < 30.0, "parabolic runtime");
    });

    run(6, "backward orbits", [](Outcome& o) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto r = backward_orbit(ball_translation(pt({0.5})), at(pt({-1.0})));
        const auto& p = r.orbit.points;
        double pointwise = 0.0, step = 0.0;
        cplx z = p.front()[0];
        for (std::size_t j = 0; j < p.size(); ++j) {
            pointwise = std::max(pointwise, std::abs(p[j][0] - z));
            z = disc_inverse(z);
        }
        for (double s : r.orbit.steps) step = std::max(step, std::abs(s - std::log(3.0)));
        const auto q = backward_orbit(product_map(), at(pt({-1, 0})));
        const double qstep = std::abs(q.orbit.steps.back() - std::log(4.0));
        const double secs = seconds_since(t0);
        o.detail << " " << p.size() << " points, pointwise " << pointwise << ", step gap " << step
                 << ", product step gap " << qstep;
        o.require(p.size() >= 10, "orbit length");
        o.require(pointwise <= 1e-6, "closed-form orbit");
        o.require(step <= 1e-3, "steps -> log 3");
        o.require(qstep <= 1e-2, "product steps -> log 4");
        o.require(secs < 60.0, "runtime");
    });

    run(7, "pre-models", [](Outcome& o) {
        const std::vector<std::pair<HoloMap, CPoint>> cases{
            {ball_translation(pt({0.5})), pt({-1.0})},
            {product_map(), pt({-1, 0})},
            {siegel_affine({4.0, 2.0 * std::exp(0.4 * I)}), pt({-1, 0})}};
        for (const auto& [f, zeta] : cases) {
            const auto r = backward_orbit(f, at(zeta));
            const auto pm = extract_pre_model(f, r.orbit);
            const double cgap = std::abs(pm.c_tau - pm.c_orbit_inf);
            o.detail << " " << f.name << ": residual " << pm.residual << ", c gap " << cgap << ", Koranyi max "
                     << pm.ray_koranyi_max << ";";
            o.require(pm.residual <= 1e-6, f.name + " residual");
            o.require(cgap <= 1e-3 && pm.c_consistent, f.name + " c(tau)");
            o.require(!pm.ray_koranyi.empty() && pm.ray_koranyi_max < 10.0, f.name + " Koranyi region");
        }
    });

    run(8, "uniqueness of backward orbits", [](Outcome& o) {
        const auto f = ball_translation(pt({0.5}));
        const auto a = backward_orbit(f, at(pt({-1.0})));
        auto c = at(pt({-1.0}));
        c.phase = 0.2;
        const auto b = backward_orbit(f, c);
        const auto u = uniqueness_check(make_ball(1), a.orbit, b.orbit);
        o.detail << " " << u.common << " common indices, tail " << u.tail_min << " .. " << u.tail_max;
        o.require(u.common >= 5, "common range");
        o.require(u.tail_max <= u.tail_min + 1e-2, "bounded distances");
    });

    run(9, "Gromov suite on B^2", [](Outcome& o) {
        Json j;
        j["domain"] = {{"kind", "ball"}, {"q", 2}};
        j["run"] = {{"verb", "gromov"}, {"seed", 11}, {"triangles", 1000}, {"points", 10000}};
        const Report r = run_experiment(parse_config(j));
        o.require(r.exit_code == 0, "exit code " + std::to_string(r.exit_code));
        o.detail << " delta_emp " << r.body["result"]["delta_emp"].get<double>() << ";";
        for (const auto& v : r.body["violations"]) {
            o.detail << " " << v["check"].get<std::string>() << ": " << v["count"].get<int>() << ";";
            o.require(v["count"].get<int>() == 0, v["check"].get<std::string>());
        }
        o.require(r.body["result"]["projection_checks"].get<int>() == 1000, "1000 triangles");
        o.require(r.body["result"]["inclusion"]["samples"].get<int>() == 10000, "10^4 points");
    });

    run(10, "localization at a boundary point", [](Outcome& o) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto bc = normal_form_chart(make_ball(2), pt({0.6, 0.8 * I}));
        double p4 = 0.0;
        for (const auto& [e, c] : bc.p4.terms()) p4 = std::max(p4, std::abs(c));
        o.detail << " ball P4 " << p4 << ";";
        o.require(p4 <= 1e-10, "ball P4");

        const auto d = make_ellipsoid({1.0, 2.0});
        const auto chart = normal_form_chart(d, pt({1.0, 0.0}));
        const int sv = sandwich_violations(chart, 10000, 909);
        o.detail << " sandwich violations " << sv << ";";
        o.require(sv == 0, "quartic comparison");

        const auto lc = localized_chart(chart, 1.0);
        const auto wide = verify_inclusions(d, lc.frame, 1.0, 0.5, 100000);
        const auto cert = verify_inclusions(d, lc.frame, wide.R_admissible, wide.rho_admissible, 100000, 303);
        o.detail << " R " << cert.R << ", rho " << cert.rho << ", violations "
                 << cert.horosphere_violations + cert.neighborhood_violations << ";";
        o.require(cert.R > 0.0 && cert.rho > 0.0, "admissible radii");
        o.require(cert.horosphere_samples == 100000, "10^5 samples");
        o.require(cert.horosphere_violations == 0 && cert.neighborhood_violations == 0, "inclusions");

        const auto dc = distance_comparison(d, lc.frame, 0.05, 1.0, 1000);
        o.detail << " R_eps " << dc.R_eps;
        o.require(dc.R_eps > 0.0 && dc.violations == 0, "R_eps for eps = 0.05");
        o.require(seconds_since(t0) < 120.0, "runtime < 2 min");
    });

    run(11, "squeezing estimates", [](Outcome& o) {
        SqueezeBudget budget;
        budget.iterations = 60;
        SeededSampler rng(515, 2);
        double ball_err = 0.0;
        for (int i = 0; i < 5; ++i) {
            ball_err = std::max(ball_err, std::abs(squeeze_lower(make_ball(2), rng.ball(2, 0.95), budget).inner_radius - 1.0));
        }
        o.detail << " ball error " << ball_err << ";";
        o.require(ball_err <= 1e-6, "ball = 1");

        int below = 0;
        for (const auto& d : {make_ellipsoid({1.0, 2.0}), make_egg()}) {
            const DomainMetric m(d);
            for (int i = 0; i < 3; ++i) {
                const auto c = squeeze_lower(d, m.sample(rng, 0.7), budget);
                if (c.inner_radius < c.baseline) ++below;
            }
        }
        o.detail << " below baseline " << below << ";";
        o.require(below == 0, "baseline");

        const auto trend = squeeze_trend(make_egg(), pt({0, 1}), pt({0, -1}), 5, 0.5, budget);
        o.detail << " egg trend";
        for (const auto& p : trend.points) o.detail << " " << p.squeeze;
        o.require(!trend.weakly_convex_center, "strongly convex target");
        o.require(trend.non_decreasing, "non-decreasing");
        for (const auto& p : trend.points) o.require(p.squeeze >= p.baseline, "trend baseline");
    });

    run(12, "egg negative control", [](Outcome& o) {
        ForwardConfig cfg;
        cfg.m_max = 12;
        cfg.samples_per_radius = 8;
        cfg.window = 3;
        cfg.fit_starts = 2;
        try {
            const auto est = extract_forward_model(egg_automorphism(0.5), pt({0, 0}), cfg);
            const bool clean = !est.experimental && est.tolerance <= 1e-6 && est.residual <= est.tolerance;
            o.detail << " " << (est.experimental ? "experimental" : "model") << ", k " << est.k << ", tolerance "
                     << est.tolerance << ", residual " << est.residual;
            o.require(est.experimental || est.tolerance > 1e-6, "flagged");
            o.require(!clean, "not a clean ball model");
        } catch (const Error& e) {
            o.detail << " refused: " << e.code();
            o.require(e.code() == "ambiguous-dimension" || e.code() == "insufficient-squeezing", "refusal code");
        }
    });

    std::printf("%d of 12 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
