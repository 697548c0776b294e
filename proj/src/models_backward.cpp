#include "holokit/models_backward.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace holokit {

namespace {

constexpr cplx I(0.0, 1.0);
const double kE = std::exp(1.0);

CPoint domain_pole(const DomainSpec& d) {
    if (d.kind == DomainKind::siegel) {
        CPoint p = CPoint::Zero(d.q);
        p[0] = I;
        return p;
    }
    if (d.kind == DomainKind::ball) return CPoint::Zero(d.q);
    return d.center;
}

double sup_diff(const std::vector<CPoint>& a, const std::vector<CPoint>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s = std::max(s, (a[i] - b[i]).norm());
    return s;
}

/// Richardson-extrapolated central differences; robust for maps evaluated near the boundary.
CMatrix smooth_jacobian(const PointMap& g, const CPoint& z, double h = 1e-3) {
    const CMatrix a = numerical_jacobian(g, z, h);
    const CMatrix b = numerical_jacobian(g, z, h / 2.0);
    return (4.0 * b - a) / 3.0;
}

}  // namespace

BallFrame standard_frame(const DomainSpec& d, const CPoint& zeta) {
    if (zeta.size() != d.q || std::abs(zeta.norm() - 1.0) > 1e-9) {
        throw Error(ErrorKind::precondition, "invalid-boundary-point", "zeta must be a unit vector of C^q");
    }
    const CMatrix R = frame_from(zeta).adjoint();
    switch (d.kind) {
        case DomainKind::ball:
            return {"unitary", [R](const CPoint& z) { return CPoint(R * z); },
                    [R](const CPoint& u) { return CPoint(R.adjoint() * u); }};
        case DomainKind::siegel:
            return {"cayley", [R](const CPoint& w) { return CPoint(R * ball::cayley_inverse(w)); },
                    [R](const CPoint& u) { return ball::cayley(CPoint(R.adjoint() * u)); }};
        default:
            throw Error(ErrorKind::precondition, "chart-required",
                        "convex domains need a localized normal-form chart");
    }
}

// ---------------------------------------------------------------- stopping-time orbit

BackwardOrbitResult backward_orbit(const HoloMap& f, const BackwardConfig& cfg) {
    const auto& d = f.domain;
    const int q = d.q;
    if (cfg.trail_length < 1 || cfg.cauchy_run < 2 || cfg.R0 <= 0.0) {
        throw Error(ErrorKind::schema, "invalid-config", "trail_length >= 1, cauchy_run >= 2, R0 > 0");
    }
    const BallFrame frame = cfg.frame ? *cfg.frame : standard_frame(d, cfg.zeta);
    const CPoint pole = domain_pole(d);

    BackwardOrbitResult res;
    res.zeta = cfg.zeta;
    if (cfg.lambda) {
        res.lambda = *cfg.lambda;
        res.lambda_source = "override";
    } else {
        res.lambda = dilation(f, cfg.zeta, pole, DilationMethod::geodesic_step).geodesic_step_value;
        res.lambda_source = "geodesic-step";
    }
    if (!(res.lambda > 1.0 + 1e-9)) {
        throw Error(ErrorKind::precondition, "not-repelling",
                    "dilation " + std::to_string(res.lambda) + " at zeta is not > 1");
    }
    const double log_lambda = std::log(res.lambda);
    const double t0 = (kE - 1.0) / (kE + 1.0);
    for (std::size_t j = 0; j < cfg.t_seq.size(); ++j) {
        const double t = cfg.t_seq[j];
        if (!(t > t0 && t < 1.0) || (j > 0 && !(t > cfg.t_seq[j - 1]))) {
            throw Error(ErrorKind::schema, "invalid-t-sequence", "t_k must increase inside (t0, 1)");
        }
    }

    auto g = [&](const CPoint& u) { return frame.to_ball(f(frame.from_ball(u))); };
    const CPoint e1 = unit_vector(q, 0);
    const int V = cfg.trail_length;

    for (int n = 0; n <= cfg.n_max; ++n) {
        const double Rn = cfg.R0 * std::ldexp(1.0, -n);
        const double rn = Rn / (res.lambda * kE);
        // z_n on the radius toward e1 with h_{e1,0}(z_n) = r_n / 2.
        const double hz = rn / 2.0;
        const CPoint zn = ((1.0 - hz) / (1.0 + hz)) * e1;
        auto sigma = [&](const CPoint& u) { return CPoint(-ball::mobius(zn, u)); };
        auto phi = [&](double t) { return ball::mobius(zn, CPoint(-t * e1)); };
        auto t_at = [&](int k) -> std::optional<double> {
            if (!cfg.t_seq.empty()) {
                if (k >= static_cast<int>(cfg.t_seq.size())) return std::nullopt;
                return cfg.t_seq[k];
            }
            return std::tanh((1.0 + (cfg.phase + k) * log_lambda) / 2.0);
        };

        std::vector<StoppingTrail> trails;
        std::vector<CPoint> xr, yr;
        std::vector<CPoint> prev;
        int run = 1;
        std::vector<CPoint> accepted;
        std::string why = "seed budget exhausted";
        for (int k = 0; k < cfg.k_max; ++k) {
            const auto t = t_at(k);
            if (!t) {
                why = "t sequence exhausted";
                break;
            }
            const CPoint seed = phi(*t);
            StoppingTrail st;
            st.t = *t;
            st.seed_margin = 1.0 - seed.norm();
            if (st.seed_margin < kSeedMargin) break;
            std::deque<CPoint> tail{seed};
            CPoint x = seed;
            int m = 0;
            bool exited = false;
            for (m = 1; m <= cfg.max_iter; ++m) {
                x = g(x);
                if (escaped(x)) {
                    throw Error(ErrorKind::invariant_violation, "orbit-escape", "iterate left the ball frame");
                }
                tail.push_back(x);
                if (static_cast<int>(tail.size()) > V + 1) tail.pop_front();
                if (ball::horo_value(zn, e1, x) > 1.0 + cfg.hysteresis) {
                    exited = true;
                    break;
                }
            }
            if (!exited) {
                throw Error(ErrorKind::non_convergence, "trapped-orbit",
                            "no exit from E(z_n, zeta, 1) within " + std::to_string(cfg.max_iter) +
                                " iterations (zeta may not be repelling, or R0 is too large)");
            }
            st.exit_time = m;
            xr.push_back(sigma(tail[tail.size() - 2]));
            yr.push_back(sigma(tail.back()));
            if (m < V) {
                trails.push_back(st);
                continue;
            }
            std::vector<CPoint> trail(tail.rbegin(), tail.rend());
            if (!prev.empty()) {
                st.diff = sup_diff(trail, prev);
                run = st.diff <= cfg.cauchy_tol ? run + 1 : 1;
            }
            trails.push_back(st);
            prev = trail;
            if (run >= cfg.cauchy_run) {
                accepted = trail;
                break;
            }
        }
        if (accepted.empty()) {
            std::string last = "none";
            for (auto it = trails.rbegin(); it != trails.rend(); ++it) {
                if (it->diff >= 0.0) {
                    last = std::to_string(it->diff);
                    break;
                }
            }
            res.diagnostics.push_back("n=" + std::to_string(n) + ": " + why + " after " +
                                      std::to_string(trails.size()) + " seeds, last trail difference " + last);
            continue;
        }

        res.n_used = n;
        res.R_n = Rn;
        res.r_n = rn;
        res.epsilon_n = std::ldexp(1.0, -n - 2);
        res.z_n = zn;
        res.trails = trails;
        res.x_rescaled = xr;
        res.y_rescaled = yr;

        OrbitRecord& o = res.orbit;
        o.direction = OrbitDirection::backward;
        for (const auto& u : accepted) o.points.push_back(frame.from_ball(u));
        o.base = o.points.front();
        o.horo_pole = pole;
        o.horo_center = cfg.zeta;
        o.solver_tol = cfg.cauchy_tol;
        o.note = "stopping-time construction, frame " + frame.name;
        const DomainMetric metric(d);
        fill_orbit_stats(metric, o);
        for (std::size_t j = 0; j + 1 < o.points.size(); ++j) {
            const CPoint fx = f(o.points[j + 1]);
            const double scale = std::max(1.0, o.points[j].norm());
            res.compat_error = std::max(res.compat_error, (fx - o.points[j]).norm() / scale);
        }
        for (const auto& p : o.points) res.koranyi_max = std::max(res.koranyi_max, metric.koranyi(pole, cfg.zeta, p));
        res.step_limit = o.steps.back();
        res.step_gap = std::abs(res.step_limit - log_lambda);
        if (res.compat_error > cfg.compat_tol) {
            throw Error(ErrorKind::invariant_violation, "incompatible-orbit",
                        "f(x_{n+1}) differs from x_n by " + std::to_string(res.compat_error));
        }
        if (res.step_gap > cfg.step_tol) {
            throw Error(ErrorKind::invariant_violation, "step-mismatch",
                        "final step " + std::to_string(res.step_limit) + " vs log lambda " +
                            std::to_string(log_lambda));
        }
        return res;
    }
    std::string all;
    for (const auto& s : res.diagnostics) all += (all.empty() ? "" : "; ") + s;
    throw Error(ErrorKind::non_convergence, "non-convergent-orbit", all);
}

ConvergenceReport backward_step(const DomainSpec& d, const OrbitRecord& orbit, int m, int window, double tol) {
    if (m < 1) throw Error(ErrorKind::precondition, "invalid-step", "m >= 1 required");
    const int len = static_cast<int>(orbit.points.size());
    if (len <= m + window) {
        throw Error(ErrorKind::precondition, "orbit-too-short",
                    "need more than m + window = " + std::to_string(m + window) + " points, have " +
                        std::to_string(len));
    }
    const DomainMetric metric(d);
    std::vector<double> values;
    for (int n = 0; n + m < len; ++n) {
        const CPoint& a = orbit.points[n];
        const CPoint& b = orbit.points[n + m];
        const double v = metric.distance(a, b);
        double slack = 1e-9;
        if (d.bounded()) {
            const double margin = std::min(metric.boundary_margin(a), metric.boundary_margin(b));
            slack = std::max(slack, 1e-14 / margin);
        }
        if (!metric.exact()) slack = std::max(slack, metric.gap(a, b));
        if (!values.empty() && v < values.back() - slack) {
            throw Error(ErrorKind::invariant_violation, "metric-inconsistency",
                        "backward step decreased at index " + std::to_string(n));
        }
        values.push_back(v);
    }
    return detect_limit(values, window, tol);
}

// ---------------------------------------------------------------- pre-model

PreModelEstimate extract_pre_model(const HoloMap& f, const OrbitRecord& orbit, const PreModelConfig& cfg) {
    const auto& d = f.domain;
    if (d.kind != DomainKind::ball && d.kind != DomainKind::siegel) {
        throw Error(ErrorKind::precondition, "unsupported-domain",
                    "pre-model stages need an invertible chart (ball or Siegel)");
    }
    const int N = static_cast<int>(orbit.points.size()) - 1;
    if (N < cfg.window + 1) throw Error(ErrorKind::precondition, "orbit-too-short", "orbit has too few points");
    for (int j = 0; j < N; ++j) {
        const CPoint fx = f(orbit.points[j + 1]);
        if ((fx - orbit.points[j]).norm() > 1e-6 * std::max(1.0, orbit.points[j].norm())) {
            throw Error(ErrorKind::precondition, "not-a-backward-orbit", "f(x_{n+1}) != x_n at " + std::to_string(j));
        }
    }
    const int q = d.q;
    const DomainMetric metric(d);

    SeededSampler rng(cfg.seed, q);
    std::vector<CPoint> grid{CPoint::Zero(q)};
    for (double r : cfg.radii) {
        for (int i = 0; i < cfg.samples_per_radius; ++i) grid.push_back(std::tanh(r / 2.0) * rng.sphere(q));
    }

    auto stage_map = [&](const LocalChart& ch, int m) {
        return [&f, ch, m](const CPoint& u) {
            CPoint y = ch.inverse(u);
            for (int j = 0; j < m; ++j) y = f(y);
            return y;
        };
    };

    PreModelEstimate est;
    est.orbit = orbit;
    std::vector<std::vector<CPoint>> values;
    std::vector<LocalChart> charts;
    double spread = std::numeric_limits<double>::infinity();
    int M = 0;
    for (int m = 1; m <= N; ++m) {
        LocalChart ch(d, orbit.points[m]);
        const CMatrix Jraw = smooth_jacobian(stage_map(ch, m), CPoint::Zero(q));
        ch.gauge = polar_unitary(Jraw);
        const auto A = stage_map(ch, m);
        std::vector<CPoint> v;
        v.reserve(grid.size());
        for (const auto& u : grid) {
            const CPoint y = A(u);
            if (!is_finite(y) || !d.contains(y)) {
                throw Error(ErrorKind::non_convergence, "unstable-stage",
                            "stage " + std::to_string(m) + " leaves the domain on the sample grid");
            }
            v.push_back(y);
        }
        values.push_back(std::move(v));
        charts.push_back(ch);
        M = m;
        if (m >= cfg.window) {
            spread = 0.0;
            for (int j = m - cfg.window; j < m - 1; ++j) spread = std::max(spread, sup_diff(values[j], values.back()));
            if (spread <= cfg.stage_tol) break;
        }
    }
    est.stages = M;
    est.stage_spread = spread;
    if (!(spread <= cfg.stage_tol)) {
        throw Error(ErrorKind::non_convergence, "non-convergent-model",
                    "stage spread " + std::to_string(spread) + " after " + std::to_string(M) + " stages");
    }

    const LocalChart& chM = charts.back();
    const auto ell_full = stage_map(chM, M);
    const CMatrix P = smooth_jacobian(ell_full, CPoint::Zero(q));
    Eigen::JacobiSVD<CMatrix> svd(P, Eigen::ComputeFullU);
    est.singular_values.assign(svd.singularValues().data(),
                               svd.singularValues().data() + svd.singularValues().size());
    est.k = model_dimension(svd.singularValues(), cfg.rank_rel, cfg.rank_gap);
    if (est.k == 0) throw Error(ErrorKind::invariant_violation, "degenerate-model", "constant limit map");
    const int k = est.k;
    est.slice = svd.matrixU().leftCols(k);
    const CMatrix S = est.slice;
    auto ell = [&](const CPoint& w) { return ell_full(CPoint(S * w)); };

    // tau is approximately psi_M o psi_{M-1}^{-1} on the slice.
    const LocalChart& chP = charts[charts.size() - 2];
    auto T = [&](const CPoint& w) { return CPoint(S.adjoint() * chM(chP.inverse(S * w))); };
    auto Ti = [&](const CPoint& w) { return CPoint(S.adjoint() * chP(chM.inverse(S * w))); };

    SeededSampler wr(cfg.seed + 1, k);
    std::vector<CPoint> src{CPoint::Zero(k)};
    for (double r : cfg.radii) {
        for (int i = 0; i < cfg.samples_per_radius; ++i) src.push_back(std::tanh(r / 2.0) * wr.sphere(k));
    }
    std::vector<CPoint> dst;
    for (const auto& w : src) dst.push_back(T(w));
    std::vector<ball::BallAutomorphism> starts{automorphism_from_maps(T, Ti, k)};
    est.fit = fit_ball_automorphism(src, dst, starts, cfg.fit_starts, cfg.fit_iterations, cfg.seed + 2);
    est.tau = est.fit.tau;

    for (const auto& w : src) {
        StableSample s{w, ell(w), CPoint()};
        s.f_ell = f(s.ell);
        est.residual = std::max(est.residual, (s.f_ell - ell(est.tau(w))).norm());
        est.stable_samples.push_back(std::move(s));
    }

    est.normal = normal_form(est.tau, 1e-3, true);
    switch (est.normal.kind) {
        case NormalFormKind::hyperbolic_dilation: est.type = "hyperbolic"; break;
        case NormalFormKind::elliptic: est.type = "elliptic"; break;
        default: est.type = "parabolic"; break;
    }
    est.dilation = est.normal.kind == NormalFormKind::hyperbolic_dilation ? est.normal.lambda : 1.0;
    est.angles = est.normal.angles;
    est.c_tau = est.type == "hyperbolic" ? std::log(est.dilation) : 0.0;

    // Backward m-steps of the orbit against c(tau).
    const int win = std::max(2, std::min(cfg.window, N / 2));
    double inf = std::numeric_limits<double>::infinity();
    for (int m = 1; m + win < N + 1; ++m) {
        const auto s = backward_step(d, orbit, m, win, 1e-6);
        const double v = (s.limit ? *s.limit : s.values.back()) / m;
        est.s_over_m.push_back(v);
        inf = std::min(inf, v);
    }
    if (!est.s_over_m.empty()) {
        est.c_orbit_inf = inf;
        est.c_orbit_lim = est.s_over_m.back();
        est.c_consistent = std::abs(est.c_tau - est.c_orbit_inf) <= cfg.c_tol;
    }

    // l along the model ray toward the repelling point of tau.
    if (est.normal.repelling && orbit.horo_center) {
        const CPoint eta = *est.normal.repelling;
        const CPoint pole = domain_pole(d);
        const CPoint& zb = *orbit.horo_center;  // centers are already in the ball picture
        for (int j = 0; j <= cfg.ray_points; ++j) {
            const CPoint w = std::tanh(0.25 * j) * eta;
            const CPoint y = ell(w);
            if (!is_finite(y) || !d.contains(y) || (d.bounded() && metric.boundary_margin(y) < kPrecisionMargin)) break;
            est.ray_koranyi.push_back(metric.koranyi(pole, *orbit.horo_center, y));
            est.ray_distance.push_back((metric.to_ball(y) - zb).norm());
            est.ray_koranyi_max = std::max(est.ray_koranyi_max, est.ray_koranyi.back());
        }
    }
    return est;
}

// ---------------------------------------------------------------- uniqueness and compactness

UniquenessReport uniqueness_check(const DomainSpec& d, const OrbitRecord& a, const OrbitRecord& b, double tail_tol) {
    if (a.points.empty() || b.points.empty()) throw Error(ErrorKind::precondition, "empty-orbit", "orbits required");
    const DomainMetric metric(d);
    auto limit_of = [&](const OrbitRecord& o) { return metric.to_ball(o.points.back()); };
    const CPoint la = limit_of(a), lb = limit_of(b);
    const double ma = 1.0 - la.norm(), mb = 1.0 - lb.norm();
    if (ma > 0.05 || mb > 0.05 || (la - lb).norm() > 0.1) {
        throw Error(ErrorKind::precondition, "different-limits",
                    "orbits do not approach a common boundary point");
    }
    UniquenessReport rep;
    rep.common = static_cast<int>(std::min(a.points.size(), b.points.size()));
    if (a.points.size() != b.points.size()) {
        rep.warning = "orbits of unequal length; compared over the first " + std::to_string(rep.common) + " points";
    }
    for (int m = 0; m < rep.common; ++m) {
        const double v = metric.distance(a.points[m], b.points[m]);
        if (!rep.distances.empty() && v < rep.distances.back() - 1e-8) rep.monotone = false;
        rep.distances.push_back(v);
    }
    const int tail = std::max(2, rep.common / 2);
    const auto first = rep.distances.end() - std::min<int>(tail, rep.common);
    rep.tail_min = *std::min_element(first, rep.distances.end());
    rep.tail_max = *std::max_element(first, rep.distances.end());
    rep.same_class = rep.tail_max <= rep.tail_min + tail_tol;
    return rep;
}

std::string to_string(CompactnessStatus s) {
    switch (s) {
        case CompactnessStatus::compact: return "compact";
        case CompactnessStatus::boundary_drift: return "boundary-drift";
        case CompactnessStatus::inconclusive: return "inconclusive";
        case CompactnessStatus::precondition_violated: return "precondition-violated";
    }
    return "inconclusive";
}

CompactnessReport rescaled_compactness_experiment(const std::vector<CPoint>& x, const std::vector<CPoint>& y,
                                                  const CPoint& zeta, double R, double tol) {
    CompactnessReport rep;
    if (x.size() != y.size() || x.size() < 3) {
        rep.detail = "need paired sequences of length >= 3";
        return rep;
    }
    const int q = static_cast<int>(zeta.size());
    const CPoint o = CPoint::Zero(q);
    std::vector<double> diff, dist;
    for (std::size_t n = 0; n < x.size(); ++n) {
        if (!(ball::horo_value(o, zeta, x[n]) < R) || ball::horo_value(o, zeta, y[n]) < R) {
            rep.status = CompactnessStatus::precondition_violated;
            rep.detail = "horosphere separation fails at index " + std::to_string(n);
            return rep;
        }
        diff.push_back(ball::kobayashi_ball(o, x[n]) - ball::kobayashi_ball(o, y[n]));
        dist.push_back(ball::kobayashi_ball(x[n], y[n]));
        rep.max_norm_x = std::max(rep.max_norm_x, x[n].norm());
        rep.max_norm_y = std::max(rep.max_norm_y, y[n].norm());
    }
    // Drift: the boundary margin keeps shrinking from the first half to the second.
    const std::size_t h = x.size() / 2;
    auto min_margin = [&](std::size_t lo, std::size_t hi) {
        double mm = 1.0;
        for (std::size_t n = lo; n < hi; ++n) mm = std::min({mm, 1.0 - x[n].norm(), 1.0 - y[n].norm()});
        return mm;
    };
    const double m1 = min_margin(0, h), m2 = min_margin(h, x.size());
    rep.drift = m2 < 1e-3 && m2 < 0.5 * m1;

    const int win = std::min<int>(kDefaultWindow, static_cast<int>(x.size()));
    const auto a = detect_limit(diff, win, tol);
    const auto b = detect_limit(dist, win, tol);
    rep.limits_established = a.converged && b.converged && std::abs(*a.limit - *b.limit) <= tol && *b.limit > tol;
    if (b.limit) rep.L = *b.limit;
    if (rep.drift) {
        rep.status = CompactnessStatus::boundary_drift;
        rep.detail = "boundary margin fell from " + std::to_string(m1) + " to " + std::to_string(m2);
    } else if (!rep.limits_established) {
        rep.status = CompactnessStatus::inconclusive;
        rep.detail = "limit conditions not established numerically; smallest boundary margin " +
                     std::to_string(std::min(m1, m2));
    } else {
        rep.status = CompactnessStatus::compact;
        rep.detail = "smallest boundary margin " + std::to_string(std::min(m1, m2));
    }
    return rep;
}

}  // namespace holokit
