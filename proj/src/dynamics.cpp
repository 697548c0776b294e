#include "holokit/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace holokit {

namespace {

constexpr cplx I(0.0, 1.0);
constexpr double kInf = std::numeric_limits<double>::infinity();

bool is_center_e1(const CPoint& c) {
    return std::abs(c[0] - 1.0) < 1e-12 && c.tail(c.size() - 1).norm() < 1e-12;
}

}  // namespace

bool escaped(const CPoint& z) { return !is_finite(z) || z.norm() > kEscapeNorm; }

CMatrix frame_from(const CPoint& zeta) {
    const auto q = zeta.size();
    CMatrix M = CMatrix::Identity(q, q);
    M.col(0) = zeta;
    Eigen::HouseholderQR<CMatrix> qr(M);
    CMatrix Q = qr.householderQ();
    Q.col(0) = zeta;
    return Q;
}

DomainMetric::DomainMetric(const DomainSpec& d) {
    if (d.kind == DomainKind::ball || d.kind == DomainKind::siegel || d.is_quadric()) {
        geometry_.domain = d;
    } else {
        geometry_ = build_geometry(d);
    }
}

bool DomainMetric::exact() const {
    const auto k = domain().kind;
    return k == DomainKind::ball || k == DomainKind::siegel || domain().is_quadric();
}

double DomainMetric::distance(const CPoint& z, const CPoint& w) const {
    const auto& d = domain();
    switch (d.kind) {
        case DomainKind::ball: return ball::kobayashi_ball(z, w);
        case DomainKind::siegel: return ball::kobayashi_siegel(z, w);
        default: break;
    }
    if (d.is_quadric()) {
        CPoint zs = z, ws = w;
        for (int i = 0; i < d.q; ++i) {
            zs[i] *= std::sqrt(d.coefficients[i]);
            ws[i] *= std::sqrt(d.coefficients[i]);
        }
        return ball::kobayashi_ball(zs, ws);
    }
    return kobayashi_sandwich(geometry_, z, w).mid();
}

double DomainMetric::gap(const CPoint& z, const CPoint& w) const {
    if (exact()) return 0.0;
    return kobayashi_sandwich(geometry_, z, w).gap();
}

double DomainMetric::horo(const CPoint& pole, const CPoint& center, const CPoint& z) const {
    switch (domain().kind) {
        case DomainKind::ball: return ball::horo_value(pole, center, z);
        case DomainKind::siegel: return ball::horo_value_siegel(pole, center, z);
        default: break;
    }
    DomainGeometry g = geometry_;
    if (g.hyperplanes.empty() && domain().bounded()) g = build_geometry(domain());
    return horo_value_general(g, pole, center, z).value;
}

double DomainMetric::koranyi(const CPoint& pole, const CPoint& center, const CPoint& z) const {
    return std::exp(0.5 * (std::log(horo(pole, center, z)) + distance(pole, z)));
}

double DomainMetric::boundary_margin(const CPoint& z) const {
    const auto& d = domain();
    if (!is_finite(z)) return -kInf;
    switch (d.kind) {
        case DomainKind::ball: return 1.0 - z.norm();
        case DomainKind::siegel: return ball::siegel_rho(z);
        default: break;
    }
    const double r = d.rho(z);
    if (r >= 0.0) return r == 0.0 ? 0.0 : -r;
    return -r / d.gradient(z).norm();
}

CPoint DomainMetric::ray(const CPoint& pole, const CPoint& center, double t) const {
    const auto& d = domain();
    if (d.kind == DomainKind::ball) {
        return ball::geodesic(pole, center, ball::GeodesicKind::ray)(t);
    }
    if (d.kind == DomainKind::siegel) {
        if (is_center_e1(center)) {
            CPoint u = CPoint::Zero(d.q);
            u[0] = I * std::exp(t);
            return ball::SiegelNormalizer{pole}.inverse(u);
        }
        return ball::cayley(
            ball::geodesic(ball::cayley_inverse(pole), center, ball::GeodesicKind::ray)(t));
    }
    return center + std::exp(-t) * (pole - center);
}

double DomainMetric::ray_limit(const CPoint& pole, const CPoint& center) const {
    if (domain().kind == DomainKind::siegel && is_center_e1(center)) return 300.0;
    auto ok = [&](double t) {
        const CPoint z = ray(pole, center, t);
        if (domain().kind == DomainKind::siegel) return 1.0 - ball::cayley_inverse(z).norm() > 1e-11;
        return boundary_margin(z) > 1e-11;
    };
    return bisect_last_true(ok, 0.0, 60.0, 1e-6);
}

CPoint DomainMetric::sample(SeededSampler& rng, double spread) const {
    const auto& d = domain();
    switch (d.kind) {
        case DomainKind::ball: return rng.ball(d.q, spread);
        case DomainKind::siegel: return ball::cayley(rng.ball(d.q, spread));
        default: break;
    }
    const CPoint u = rng.sphere(d.q);
    const double r = ray_exit(d, d.center, u);
    return d.center + spread * std::pow(rng.uniform(), 1.0 / (2.0 * d.q)) * r * u;
}

CPoint DomainMetric::to_ball(const CPoint& z) const {
    if (domain().kind == DomainKind::siegel) return ball::cayley_inverse(z);
    return z;
}

CMatrix HoloMap::jac(const CPoint& z, double h) const {
    if (jacobian) return jacobian(z);
    return numerical_jacobian(eval, z, h);
}

HoloMap make_holomap(std::string name, const DomainSpec& domain, const DomainSpec& codomain,
                     PointMap eval, bool is_automorphism, int verify_samples, std::uint64_t seed) {
    HoloMap f{std::move(name), domain, codomain, std::move(eval), {}, is_automorphism};
    DomainMetric m(domain);
    SeededSampler rng(seed, domain.q);
    for (int i = 0; i < verify_samples; ++i) {
        const CPoint z = m.sample(rng);
        const CPoint w = f(z);
        if (!is_finite(w) || w.size() != codomain.q || !codomain.contains(w)) {
            throw Error(ErrorKind::precondition, "not-a-self-map",
                        f.name + " maps a sampled interior point outside the codomain");
        }
    }
    return f;
}

HoloMap identity_map(const DomainSpec& d) {
    return make_holomap("identity", d, d, [](const CPoint& z) { return z; }, true, 16);
}

HoloMap linear_map(const DomainSpec& d, const CMatrix& A) {
    auto f = make_holomap("linear", d, d, [A](const CPoint& z) { return CPoint(A * z); });
    f.jacobian = [A](const CPoint&) { return A; };
    return f;
}

HoloMap ball_translation(const CPoint& a, const CMatrix& U) {
    const DomainSpec d = make_ball(static_cast<int>(a.size()));
    const CPoint ma = -a;
    return make_holomap("ball-automorphism", d, d,
                        [ma, U](const CPoint& z) { return CPoint(-(U * ball::mobius(ma, z))); }, true);
}

HoloMap ball_translation(const CPoint& a) {
    return ball_translation(a, CMatrix::Identity(a.size(), a.size()));
}

HoloMap siegel_affine(const std::vector<cplx>& dv, cplx b) {
    const int q = static_cast<int>(dv.size());
    const DomainSpec d = make_siegel(q);
    auto f = make_holomap("siegel-affine", d, d, [dv, b](const CPoint& z) {
        CPoint w(z.size());
        for (Eigen::Index i = 0; i < z.size(); ++i) w[i] = dv[i] * z[i];
        w[0] += b;
        return w;
    });
    f.is_automorphism = true;
    for (int i = 1; i < q; ++i) {
        if (std::abs(std::norm(dv[i]) - std::abs(dv[0])) > 1e-12 || dv[0].imag() != 0.0) {
            f.is_automorphism = false;
        }
    }
    if (dv[0].imag() != 0.0 || dv[0].real() <= 0.0 || b.imag() != 0.0) f.is_automorphism = false;
    CMatrix A = CMatrix::Zero(q, q);
    for (int i = 0; i < q; ++i) A(i, i) = dv[i];
    f.jacobian = [A](const CPoint&) { return A; };
    return f;
}

HoloMap siegel_parabolic_shear(int q) {
    if (q < 2) throw Error(ErrorKind::precondition, "dimension", "shear needs q >= 2");
    const DomainSpec d = make_siegel(q);
    auto f = make_holomap("siegel-shear", d, d, [](const CPoint& z) {
        CPoint w = z;
        w[0] = z[0] - 2.0 * z[1] + I;
        w[1] = z[1] - I;
        return w;
    });
    f.is_automorphism = true;
    return f;
}

HoloMap polynomial_map(const DomainSpec& d, std::vector<std::vector<PolyTerm>> coords,
                       std::string name) {
    if (static_cast<int>(coords.size()) != d.q) {
        throw Error(ErrorKind::schema, "malformed-map", "polynomial map needs q coordinates");
    }
    for (const auto& c : coords) {
        for (const auto& t : c) {
            if (static_cast<int>(t.exponents.size()) != d.q) {
                throw Error(ErrorKind::schema, "malformed-map", "exponent length != q");
            }
        }
    }
    return make_holomap(std::move(name), d, d, [coords](const CPoint& z) {
        CPoint w = CPoint::Zero(z.size());
        for (std::size_t i = 0; i < coords.size(); ++i) {
            for (const auto& t : coords[i]) {
                cplx m = t.coeff;
                for (Eigen::Index j = 0; j < z.size(); ++j) {
                    for (int e = 0; e < t.exponents[j]; ++e) m *= z[j];
                }
                w[i] += m;
            }
        }
        return w;
    });
}

HoloMap cayley_conjugate(const HoloMap& g) {
    if (g.domain.kind != DomainKind::siegel) {
        throw Error(ErrorKind::precondition, "not-siegel", "cayley_conjugate needs a Siegel map");
    }
    const DomainSpec d = make_ball(g.domain.q);
    auto ev = g.eval;
    auto f = make_holomap("cayley(" + g.name + ")", d, d, [ev](const CPoint& z) {
        return ball::cayley_inverse(ev(ball::cayley(z)));
    });
    f.is_automorphism = g.is_automorphism;
    return f;
}

HoloMap compose(const HoloMap& outer, const HoloMap& inner_map) {
    auto o = outer.eval;
    auto i = inner_map.eval;
    auto f = make_holomap(outer.name + "*" + inner_map.name, inner_map.domain, outer.codomain,
                          [o, i](const CPoint& z) { return o(i(z)); });
    f.is_automorphism = outer.is_automorphism && inner_map.is_automorphism;
    return f;
}

HoloMap egg_automorphism(double a) {
    if (!(std::abs(a) < 1.0)) throw Error(ErrorKind::precondition, "out-of-domain", "|a| < 1");
    const DomainSpec d = make_egg();
    auto f = make_holomap("egg-automorphism", d, d, [a](const CPoint& z) {
        CPoint w(2);
        const cplx den = 1.0 + a * z[0];
        w[0] = (z[0] + a) / den;
        w[1] = z[1] * std::sqrt(std::sqrt(1.0 - a * a) / den);
        return w;
    });
    f.is_automorphism = true;
    return f;
}

void fill_orbit_stats(const DomainMetric& metric, OrbitRecord& orbit) {
    orbit.distance_to_base.clear();
    orbit.steps.clear();
    orbit.horo.clear();
    for (std::size_t n = 0; n < orbit.points.size(); ++n) {
        const CPoint& x = orbit.points[n];
        orbit.distance_to_base.push_back(metric.distance(orbit.base, x));
        if (n + 1 < orbit.points.size()) {
            orbit.steps.push_back(metric.distance(x, orbit.points[n + 1]));
            if (!metric.exact()) {
                orbit.metric_gap = std::max(orbit.metric_gap, metric.gap(x, orbit.points[n + 1]));
            }
        }
        if (orbit.horo_pole && orbit.horo_center) {
            orbit.horo.push_back(metric.horo(*orbit.horo_pole, *orbit.horo_center, x));
        }
    }
}

OrbitRecord iterate(const HoloMap& f, const CPoint& x, int n, const OrbitOptions& opts) {
    if (n < 1) throw Error(ErrorKind::precondition, "invalid-length", "n >= 1 required");
    const DomainMetric metric(f.domain);
    if (metric.near_boundary(x) || !f.domain.contains(x)) {
        throw Error(ErrorKind::precondition, "boundary-proximity", "orbit base not interior");
    }
    OrbitRecord o;
    o.base = x;
    o.horo_pole = opts.pole;
    o.horo_center = opts.center;
    o.points.push_back(x);
    for (int k = 0; k < n; ++k) {
        const CPoint y = f(o.points.back());
        if (escaped(y) || metric.near_boundary(y)) {
            o.exited = true;
            o.note = "orbit left the numerical interior at index " + std::to_string(k + 1);
            break;
        }
        o.points.push_back(y);
    }
    if (opts.stats) fill_orbit_stats(metric, o);
    return o;
}

namespace {

/// Orbit truncated where metric evaluation keeps full precision.
std::vector<CPoint> precise_orbit(const HoloMap& f, const DomainMetric& metric, const CPoint& x,
                                  int n) {
    std::vector<CPoint> pts{x};
    const bool siegel = metric.domain().kind == DomainKind::siegel;
    for (int k = 0; k < n; ++k) {
        const CPoint y = f(pts.back());
        if (escaped(y)) break;
        if (!siegel && metric.boundary_margin(y) < kPrecisionMargin) break;
        if (siegel && metric.near_boundary(y)) break;
        pts.push_back(y);
    }
    return pts;
}

}  // namespace

ConvergenceReport forward_step(const HoloMap& f, const CPoint& x, int m, int n_max, int window,
                               double tol) {
    if (m < 1) throw Error(ErrorKind::precondition, "invalid-step", "m >= 1 required");
    const DomainMetric metric(f.domain);
    const auto pts = precise_orbit(f, metric, x, n_max + m);
    std::vector<double> values;
    const bool bounded = f.domain.bounded();
    for (std::size_t n = 0; n + m < pts.size(); ++n) {
        const double v = metric.distance(pts[n], pts[n + m]);
        // Rounding in the point itself costs about eps / margin in the distance.
        double slack = 1e-9;
        if (bounded) {
            const double margin = std::min(metric.boundary_margin(pts[n]), metric.boundary_margin(pts[n + m]));
            slack = std::max(slack, 1e-14 / margin);
        }
        if (!metric.exact()) slack = std::max(slack, metric.gap(pts[n], pts[n + m]));
        if (!values.empty() && v > values.back() + slack) {
            throw Error(ErrorKind::invariant_violation, "metric-inconsistency",
                        "forward step increased at index " + std::to_string(n));
        }
        values.push_back(v);
    }
    if (static_cast<int>(values.size()) < window) {
        ConvergenceReport r;
        r.values = values;
        r.window = window;
        r.tol = tol;
        return r;
    }
    return detect_limit(values, window, tol);
}

DivergenceRate divergence_rate(const HoloMap& f, const CPoint& x, int m_max,
                               const std::optional<CPoint>& second_base) {
    if (m_max < 8) throw Error(ErrorKind::precondition, "invalid-range", "m_max >= 8 required");
    const DomainMetric metric(f.domain);
    auto run = [&](const CPoint& base, DivergenceRate& out) {
        const auto pts = precise_orbit(f, metric, base, m_max);
        std::vector<double> ratios;
        double best = kInf;
        for (std::size_t m = 1; m < pts.size(); ++m) {
            const double r = metric.distance(pts[m], base) / static_cast<double>(m);
            ratios.push_back(r);
            best = std::min(best, r);
        }
        out.m_used = static_cast<int>(pts.size()) - 1;
        out.rate = ratios.empty() ? 0.0 : best;
        if (static_cast<int>(ratios.size()) >= kDefaultWindow) {
            out.trend = detect_limit(ratios, kDefaultWindow, 1e-3);
        } else {
            out.trend.values = ratios;
        }
    };
    DivergenceRate out;
    run(x, out);
    if (second_base) {
        DivergenceRate other;
        run(*second_base, other);
        out.second_base_rate = other.rate;
    }
    return out;
}

DilationResult dilation(const HoloMap& f, const CPoint& zeta, const CPoint& pole,
                        DilationMethod method) {
    const DomainMetric metric(f.domain);
    const double T = metric.ray_limit(pole, zeta);
    if (T < 4.0) {
        throw Error(ErrorKind::precondition, "partial-result", "ray toward zeta too short");
    }
    DilationResult r;
    std::vector<double> steps;
    for (double t = 0.5; t <= T; t += 0.5) {
        const CPoint z = metric.ray(pole, zeta, t);
        const CPoint fz = f(z);
        if (escaped(fz) || metric.near_boundary(fz)) break;
        if (metric.domain().bounded() &&
            std::min(metric.boundary_margin(z), metric.boundary_margin(fz)) < kPrecisionMargin) {
            break;
        }
        r.trace.push_back(metric.distance(pole, z) - metric.distance(pole, fz));
        steps.push_back(metric.distance(z, fz));
    }
    if (r.trace.size() < 4) {
        throw Error(ErrorKind::non_convergence, "partial-result", "too few ray samples");
    }
    r.liminf_value = std::exp(monotone_liminf(r.trace, LiminfMode::liminf_tail));
    const double sign = r.trace.back() >= 0.0 ? 1.0 : -1.0;
    const double step = steps.empty() ? 0.0 : steps.back();
    r.geodesic_step_value = std::exp(sign * step);
    r.value = method == DilationMethod::liminf ? r.liminf_value : r.geodesic_step_value;
    return r;
}

std::string to_string(MapType t) {
    switch (t) {
        case MapType::elliptic: return "elliptic";
        case MapType::hyperbolic: return "hyperbolic";
        case MapType::parabolic_zero_step: return "parabolic-zero-step";
        case MapType::parabolic_nonzero_step: return "parabolic-nonzero-step";
        case MapType::inconclusive: return "inconclusive";
    }
    return "inconclusive";
}

ClassificationResult classify(const HoloMap& f, const CPoint& x, const ClassifyBudget& budget) {
    const DomainMetric metric(f.domain);
    const auto& d = f.domain;
    const bool siegel = d.kind == DomainKind::siegel;
    ClassificationResult res;
    std::vector<CPoint> orbit{x};
    std::vector<CPoint> pic{metric.to_ball(x)};
    const int w = 16;
    bool boundary_found = false, elliptic = false, escaped_inf = false;
    for (int n = 0; n < budget.max_iter; ++n) {
        const CPoint y = f(orbit.back());
        if (escaped(y)) {
            escaped_inf = siegel;
            boundary_found = true;
            break;
        }
        if (metric.near_boundary(y)) {
            boundary_found = true;
            break;
        }
        orbit.push_back(y);
        pic.push_back(metric.to_ball(y));
        const int N = static_cast<int>(pic.size());
        if (N <= w) continue;
        double diam = 0.0;
        for (int k = N - w; k < N; ++k) diam = std::max(diam, (pic[k] - pic[N - 1]).norm());
        if (diam < 1e-10 && 1.0 - pic.back().norm() > 1e-6) {
            elliptic = true;
            break;
        }
        // Boundary cluster: trailing points within tol of the sphere, directions within tol.
        if ((n & 63) == 0 || n + 1 == budget.max_iter) {
            bool near = true;
            const CPoint dir = pic.back().normalized();
            for (int k = N - w; k < N && near; ++k) {
                const double margin = siegel || d.kind == DomainKind::ball
                                          ? 1.0 - pic[k].norm()
                                          : metric.boundary_margin(pic[k]);
                near = margin < budget.boundary_tol &&
                       (pic[k].normalized() - dir).norm() < budget.boundary_tol;
            }
            if (near) {
                boundary_found = true;
                break;
            }
        }
    }
    res.iterations = static_cast<int>(orbit.size()) - 1;
    if (elliptic) {
        res.type = MapType::elliptic;
        res.denjoy_wolff = orbit.back();
        res.boundary = false;
        res.dilation = 1.0;
        return res;
    }
    if (!boundary_found) {
        res.type = MapType::inconclusive;
        return res;
    }
    res.boundary = true;
    if (siegel) {
        const CPoint& last = orbit.back();
        if (escaped_inf || last.norm() > 1e3 * (1.0 + x.norm())) {
            res.denjoy_wolff = unit_vector(d.q, 0);
        } else {
            res.denjoy_wolff = pic.back().normalized();
        }
    } else if (d.kind == DomainKind::ball) {
        res.denjoy_wolff = pic.back().normalized();
    } else {
        res.denjoy_wolff = project_to_boundary(d, orbit.back());
    }
    res.dilation = dilation(f, res.denjoy_wolff, x).value;
    res.rate_evidence = divergence_rate(f, x, budget.m_max);
    res.divergence_rate = res.rate_evidence.rate;
    res.step_evidence = forward_step(f, x, 1);
    res.s1 = res.step_evidence.limit ? *res.step_evidence.limit
                                     : (res.step_evidence.values.empty() ? 0.0
                                                                         : res.step_evidence.values.back());
    res.rate_dilation_gap = std::abs(std::log(res.dilation) + res.divergence_rate);
    const double tol = budget.decision_tol;
    if (res.dilation < 1.0 - tol) {
        res.type = MapType::hyperbolic;
    } else if (res.dilation <= 1.0 + tol) {
        res.type = res.s1 > tol ? MapType::parabolic_nonzero_step : MapType::parabolic_zero_step;
    } else {
        res.type = MapType::inconclusive;
    }
    return res;
}

JuliaReport julia_check(const HoloMap& f, const CPoint& zeta, const CPoint& pole, double lambda,
                        const std::vector<double>& R_values, int n_samples, std::uint64_t seed) {
    const auto& d = f.domain;
    if (!(lambda > 0.0)) throw Error(ErrorKind::precondition, "invalid-dilation", "lambda > 0");
    if (d.kind != DomainKind::ball && d.kind != DomainKind::siegel) {
        throw Error(ErrorKind::precondition, "unsupported-domain",
                    "julia_check samples horospheres on ball or Siegel domains");
    }
    const DomainMetric metric(d);
    const int q = d.q;
    const CPoint pole_b = metric.to_ball(pole);
    const CMatrix U = frame_from(zeta);
    // E(pole, zeta, R) = E(0, zeta, R / h_{zeta,pole}(0)).
    const double h0 = ball::horo_value(pole_b, zeta, CPoint::Zero(q));
    JuliaReport rep;
    rep.lambda = lambda;
    SeededSampler rng(seed, q);
    for (double R : R_values) {
        for (int i = 0; i < n_samples; ++i) {
            const CPoint zb = U * ball::sample_horosphere(R / h0, q, rng);
            if (1.0 - zb.norm() < 1e-12) continue;
            const CPoint z = d.kind == DomainKind::siegel ? ball::cayley(zb) : zb;
            const CPoint fz = f(z);
            if (escaped(fz) || metric.near_boundary(fz)) continue;
            const double hz = metric.horo(pole, zeta, z);
            const double ratio = metric.horo(pole, zeta, fz) / hz;
            ++rep.samples;
            rep.worst_ratio = std::max(rep.worst_ratio, ratio);
            if (ratio > lambda * (1.0 + 1e-6)) ++rep.violations;
        }
    }
    return rep;
}

}  // namespace holokit
