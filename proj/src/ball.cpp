#include "holokit/ball.hpp"

#include <algorithm>
#include <cmath>

namespace holokit::ball {

namespace {

constexpr cplx I(0.0, 1.0);

void guard_ball(const CPoint& z) {
    require_finite(z, "ball point");
    if (1.0 - z.norm() < kBoundaryGuard) {
        throw Error(ErrorKind::precondition, "boundary-proximity",
                    "point within 1e-12 of the unit sphere");
    }
}

void guard_siegel(const CPoint& z) {
    require_finite(z, "Siegel point");
    if (siegel_rho(z) < kBoundaryGuard) {
        throw Error(ErrorKind::precondition, "boundary-proximity",
                    "point within 1e-12 of the Siegel boundary");
    }
}

/// Distance from 0 given r = |u| and a precise value of 1 - r^2.
double distance_from_origin(double r, double one_minus_r2) {
    return 2.0 * std::log1p(r) - std::log(one_minus_r2);
}

bool same_point(const CPoint& a, const CPoint& b, double tol) { return (a - b).norm() < tol; }

}  // namespace

double ball_boundary_distance(const CPoint& z) { return 1.0 - z.norm(); }

double kobayashi_ball(const CPoint& z, const CPoint& w) {
    guard_ball(z);
    guard_ball(w);
    const double nz = z.squaredNorm();
    const double nw = w.squaredNorm();
    const cplx c = inner(z, w);
    const double D = std::norm(1.0 - c);
    // |1-<z,w>|^2 - (1-|z|^2)(1-|w|^2) = |z-w|^2 - (|z|^2|w|^2 - |<z,w>|^2)
    double lagrange = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        for (Eigen::Index j = i + 1; j < z.size(); ++j) {
            lagrange += std::norm(z[i] * w[j] - z[j] * w[i]);
        }
    }
    const double N = std::max(0.0, (z - w).squaredNorm() - lagrange);
    const double r = std::min(std::sqrt(N / D), 1.0 - 1e-300);
    const double one_minus_r2 = (1.0 - nz) * (1.0 - nw) / D;
    return std::max(0.0, distance_from_origin(r, one_minus_r2));
}

double siegel_rho(const CPoint& z) {
    double s = z[0].imag();
    for (Eigen::Index i = 1; i < z.size(); ++i) s -= std::norm(z[i]);
    return s;
}

CPoint SiegelNormalizer::operator()(const CPoint& z) const {
    const double rp = siegel_rho(p);
    CPoint u(z.size());
    cplx zp = 0.0;
    double pp = 0.0;
    for (Eigen::Index j = 1; j < z.size(); ++j) {
        zp += z[j] * std::conj(p[j]);
        pp += std::norm(p[j]);
        u[j] = (z[j] - p[j]) / std::sqrt(rp);
    }
    u[0] = (z[0] - p[0].real() - 2.0 * I * zp + I * pp) / rp;
    return u;
}

CPoint SiegelNormalizer::inverse(const CPoint& w) const {
    const double rp = siegel_rho(p);
    CPoint z(w.size());
    cplx zp = 0.0;
    double pp = 0.0;
    for (Eigen::Index j = 1; j < w.size(); ++j) {
        z[j] = w[j] * std::sqrt(rp) + p[j];
        zp += z[j] * std::conj(p[j]);
        pp += std::norm(p[j]);
    }
    z[0] = w[0] * rp + p[0].real() + 2.0 * I * zp - I * pp;
    return z;
}

double kobayashi_siegel(const CPoint& z, const CPoint& w) {
    guard_siegel(z);
    guard_siegel(w);
    const CPoint x = SiegelNormalizer{w}(z);
    const CPoint u = cayley_inverse(x);
    const double r = std::min(u.norm(), 1.0 - 1e-300);
    const double one_minus_r2 = 4.0 * siegel_rho(x) / std::norm(1.0 - I * x[0]);
    return std::max(0.0, distance_from_origin(r, one_minus_r2));
}

CPoint mobius(const CPoint& a, const CPoint& z) {
    const double na = a.squaredNorm();
    if (na >= 1.0) throw Error(ErrorKind::precondition, "out-of-domain", "|a| >= 1");
    if (na == 0.0) return -z;
    const cplx za = inner(z, a);
    const CPoint Pz = (za / na) * a;
    const CPoint Qz = z - Pz;
    const double s = std::sqrt(1.0 - na);
    return (a - Pz - s * Qz) / (1.0 - za);
}

CPoint BallAutomorphism::operator()(const CPoint& z) const { return U * mobius(a, z); }

CPoint BallAutomorphism::inverse(const CPoint& w) const {
    return mobius(a, CPoint(U.adjoint() * w));
}

BallAutomorphism mobius_to_origin(const CPoint& a) {
    require_finite(a, "Möbius center");
    if (a.norm() >= 1.0) throw Error(ErrorKind::precondition, "out-of-domain", "|a| >= 1");
    const auto q = a.size();
    BallAutomorphism s{a, CMatrix::Identity(q, q)};
    if (a.squaredNorm() == 0.0) s.U = -CMatrix::Identity(q, q);
    return s;
}

CPoint cayley(const CPoint& z) {
    const cplx d = 1.0 - z[0];
    if (std::abs(d) < 1e-12) {
        throw Error(ErrorKind::precondition, "cayley-singularity", "z1 = 1");
    }
    CPoint w(z.size());
    w[0] = I * (1.0 + z[0]) / d;
    for (Eigen::Index j = 1; j < z.size(); ++j) w[j] = z[j] / d;
    return w;
}

CPoint cayley_inverse(const CPoint& w) {
    const cplx d = w[0] + I;
    if (std::abs(d) < 1e-12) {
        throw Error(ErrorKind::precondition, "cayley-singularity", "w1 = -i");
    }
    CPoint z(w.size());
    z[0] = (w[0] - I) / d;
    for (Eigen::Index j = 1; j < w.size(); ++j) z[j] = 2.0 * I * w[j] / d;
    return z;
}

CPoint cayley_pair(CayleyDirection direction, const CPoint& z) {
    return direction == CayleyDirection::forward ? cayley(z) : cayley_inverse(z);
}

CPoint siegel_to_ball_at(const CPoint& p, const CPoint& z) {
    return cayley_inverse(SiegelNormalizer{p}(z));
}

CPoint ball_to_siegel_at(const CPoint& p, const CPoint& u) {
    return SiegelNormalizer{p}.inverse(cayley(u));
}

namespace {

void check_center(const CPoint& center) {
    if (std::abs(center.norm() - 1.0) > 1e-9) {
        throw Error(ErrorKind::precondition, "invalid-center", "center must be on the unit sphere");
    }
}

double horo_origin(const CPoint& center, const CPoint& z) {
    guard_ball(z);
    return std::norm(1.0 - inner(z, center)) / (1.0 - z.squaredNorm());
}

}  // namespace

double horo_value(const CPoint& pole, const CPoint& center, const CPoint& z) {
    check_center(center);
    const double hz = horo_origin(center, z);
    if (pole.squaredNorm() == 0.0) return hz;
    return hz / horo_origin(center, pole);
}

double horo_value_siegel(const CPoint& pole, const CPoint& center, const CPoint& z) {
    check_center(center);
    guard_siegel(z);
    guard_siegel(pole);
    const CPoint e1 = unit_vector(static_cast<int>(z.size()), 0);
    if (same_point(center, e1, 1e-12)) return siegel_rho(pole) / siegel_rho(z);
    if (same_point(center, -e1, 1e-12)) {
        return (std::norm(z[0]) / siegel_rho(z)) / (std::norm(pole[0]) / siegel_rho(pole));
    }
    return horo_value(cayley_inverse(pole), center, cayley_inverse(z));
}

double koranyi_value(const CPoint& pole, const CPoint& center, const CPoint& z) {
    const double h = horo_value(pole, center, z);
    return std::exp(0.5 * (std::log(h) + kobayashi_ball(pole, z)));
}

double koranyi_value_siegel(const CPoint& pole, const CPoint& center, const CPoint& z) {
    const double h = horo_value_siegel(pole, center, z);
    return std::exp(0.5 * (std::log(h) + kobayashi_siegel(pole, z)));
}

namespace {

// Largest |t| whose ray point stays inside the metric guard.
constexpr double kMaxParameter = 26.0;

}  // namespace

CPoint GeodesicRay::operator()(double t) const {
    return transport(std::tanh(0.5 * t) * direction);
}

double GeodesicRay::nearest_parameter(const CPoint& z, double lo, double hi, double tol) const {
    const CPoint zt = transport.inverse(z);
    lo = std::max(lo, -kMaxParameter);
    hi = std::min(hi, kMaxParameter);
    auto f = [&](double t) { return kobayashi_ball(std::tanh(0.5 * t) * direction, zt); };
    return golden_section_min(f, lo, hi, tol);
}

double GeodesicRay::nearest_parameter(const CPoint& z, double tol) const {
    const CPoint zt = transport.inverse(z);
    const double d = kobayashi_ball(CPoint::Zero(zt.size()), zt);
    const double T = 2.0 * d + 1.0;
    return nearest_parameter(z, -T, T, tol);
}

double GeodesicRay::distance_to_line(const CPoint& z) const {
    return kobayashi_ball((*this)(nearest_parameter(z)), z);
}

GeodesicRay geodesic(const CPoint& z, const CPoint& w_or_center, GeodesicKind kind) {
    guard_ball(z);
    GeodesicRay g;
    g.transport = mobius_to_origin(z);
    const CPoint u = g.transport.inverse(w_or_center);
    if (kind == GeodesicKind::segment) {
        guard_ball(w_or_center);
        const double len = kobayashi_ball(z, w_or_center);
        if (len < 1e-14) {
            throw Error(ErrorKind::precondition, "degenerate-geodesic", "coincident endpoints");
        }
        g.direction = u / u.norm();
        g.length = len;
    } else {
        check_center(w_or_center);
        g.direction = u / u.norm();
    }
    g.endpoint = g.transport(g.direction);
    return g;
}

double horosphere_metric(double R, const CPoint& x, const CPoint& y) {
    const CPoint e1 = unit_vector(static_cast<int>(x.size()), 0);
    if (!(horo_value(CPoint::Zero(x.size()), e1, x) < R) ||
        !(horo_value(CPoint::Zero(y.size()), e1, y) < R)) {
        throw Error(ErrorKind::precondition, "not-in-horosphere", "point outside E(0,e1,R)");
    }
    CPoint X = cayley(x), Y = cayley(y);
    X[0] -= I / R;
    Y[0] -= I / R;
    return kobayashi_siegel(X, Y);
}

CPoint sample_horosphere(double R, int q, SeededSampler& rng, double spread) {
    // Siegel point with height rho in (1/R, e^spread / R).
    const double rho = std::exp(spread * rng.uniform()) / R;
    CPoint w(q);
    double n2 = 0.0;
    for (int j = 1; j < q; ++j) {
        w[j] = 0.5 * std::sqrt(rho) * cplx(rng.normal(), rng.normal());
        n2 += std::norm(w[j]);
    }
    w[0] = cplx(rho * rng.normal(), rho + n2);
    return cayley_inverse(w);
}

HorosphereRadiusResult horosphere_radius_for(double R, double eps, int q, int pairs,
                                             std::uint64_t seed) {
    if (!(R > 0.0) || !(eps > 0.0)) {
        throw Error(ErrorKind::precondition, "invalid-radius", "R > 0 and eps > 0 required");
    }
    // Worked in Siegel coordinates, where E(0,e1,r) is {rho > 1/r}.
    auto excess = [&](double r) {
        SeededSampler rng(seed, q);
        double worst = -std::numeric_limits<double>::infinity();
        for (int k = 0; k < pairs; ++k) {
            CPoint X = cayley(sample_horosphere(r, q, rng));
            CPoint Y = cayley(sample_horosphere(r, q, rng));
            const double kB = kobayashi_siegel(X, Y);
            X[0] -= I / R;
            Y[0] -= I / R;
            worst = std::max(worst, kobayashi_siegel(X, Y) - kB - eps);
        }
        return worst;
    };
    HorosphereRadiusResult out;
    out.pairs = pairs;
    out.closed_form = R * (1.0 - std::exp(-0.5 * eps));
    double lo = std::log(R) - 30.0, hi = std::log(R);
    if (excess(std::exp(hi)) <= 0.0) {
        lo = hi;
    } else {
        for (int it = 0; it < 60 && hi - lo > 1e-6; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (excess(std::exp(mid)) <= 0.0) lo = mid;
            else hi = mid;
        }
    }
    out.R_eps = std::exp(lo);
    out.worst_excess = excess(out.R_eps);
    return out;
}

SlimnessResult slimness_delta(const CPoint& a, const CPoint& b, const CPoint& c, int density) {
    SlimnessResult out;
    out.density = density;
    const double tiny = 1e-12;
    if (kobayashi_ball(a, b) < tiny || kobayashi_ball(b, c) < tiny || kobayashi_ball(c, a) < tiny) {
        out.degenerate = true;
        return out;
    }
    const GeodesicRay sides[3] = {geodesic(a, b, GeodesicKind::segment),
                                  geodesic(b, c, GeodesicKind::segment),
                                  geodesic(c, a, GeodesicKind::segment)};
    for (int s = 0; s < 3; ++s) {
        const auto& side = sides[s];
        for (int i = 0; i < density; ++i) {
            const double t = side.length * i / std::max(1, density - 1);
            const CPoint p = side(t);
            double best = std::numeric_limits<double>::infinity();
            for (int o = 1; o <= 2; ++o) {
                const auto& other = sides[(s + o) % 3];
                const double u = other.nearest_parameter(p, 0.0, other.length);
                best = std::min(best, kobayashi_ball(other(u), p));
            }
            out.delta = std::max(out.delta, best);
        }
    }
    return out;
}

LineProjectionResult line_projection_check(const GeodesicRay& gamma, double t0, const CPoint& z, double delta) {
    if (!(delta > 0.0)) throw Error(ErrorKind::precondition, "invalid-delta", "delta > 0");
    LineProjectionResult out;
    out.z_gamma_t = gamma.nearest_parameter(z);
    const CPoint x0 = gamma(t0);
    const CPoint zg = gamma(out.z_gamma_t);
    const double lhs = kobayashi_ball(x0, z);
    const double rhs = std::abs(t0 - out.z_gamma_t) + kobayashi_ball(zg, z) - 6.0 * delta;
    out.slack = lhs - rhs;
    out.holds = out.slack >= 0.0;
    return out;
}

InclusionReport region_A_vs_koranyi(const CPoint& pole, const CPoint& center, double M,
                                    double delta, const std::vector<CPoint>& samples) {
    if (!(M > 1.0) || !(delta > 0.0)) {
        throw Error(ErrorKind::precondition, "invalid-parameters", "M > 1 and delta > 0 required");
    }
    const GeodesicRay gamma = geodesic(pole, center, GeodesicKind::ray);
    InclusionReport rep;
    rep.M = M;
    rep.delta = delta;
    const double logM = std::log(M);
    for (const auto& z : samples) {
        const CPoint zt = gamma.transport.inverse(z);
        const double T = 2.0 * kobayashi_ball(CPoint::Zero(z.size()), zt) + 1.0;
        const double t = gamma.nearest_parameter(z, 0.0, T);
        const double d = kobayashi_ball(gamma(t), z);
        const bool a = d < logM;
        const bool k = koranyi_value(pole, center, z) < M;
        const bool aw = d < logM + 6.0 * delta;
        ++rep.samples;
        rep.in_A += a;
        rep.in_K += k;
        rep.in_A_wide += aw;
        if (a && !k) ++rep.violations_A_in_K;
        if (k && !aw) ++rep.violations_K_in_Awide;
    }
    return rep;
}

double empirical_delta(int q, int count, std::uint64_t seed, int density) {
    SeededSampler rng(seed, q);
    double delta = 0.0;
    for (int i = 0; i < count; ++i) {
        const CPoint a = rng.ball(q, 0.999);
        const CPoint b = rng.ball(q, 0.999);
        const CPoint c = rng.ball(q, 0.999);
        delta = std::max(delta, slimness_delta(a, b, c, density).delta);
    }
    return delta;
}

}  // namespace holokit::ball
