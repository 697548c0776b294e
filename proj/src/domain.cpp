#include "holokit/domain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace holokit {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

cplx ipow(cplx z, int n) {
    cplx r = 1.0;
    for (int i = 0; i < n; ++i) r *= z;
    return r;
}

Monomial mono(int q, cplx coeff, std::vector<std::pair<int, int>> hol,
              std::vector<std::pair<int, int>> anti) {
    Monomial m{coeff, std::vector<int>(q, 0), std::vector<int>(q, 0)};
    for (auto [i, e] : hol) m.a[i] += e;
    for (auto [i, e] : anti) m.b[i] += e;
    return m;
}

CPoint from_real(const Eigen::VectorXd& x) {
    CPoint z(x.size() / 2);
    for (Eigen::Index j = 0; j < z.size(); ++j) z[j] = cplx(x[2 * j], x[2 * j + 1]);
    return z;
}

Eigen::VectorXd to_real(const CPoint& z) {
    Eigen::VectorXd x(2 * z.size());
    for (Eigen::Index j = 0; j < z.size(); ++j) {
        x[2 * j] = z[j].real();
        x[2 * j + 1] = z[j].imag();
    }
    return x;
}

/// Local pattern search over unit directions; returns the best direction.
CPoint refine_direction(const std::function<double(const CPoint&)>& f, CPoint u, bool maximize,
                        double step = 0.05, double min_step = 1e-10) {
    const double sign = maximize ? -1.0 : 1.0;
    u.normalize();
    double best = sign * f(u);
    const Eigen::Index n = 2 * u.size();
    while (step > min_step) {
        bool improved = false;
        for (Eigen::Index k = 0; k < n; ++k) {
            for (double dir : {1.0, -1.0}) {
                Eigen::VectorXd x = to_real(u);
                x[k] += dir * step;
                CPoint v = from_real(x);
                v.normalize();
                const double val = sign * f(v);
                if (val < best) {
                    best = val;
                    u = v;
                    improved = true;
                }
            }
        }
        if (!improved) step *= 0.5;
    }
    return u;
}

double half_plane_distance(cplx X, cplx Y) {
    // Right half-plane; 1 - r^2 = 4 Re X Re Y / |X + conj Y|^2.
    const double den = std::norm(X + std::conj(Y));
    const double r = std::sqrt(std::norm(X - Y) / den);
    const double one_minus_r2 = 4.0 * X.real() * Y.real() / den;
    if (one_minus_r2 <= 0.0) return kInf;
    return 2.0 * std::log1p(std::min(r, 1.0)) - std::log(one_minus_r2);
}

std::vector<double> ellipsoid_weights(const DomainSpec& d) {
    if (d.kind == DomainKind::ball) return std::vector<double>(d.q, 1.0);
    return d.coefficients;
}

CPoint scale_to_ball(const std::vector<double>& a, const CPoint& z) {
    CPoint u(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) u[i] = std::sqrt(a[i]) * z[i];
    return u;
}

double quadric_distance(const DomainSpec& d, const CPoint& z, const CPoint& w) {
    const auto a = ellipsoid_weights(d);
    return ball::kobayashi_ball(scale_to_ball(a, z), scale_to_ball(a, w));
}

void require_interior(const DomainSpec& d, const CPoint& z, const char* what) {
    require_finite(z, what);
    if (z.size() != d.q) throw Error(ErrorKind::schema, "dimension-mismatch", what);
    if (!d.contains(z)) throw Error(ErrorKind::precondition, "out-of-domain", what);
}

}  // namespace

std::string to_string(DomainKind kind) {
    switch (kind) {
        case DomainKind::ball: return "ball";
        case DomainKind::siegel: return "siegel";
        case DomainKind::egg: return "egg";
        case DomainKind::ellipsoid: return "ellipsoid";
        case DomainKind::custom: return "custom";
    }
    return "unknown";
}

DomainKind domain_kind_from_string(const std::string& s) {
    for (auto k : {DomainKind::ball, DomainKind::siegel, DomainKind::egg, DomainKind::ellipsoid,
                   DomainKind::custom}) {
        if (to_string(k) == s) return k;
    }
    throw Error(ErrorKind::schema, "unknown-domain", "domain.kind = " + s);
}

double DomainSpec::rho(const CPoint& z) const {
    cplx s = 0.0;
    for (const auto& m : terms) {
        cplx t = m.coeff;
        for (int i = 0; i < q; ++i) t *= ipow(z[i], m.a[i]) * ipow(std::conj(z[i]), m.b[i]);
        s += t;
    }
    return s.real();
}

CPoint DomainSpec::dbar(const CPoint& z) const {
    CPoint g = CPoint::Zero(q);
    for (const auto& m : terms) {
        for (int j = 0; j < q; ++j) {
            if (m.b[j] == 0) continue;
            cplx t = m.coeff * static_cast<double>(m.b[j]);
            for (int i = 0; i < q; ++i) {
                t *= ipow(z[i], m.a[i]) * ipow(std::conj(z[i]), m.b[i] - (i == j ? 1 : 0));
            }
            g[j] += t;
        }
    }
    return g;
}

Eigen::VectorXd DomainSpec::gradient(const CPoint& z) const { return to_real(2.0 * dbar(z)); }

Eigen::MatrixXd DomainSpec::hessian(const CPoint& z) const {
    const Eigen::Index n = 2 * q;
    Eigen::MatrixXd H(n, n);
    const double h = 1e-5;
    const Eigen::VectorXd x = to_real(z);
    for (Eigen::Index k = 0; k < n; ++k) {
        Eigen::VectorXd xp = x, xm = x;
        xp[k] += h;
        xm[k] -= h;
        H.col(k) = (gradient(from_real(xp)) - gradient(from_real(xm))) / (2 * h);
    }
    return 0.5 * (H + H.transpose());
}

DomainSpec make_ball(int q) {
    DomainSpec d;
    d.kind = DomainKind::ball;
    d.q = q;
    for (int i = 0; i < q; ++i) d.terms.push_back(mono(q, 1.0, {{i, 1}}, {{i, 1}}));
    d.terms.push_back(mono(q, -1.0, {}, {}));
    d.center = CPoint::Zero(q);
    d.circumradius = 1.0;
    return d;
}

DomainSpec make_siegel(int q) {
    DomainSpec d;
    d.kind = DomainKind::siegel;
    d.q = q;
    const cplx I(0.0, 1.0);
    d.terms.push_back(mono(q, 0.5 * I, {{0, 1}}, {}));
    d.terms.push_back(mono(q, -0.5 * I, {}, {{0, 1}}));
    for (int i = 1; i < q; ++i) d.terms.push_back(mono(q, 1.0, {{i, 1}}, {{i, 1}}));
    d.center = CPoint::Zero(q);
    d.center[0] = I;
    d.circumradius = kInf;
    return d;
}

DomainSpec make_egg() {
    DomainSpec d;
    d.kind = DomainKind::egg;
    d.q = 2;
    d.terms.push_back(mono(2, 1.0, {{0, 1}}, {{0, 1}}));
    d.terms.push_back(mono(2, 1.0, {{1, 2}}, {{1, 2}}));
    d.terms.push_back(mono(2, -1.0, {}, {}));
    d.center = CPoint::Zero(2);
    d.circumradius = std::sqrt(1.25);
    return d;
}

DomainSpec make_ellipsoid(const std::vector<double>& a) {
    if (a.empty()) throw Error(ErrorKind::schema, "malformed-domain", "ellipsoid weights empty");
    DomainSpec d;
    d.kind = DomainKind::ellipsoid;
    d.q = static_cast<int>(a.size());
    d.coefficients = a;
    double amin = kInf;
    for (int i = 0; i < d.q; ++i) {
        if (!(a[i] > 0.0)) {
            throw Error(ErrorKind::schema, "malformed-domain", "ellipsoid weights must be > 0");
        }
        amin = std::min(amin, a[i]);
        d.terms.push_back(mono(d.q, a[i], {{i, 1}}, {{i, 1}}));
    }
    d.terms.push_back(mono(d.q, -1.0, {}, {}));
    d.center = CPoint::Zero(d.q);
    d.circumradius = 1.0 / std::sqrt(amin);
    return d;
}

DomainSpec make_custom(int q, std::vector<Monomial> terms, const CPoint& center,
                       double circumradius) {
    DomainSpec d;
    d.kind = DomainKind::custom;
    d.q = q;
    for (const auto& m : terms) {
        if (static_cast<int>(m.a.size()) != q || static_cast<int>(m.b.size()) != q) {
            throw Error(ErrorKind::schema, "malformed-domain", "monomial exponent length != q");
        }
    }
    d.terms = std::move(terms);
    d.center = center;
    d.circumradius = circumradius;
    if (!d.contains(center)) {
        throw Error(ErrorKind::schema, "malformed-domain", "custom center is not interior");
    }
    return d;
}

double ray_exit(const DomainSpec& d, const CPoint& from, const CPoint& dir) {
    auto phi = [&](double t) { return d.rho(from + t * dir); };
    if (phi(0.0) >= 0.0) throw Error(ErrorKind::precondition, "out-of-domain", "ray origin");
    double hi = 1.0 / std::max(dir.norm(), 1e-300);
    while (phi(hi) < 0.0) {
        hi *= 2.0;
        if (hi > 1e12) return kInf;
    }
    double lo = 0.0;
    // Newton from the right is monotone for convex rho; bisection guards the rest.
    double t = hi;
    for (int it = 0; it < 100; ++it) {
        const double v = phi(t);
        if (v < 0.0) lo = std::max(lo, t); else hi = std::min(hi, t);
        const double slope = d.gradient(from + t * dir).dot(to_real(dir));
        double next = (slope > 0.0) ? t - v / slope : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - t) <= 1e-15 * std::max(1.0, t) || hi - lo <= 1e-15 * hi) {
            t = next;
            break;
        }
        t = next;
    }
    return t;
}

CPoint project_to_boundary(const DomainSpec& d, const CPoint& z) {
    CPoint p = z;
    for (int it = 0; it < 100; ++it) {
        const double r = d.rho(p);
        const CPoint g = 2.0 * d.dbar(p);
        const double g2 = g.squaredNorm();
        if (g2 == 0.0) {
            throw Error(ErrorKind::precondition, "degenerate-boundary", "gradient vanishes");
        }
        const CPoint next = p - (r / g2) * g;
        if ((next - p).norm() < 1e-15) return next;
        p = next;
    }
    return p;
}

double boundary_distance(const DomainSpec& d, const CPoint& z) {
    require_interior(d, z, "boundary_distance point");
    if (d.kind == DomainKind::ball) return 1.0 - z.norm();
    auto f = [&](const CPoint& u) { return ray_exit(d, z, u); };
    const auto dirs = sphere_directions(d.q, 256);
    CPoint best = dirs[0];
    double bv = kInf;
    for (const auto& u : dirs) {
        const double v = f(u);
        if (v < bv) {
            bv = v;
            best = u;
        }
    }
    return f(refine_direction(f, best, false));
}

double farthest_distance(const DomainSpec& d, const CPoint& z) {
    require_interior(d, z, "farthest_distance point");
    if (!d.bounded()) return kInf;
    if (d.kind == DomainKind::ball) return 1.0 + z.norm();
    auto f = [&](const CPoint& u) { return ray_exit(d, z, u); };
    const auto dirs = sphere_directions(d.q, 256);
    CPoint best = dirs[0];
    double bv = -kInf;
    for (const auto& u : dirs) {
        const double v = f(u);
        if (v > bv) {
            bv = v;
            best = u;
        }
    }
    return f(refine_direction(f, best, true));
}

ConvexityResult strong_convexity_check(const DomainSpec& d, const CPoint& zeta) {
    require_finite(zeta, "boundary point");
    if (std::abs(d.rho(zeta)) > 1e-8) {
        throw Error(ErrorKind::precondition, "not-on-boundary", "|rho(zeta)| > 1e-8");
    }
    const CPoint p = project_to_boundary(d, zeta);
    const Eigen::VectorXd g = d.gradient(p);
    if (g.norm() < 1e-12) {
        throw Error(ErrorKind::precondition, "degenerate-boundary", "gradient vanishes");
    }
    const Eigen::Index n = g.size();
    // Orthonormal basis of the real tangent space g^perp.
    Eigen::MatrixXd Q = Eigen::MatrixXd::Identity(n, n);
    Q.col(0) = g.normalized();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(Q);
    const Eigen::MatrixXd B = Eigen::MatrixXd(qr.householderQ()).rightCols(n - 1);
    const Eigen::MatrixXd Ht = B.transpose() * d.hessian(p) * B;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Ht);
    ConvexityResult r;
    r.min_eigenvalue = es.eigenvalues().minCoeff();
    r.strongly_convex = r.min_eigenvalue > 1e-6;
    return r;
}

DomainGeometry build_geometry(const DomainSpec& d, int directions) {
    DomainGeometry g;
    g.domain = d;
    if (!d.bounded()) return g;
    const CPoint& o = d.center;
    const auto dirs = sphere_directions(d.q, directions);
    std::vector<CPoint> boundary;
    boundary.reserve(dirs.size());
    for (const auto& u : dirs) {
        const CPoint b = o + ray_exit(d, o, u) * u;
        boundary.push_back(b);
        g.hyperplanes.push_back({b, d.dbar(b).normalized()});
    }
    auto exit_point = [&](const CPoint& u) { return CPoint(o + ray_exit(d, o, u) * u); };

    auto refined_max = [&](const std::function<double(const CPoint&)>& f) {
        double bv = -kInf;
        CPoint best = dirs[0];
        for (std::size_t i = 0; i < dirs.size(); ++i) {
            const double v = f(boundary[i]);
            if (v > bv) {
                bv = v;
                best = dirs[i];
            }
        }
        const CPoint u = refine_direction([&](const CPoint& v) { return f(exit_point(v)); }, best,
                                          true, 0.05, 1e-9);
        return std::max(bv, f(exit_point(u)));
    };

    g.enclosing_radius = refined_max([&](const CPoint& b) { return (b - o).norm(); });

    std::vector<CPoint> pdirs;
    for (int j = 0; j < d.q; ++j) pdirs.push_back(unit_vector(d.q, j));
    for (const auto& u : sphere_directions(d.q, 64)) pdirs.push_back(u);
    for (const auto& n : pdirs) {
        const cplx c = inner(o, n);
        const double R = refined_max([&](const CPoint& b) { return std::abs(inner(b, n) - c); });
        g.projections.push_back({n, c, R * (1.0 + 1e-12)});
    }
    return g;
}

double disc_distance(cplx a, cplx b, cplx center, double radius) {
    CPoint x(1), y(1);
    x[0] = (a - center) / radius;
    y[0] = (b - center) / radius;
    return ball::kobayashi_ball(x, y);
}

namespace {

/// Largest r with D(c, r) inside the slice {zeta : z + zeta v in domain}.
double slice_inradius(const DomainSpec& d, const CPoint& z, const CPoint& v, cplx c) {
    const CPoint base = z + c * v;
    if (!d.contains(base)) return 0.0;
    const int n = 64;
    auto f = [&](double th) { return ray_exit(d, base, CPoint(std::polar(1.0, th) * v)); };
    double best = kInf, bt = 0.0;
    for (int i = 0; i < n; ++i) {
        const double th = 2 * std::numbers::pi * i / n;
        const double r = f(th);
        if (r < best) {
            best = r;
            bt = th;
        }
    }
    const double h = 2 * std::numbers::pi / n;
    const double t = golden_section_min(f, bt - h, bt + h, 1e-10);
    return std::min(best, f(t)) * (1.0 - 1e-10);
}

SandwichBound slice_upper(const DomainSpec& d, const CPoint& z, const CPoint& w) {
    SandwichBound out;
    const double dist = (w - z).norm();
    const CPoint v = (w - z) / dist;
    if (d.is_quadric()) {
        const auto a = ellipsoid_weights(d);
        double alpha = 0.0;
        cplx beta = 0.0;
        for (int i = 0; i < d.q; ++i) {
            alpha += a[i] * std::norm(v[i]);
            beta += a[i] * v[i] * std::conj(z[i]);
        }
        const double gamma = d.rho(z);
        const cplx c = -std::conj(beta) / alpha;
        const double r = std::sqrt(std::norm(beta) / (alpha * alpha) - gamma / alpha);
        out.upper = disc_distance(0.0, dist, c, r);
        out.upper_witness = "slice-disc exact";
        return out;
    }
    auto objective = [&](cplx c) {
        const double r = slice_inradius(d, z, v, c);
        if (std::abs(c) >= r || std::abs(c - dist) >= r) return kInf;
        return disc_distance(0.0, dist, c, r);
    };
    cplx best_c = 0.5 * dist;
    double best = objective(best_c);
    for (int i = 0; i <= 8; ++i) {
        const cplx c = dist * (i / 8.0);
        const double val = objective(c);
        if (val < best) {
            best = val;
            best_c = c;
        }
    }
    double step = 0.25 * std::max(dist, slice_inradius(d, z, v, best_c));
    while (step > 1e-7 * std::max(dist, 1e-3)) {
        bool improved = false;
        for (cplx dir : {cplx(1, 0), cplx(-1, 0), cplx(0, 1), cplx(0, -1)}) {
            const cplx c = best_c + step * dir;
            const double val = objective(c);
            if (val < best) {
                best = val;
                best_c = c;
                improved = true;
            }
        }
        step *= improved ? 2.0 : 0.5;
    }
    out.upper = best;
    out.upper_found = std::isfinite(best);
    std::ostringstream os;
    os << "slice-disc center " << best_c.real() << "+" << best_c.imag() << "i";
    out.upper_witness = out.upper_found ? os.str() : "no containing disc";
    return out;
}

}  // namespace

SandwichBound kobayashi_sandwich(const DomainGeometry& g, const CPoint& z, const CPoint& w) {
    const DomainSpec& d = g.domain;
    require_interior(d, z, "sandwich z");
    require_interior(d, w, "sandwich w");
    SandwichBound s;
    if ((z - w).norm() == 0.0) {
        s.lower_witness = s.upper_witness = "coincident";
        return s;
    }
    if (d.kind == DomainKind::siegel) {
        s.lower = s.upper = ball::kobayashi_siegel(z, w);
        s.lower_witness = s.upper_witness = "siegel-exact";
        return s;
    }
    double lower = 0.0;
    std::string lw = "none";
    for (std::size_t i = 0; i < g.hyperplanes.size(); ++i) {
        const auto& h = g.hyperplanes[i];
        const double v = half_plane_distance(-inner(z - h.point, h.normal),
                                             -inner(w - h.point, h.normal));
        if (std::isfinite(v) && v > lower) {
            lower = v;
            lw = "half-plane #" + std::to_string(i);
        }
    }
    for (std::size_t i = 0; i < g.projections.size(); ++i) {
        const auto& p = g.projections[i];
        const cplx a = inner(z, p.direction), b = inner(w, p.direction);
        if (std::abs(a - p.center) >= p.radius || std::abs(b - p.center) >= p.radius) continue;
        const double v = disc_distance(a, b, p.center, p.radius);
        if (v > lower) {
            lower = v;
            lw = "projection-disc #" + std::to_string(i);
        }
    }
    if (g.enclosing_radius > 0.0) {
        const CPoint zz = (z - d.center) / g.enclosing_radius;
        const CPoint ww = (w - d.center) / g.enclosing_radius;
        if (zz.norm() < 1.0 && ww.norm() < 1.0) {
            const double v = ball::kobayashi_ball(zz, ww);
            if (v > lower) {
                lower = v;
                lw = "enclosing-ball";
            }
        }
    }
    if (d.is_quadric()) {
        const double v = quadric_distance(d, z, w);
        if (v >= lower) {
            lower = v;
            lw = "enclosing-ellipsoid exact";
        }
    }
    auto up = slice_upper(d, z, w);
    s.lower = lower;
    s.lower_witness = lw;
    s.upper = up.upper;
    s.upper_witness = up.upper_witness;
    s.upper_found = up.upper_found;
    if (s.lower > s.upper) {
        // Rounding on exact quadric pairs; bounds coincide.
        if (s.lower - s.upper < 1e-9 * std::max(1.0, s.upper)) {
            s.lower = s.upper;
        } else {
            throw Error(ErrorKind::invariant_violation, "sandwich-inverted",
                        "lower bound exceeds upper bound");
        }
    }
    return s;
}

SandwichBound kobayashi_sandwich(const DomainSpec& d, const CPoint& z, const CPoint& w) {
    return kobayashi_sandwich(build_geometry(d), z, w);
}

CPoint SqueezeEmbedding::operator()(const CPoint& w) const {
    return ball::mobius(a, CPoint(L * (w - c) / s));
}

namespace {

struct SqueezeProblem {
    const DomainSpec& d;
    CPoint z;
    CMatrix boundary;  // ray exits from z, one per column

    SqueezeEmbedding make(const CMatrix& L, const CPoint& c) const {
        SqueezeEmbedding e{L, c, 1.0, CPoint::Zero(d.q)};
        e.s = std::sqrt((L * (boundary.colwise() - c)).colwise().squaredNorm().maxCoeff());
        e.a = L * (z - c) / e.s;
        return e;
    }

    /// min |phi_a(y)| over samples, from 1 - |phi_a(y)|^2 = (1-|a|^2)(1-|y|^2)/|1-<y,a>|^2.
    double inner(const SqueezeEmbedding& e) const {
        const double na = e.a.squaredNorm();
        if (na >= 1.0) return 0.0;
        const CMatrix Y = e.L * (boundary.colwise() - e.c) / e.s;
        const Eigen::RowVectorXd ny = Y.colwise().squaredNorm();
        const Eigen::RowVectorXcd ya = e.a.adjoint() * Y;
        double worst = 0.0;
        for (Eigen::Index i = 0; i < Y.cols(); ++i) {
            const double m = (1.0 - na) * (1.0 - ny[i]) / std::norm(1.0 - ya[i]);
            worst = std::max(worst, m);
        }
        return std::sqrt(std::max(0.0, 1.0 - worst));
    }
};

CPoint exit_from(const DomainSpec& d, const CPoint& z, const CPoint& u) {
    return z + ray_exit(d, z, u) * u;
}

}  // namespace

SqueezeCertificate squeeze_lower(const DomainSpec& d, const CPoint& z, const SqueezeBudget& budget,
                                 const SqueezeEmbedding* warm_start) {
    require_interior(d, z, "squeeze point");
    if (!d.bounded()) throw Error(ErrorKind::precondition, "unbounded-domain", "squeeze");
    SqueezeCertificate cert;
    cert.baseline = boundary_distance(d, z) / farthest_distance(d, z);

    SqueezeProblem prob{d, z, CMatrix(d.q, budget.boundary_samples)};
    {
        const auto dirs = sphere_directions(d.q, budget.boundary_samples);
        for (int i = 0; i < budget.boundary_samples; ++i) prob.boundary.col(i) = exit_from(d, z, dirs[i]);
    }
    const int q = d.q;
    struct Candidate {
        CMatrix L;
        CPoint c;
        double value;
    };
    std::vector<Candidate> starts;
    starts.push_back({CMatrix::Identity(q, q), z, 0.0});
    starts.push_back({CMatrix::Identity(q, q), d.center, 0.0});
    if (warm_start != nullptr) starts.push_back({warm_start->L, warm_start->c, 0.0});
    Candidate best{CMatrix::Identity(q, q), z, -1.0};
    for (auto& s : starts) {
        s.value = prob.inner(prob.make(s.L, s.c));
        if (s.value > best.value) best = s;
    }

    // Coordinate descent over Re/Im of L entries and c.
    const int nparams = 2 * q * q + 2 * q;
    auto apply = [&](const Candidate& base, int k, double delta) {
        Candidate c = base;
        if (k < 2 * q * q) {
            const int e = k / 2;
            const cplx inc = (k % 2 == 0) ? cplx(delta, 0) : cplx(0, delta);
            c.L(e / q, e % q) += inc;
        } else {
            const int e = (k - 2 * q * q) / 2;
            const cplx inc = (k % 2 == 0) ? cplx(delta, 0) : cplx(0, delta);
            c.c[e] += inc;
        }
        return c;
    };
    double step = 0.05;
    for (int it = 0; it < budget.iterations && step > 1e-7; ++it) {
        bool improved = false;
        for (int k = 0; k < nparams; ++k) {
            for (double sgn : {1.0, -1.0}) {
                Candidate c = apply(best, k, sgn * step);
                if (std::abs(c.L.determinant()) < 1e-8) continue;
                c.value = prob.inner(prob.make(c.L, c.c));
                if (c.value > best.value) {
                    best = c;
                    improved = true;
                }
            }
        }
        if (!improved) step *= 0.5;
    }

    // Refine the sampled extremes so the certificate does not rely on sample spacing.
    SqueezeEmbedding e = prob.make(best.L, best.c);
    {
        CPoint ubest = sphere_directions(q, budget.boundary_samples)[0];
        double bv = -kInf;
        for (const auto& u : sphere_directions(q, budget.boundary_samples)) {
            const double v = (e.L * (exit_from(d, z, u) - e.c)).norm();
            if (v > bv) {
                bv = v;
                ubest = u;
            }
        }
        auto f = [&](const CPoint& u) { return (e.L * (exit_from(d, z, u) - e.c)).norm(); };
        e.s = std::max(e.s, f(refine_direction(f, ubest, true, 0.02, 1e-10))) * (1.0 + 1e-12);
        e.a = e.L * (z - e.c) / e.s;
    }
    double inner_r = kInf;
    {
        CPoint ubest = sphere_directions(q, budget.boundary_samples)[0];
        for (const auto& u : sphere_directions(q, budget.boundary_samples)) {
            const double v = e(exit_from(d, z, u)).norm();
            if (v < inner_r) {
                inner_r = v;
                ubest = u;
            }
        }
        auto f = [&](const CPoint& u) { return e(exit_from(d, z, u)).norm(); };
        inner_r = std::min(inner_r, f(refine_direction(f, ubest, false, 0.02, 1e-10)));
    }

    // Independent verification on fresh random boundary samples.
    SeededSampler rng(budget.seed, q);
    double max_norm = 0.0;
    for (int i = 0; i < budget.verification_samples; ++i) {
        const double v = e(exit_from(d, z, rng.sphere(q))).norm();
        max_norm = std::max(max_norm, v);
        inner_r = std::min(inner_r, v);
    }
    cert.verified_samples = budget.verification_samples;
    cert.max_image_norm = max_norm;
    if (max_norm > 1.0 + 1e-12) {
        // The image escaped the ball on a verification sample: fall back to the baseline.
        SqueezeEmbedding base{CMatrix::Identity(q, q), z, farthest_distance(d, z),
                              CPoint::Zero(q)};
        cert.embedding = base;
        cert.inner_radius = cert.baseline;
        return cert;
    }
    cert.embedding = e;
    cert.inner_radius = std::min(1.0, inner_r);
    if (cert.inner_radius < cert.baseline) {
        cert.embedding = SqueezeEmbedding{CMatrix::Identity(q, q), z, farthest_distance(d, z),
                                          CPoint::Zero(q)};
        cert.inner_radius = cert.baseline;
    } else {
        cert.improved = cert.inner_radius > cert.baseline;
    }
    return cert;
}

SqueezeTrend squeeze_trend(const DomainSpec& d, const CPoint& zeta, const CPoint& inward,
                           int n_points, double r0, const SqueezeBudget& budget) {
    SqueezeTrend t;
    t.weakly_convex_center = !strong_convexity_check(d, zeta).strongly_convex;
    const CPoint u = inward.normalized();
    SqueezeEmbedding prev;
    bool have_prev = false;
    for (int j = 0; j < n_points; ++j) {
        const CPoint z = zeta + r0 * std::ldexp(1.0, -j) * u;
        const auto c = squeeze_lower(d, z, budget, have_prev ? &prev : nullptr);
        prev = c.embedding;
        have_prev = true;
        t.points.push_back({boundary_distance(d, z), c.inner_radius, c.baseline});
        if (j > 0 && c.inner_radius < t.points[j - 1].squeeze - 1e-3) t.non_decreasing = false;
    }
    return t;
}

HoroEstimate horo_value_general(const DomainGeometry& g, const CPoint& pole, const CPoint& zeta,
                                const CPoint& z, int max_steps, int window, double tol) {
    const DomainSpec& d = g.domain;
    require_interior(d, pole, "horosphere pole");
    require_interior(d, z, "horosphere point");
    HoroEstimate h;
    if ((z - pole).norm() == 0.0) {
        h.value = 1.0;
        h.evidence.values = {0.0};
        h.evidence.converged = true;
        h.evidence.limit = 0.0;
        return h;
    }
    std::vector<double> values;
    for (int j = 1; j <= max_steps; ++j) {
        const CPoint w = zeta + std::ldexp(1.0, -j) * (pole - zeta);
        if (d.kind == DomainKind::ball && 1.0 - w.norm() < kBoundaryGuard) break;
        const auto a = kobayashi_sandwich(g, z, w);
        const auto b = kobayashi_sandwich(g, pole, w);
        h.gap = std::max({h.gap, a.gap(), b.gap()});
        values.push_back(a.mid() - b.mid());
        if (static_cast<int>(values.size()) >= window) {
            auto r = detect_limit(values, window, tol + h.gap);
            if (r.converged) {
                h.evidence = r;
                h.value = std::exp(*r.limit);
                return h;
            }
        }
    }
    h.evidence.values = values;
    h.evidence.window = window;
    h.evidence.tol = tol;
    throw Error(ErrorKind::non_convergence, "non-convergent-limit",
                "horosphere limit did not settle within " + std::to_string(max_steps) + " steps");
}

}  // namespace holokit
