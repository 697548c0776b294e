#include "holokit/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace holokit {

bool is_finite(const CPoint& z) {
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        if (!std::isfinite(z[i].real()) || !std::isfinite(z[i].imag())) return false;
    }
    return true;
}

void require_finite(const CPoint& z, const char* what) {
    if (!is_finite(z)) {
        throw Error(ErrorKind::precondition, "non-finite-point", std::string(what));
    }
}

cplx inner(const CPoint& z, const CPoint& w) {
    cplx s = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) s += z[i] * std::conj(w[i]);
    return s;
}

CPoint unit_vector(int q, int i) {
    CPoint e = CPoint::Zero(q);
    e[i] = 1.0;
    return e;
}

ConvergenceReport detect_limit(const std::vector<double>& values, int window, double tol) {
    if (window < 2 || !(tol > 0.0)) {
        throw Error(ErrorKind::precondition, "invalid-window", "window >= 2 and tol > 0 required");
    }
    if (static_cast<int>(values.size()) < window) {
        throw Error(ErrorKind::non_convergence, "not-enough-data",
                    "have " + std::to_string(values.size()) + " values, window " +
                        std::to_string(window));
    }
    ConvergenceReport rep;
    rep.values = values;
    rep.window = window;
    rep.tol = tol;
    const auto first = values.end() - window;
    double lo = *first, hi = *first, sum = 0.0;
    for (auto it = first; it != values.end(); ++it) {
        if (!std::isfinite(*it)) {
            throw Error(ErrorKind::precondition, "non-finite-value", "detect_limit input");
        }
        lo = std::min(lo, *it);
        hi = std::max(hi, *it);
        sum += *it;
    }
    rep.converged = (hi - lo) <= tol;
    if (rep.converged) rep.limit = sum / window;
    return rep;
}

PointConvergence detect_point_limit(const std::vector<CPoint>& values, int window, double tol) {
    if (values.empty()) {
        throw Error(ErrorKind::non_convergence, "not-enough-data", "empty point sequence");
    }
    const Eigen::Index q = values.front().size();
    PointConvergence out;
    out.limit = CPoint::Zero(q);
    out.converged = true;
    std::vector<double> re(values.size()), im(values.size());
    for (Eigen::Index c = 0; c < q; ++c) {
        for (std::size_t k = 0; k < values.size(); ++k) {
            re[k] = values[k][c].real();
            im[k] = values[k][c].imag();
        }
        const auto r = detect_limit(re, window, tol);
        const auto i = detect_limit(im, window, tol);
        const auto spread = [&](const std::vector<double>& v) {
            auto [mn, mx] = std::minmax_element(v.end() - window, v.end());
            return *mx - *mn;
        };
        out.spread = std::max({out.spread, spread(re), spread(im)});
        out.converged = out.converged && r.converged && i.converged;
        out.limit[c] = cplx(r.converged ? *r.limit : re.back(), i.converged ? *i.limit : im.back());
    }
    return out;
}

double monotone_liminf(const std::vector<double>& values, LiminfMode mode, double tol) {
    if (values.empty()) {
        throw Error(ErrorKind::precondition, "empty-sequence", "monotone_liminf needs values");
    }
    for (double v : values) {
        if (!std::isfinite(v)) throw Error(ErrorKind::precondition, "non-finite-value", "liminf");
    }
    if (mode == LiminfMode::liminf_tail) {
        const std::size_t tail = std::max<std::size_t>(kDefaultWindow, values.size() / 4);
        const std::size_t start = values.size() > tail ? values.size() - tail : 0;
        return *std::min_element(values.begin() + static_cast<std::ptrdiff_t>(start), values.end());
    }
    // Direction is fixed by the first strict move larger than tol.
    int dir = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        const double d = values[i] - values[i - 1];
        if (dir == 0) {
            if (d > tol) dir = 1;
            else if (d < -tol) dir = -1;
        } else if (dir * d < -tol) {
            throw Error(ErrorKind::invariant_violation, "monotonicity-violation",
                        "first offending index " + std::to_string(i));
        }
    }
    return values.back();
}

CMatrix numerical_jacobian(const PointMap& f, const CPoint& z, double h) {
    const Eigen::Index q = z.size();
    const CPoint f0 = f(z);
    CMatrix J(f0.size(), q);
    const cplx I(0.0, 1.0);
    for (Eigen::Index j = 0; j < q; ++j) {
        CPoint zp = z, zm = z, zpi = z, zmi = z;
        zp[j] += h;
        zm[j] -= h;
        zpi[j] += I * h;
        zmi[j] -= I * h;
        // Wirtinger derivative d/dz = (d/dx - i d/dy) / 2.
        const CPoint dx = (f(zp) - f(zm)) / (2.0 * h);
        const CPoint dy = (f(zpi) - f(zmi)) / (2.0 * h);
        J.col(j) = 0.5 * (dx - I * dy);
    }
    return J;
}

namespace {

std::uint64_t splitmix(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

SeededSampler::SeededSampler(std::uint64_t seed, int dimension)
    : seed_(seed), dimension_(dimension) {
    std::uint64_t x = seed;
    for (auto& s : s_) s = splitmix(x);
}

std::uint64_t SeededSampler::next_u64() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double SeededSampler::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double SeededSampler::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double SeededSampler::normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

CPoint SeededSampler::gaussian(int q) {
    CPoint z(q);
    for (int i = 0; i < q; ++i) {
        const double a = normal();
        const double b = normal();
        z[i] = cplx(a, b);
    }
    return z;
}

CPoint SeededSampler::sphere(int q) {
    CPoint z = gaussian(q);
    double n = z.norm();
    while (n < 1e-300) {
        z = gaussian(q);
        n = z.norm();
    }
    return z / n;
}

CPoint SeededSampler::ball(int q, double radius) {
    const CPoint d = sphere(q);
    const double r = radius * std::pow(uniform(), 1.0 / (2.0 * q));
    return r * d;
}

CMatrix SeededSampler::unitary(int q) {
    CMatrix A(q, q);
    for (int j = 0; j < q; ++j) A.col(j) = gaussian(q);
    Eigen::HouseholderQR<CMatrix> qr(A);
    CMatrix Q = qr.householderQ();
    const CMatrix R = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int j = 0; j < q; ++j) {
        const double a = std::abs(R(j, j));
        if (a > 0) Q.col(j) *= R(j, j) / a;
    }
    return Q;
}

std::vector<CPoint> sphere_directions(int q, int n) {
    // Generalized golden ratio for a 2q-dimensional Kronecker sequence.
    const int d = 2 * q;
    double phi = 2.0;
    for (int i = 0; i < 64; ++i) phi = std::pow(1.0 + phi, 1.0 / (d + 1));
    std::vector<double> alpha(d);
    for (int i = 0; i < d; ++i) alpha[i] = std::fmod(std::pow(1.0 / phi, i + 1), 1.0);
    std::vector<CPoint> out;
    out.reserve(n);
    for (int k = 0; k < n; ++k) {
        std::vector<double> u(d);
        for (int i = 0; i < d; ++i) {
            u[i] = std::fmod(0.5 + alpha[i] * (k + 1), 1.0);
            u[i] = std::clamp(u[i], 1e-12, 1.0 - 1e-12);
        }
        CPoint z(q);
        for (int i = 0; i < q; ++i) {
            const double r = std::sqrt(-2.0 * std::log(u[2 * i]));
            const double t = 2.0 * std::numbers::pi * u[2 * i + 1];
            z[i] = cplx(r * std::cos(t), r * std::sin(t));
        }
        out.push_back(z / z.norm());
    }
    return out;
}

double golden_section_min(const std::function<double(double)>& f, double a, double b,
                          double tol) {
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - g * (b - a);
    double d = a + g * (b - a);
    double fc = f(c), fd = f(d);
    while (std::abs(b - a) > tol) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    return 0.5 * (a + b);
}

double bisect_last_true(const std::function<bool(double)>& pred, double lo, double hi,
                        double tol, int max_iter) {
    if (pred(hi)) return hi;
    for (int i = 0; i < max_iter && hi - lo > tol; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (pred(mid)) lo = mid;
        else hi = mid;
    }
    return lo;
}

CMatrix gauge_unitary(const CMatrix& J) {
    Eigen::JacobiSVD<CMatrix> svd(J, Eigen::ComputeFullU | Eigen::ComputeFullV);
    return svd.matrixV() * svd.matrixU().adjoint();
}

}  // namespace holokit
