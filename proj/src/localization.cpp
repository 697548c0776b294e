#include "holokit/localization.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace holokit {

namespace {

const cplx I(0.0, 1.0);
constexpr double kInf = std::numeric_limits<double>::infinity();

void check_vars(const TruncatedSeries& a, const TruncatedSeries& b) {
    if (a.variables() != b.variables()) {
        throw Error(ErrorKind::precondition, "incompatible-variables",
                    "series over " + std::to_string(a.variables()) + " and " +
                        std::to_string(b.variables()) + " variables");
    }
}

cplx ipow(cplx z, int k) {
    cplx r = 1.0;
    for (int i = 0; i < k; ++i) r *= z;
    return r;
}

}  // namespace

int degree(const Exponent& e) { return std::accumulate(e.begin(), e.end(), 0); }

TruncatedSeries TruncatedSeries::constant(int variables, cplx c) {
    TruncatedSeries s(variables);
    s.add_term(Exponent(variables, 0), c);
    return s;
}

TruncatedSeries TruncatedSeries::variable(int variables, int index, cplx c) {
    if (index < 0 || index >= variables) {
        throw Error(ErrorKind::precondition, "bad-variable", "variable index out of range");
    }
    TruncatedSeries s(variables);
    Exponent e(variables, 0);
    e[index] = 1;
    s.add_term(e, c);
    return s;
}

cplx TruncatedSeries::coeff(const Exponent& e) const {
    const auto it = terms_.find(e);
    return it == terms_.end() ? cplx(0.0) : it->second;
}

void TruncatedSeries::add_term(const Exponent& e, cplx c) {
    if (static_cast<int>(e.size()) != n_) {
        throw Error(ErrorKind::precondition, "incompatible-variables", "exponent length");
    }
    if (degree(e) > kDegree) {
        ++discarded_;
        return;
    }
    if (c == cplx(0.0)) return;
    terms_[e] += c;
}

TruncatedSeries TruncatedSeries::homogeneous(int d) const {
    TruncatedSeries s(n_);
    for (const auto& [e, c] : terms_) {
        if (degree(e) == d) s.terms_[e] = c;
    }
    return s;
}

cplx TruncatedSeries::evaluate(const std::vector<cplx>& x) const {
    if (static_cast<int>(x.size()) != n_) {
        throw Error(ErrorKind::precondition, "incompatible-variables", "evaluation point size");
    }
    cplx s = 0.0;
    for (const auto& [e, c] : terms_) {
        cplx t = c;
        for (int i = 0; i < n_; ++i) t *= ipow(x[i], e[i]);
        s += t;
    }
    return s;
}

cplx TruncatedSeries::evaluate(const CPoint& x) const {
    return evaluate(std::vector<cplx>(x.data(), x.data() + x.size()));
}

double TruncatedSeries::max_abs(int lo, int hi) const {
    double m = 0.0;
    for (const auto& [e, c] : terms_) {
        const int d = degree(e);
        if (d >= lo && d <= hi) m = std::max(m, std::abs(c));
    }
    return m;
}

void TruncatedSeries::prune(double tol) {
    for (auto it = terms_.begin(); it != terms_.end();) {
        it = std::abs(it->second) <= tol ? terms_.erase(it) : std::next(it);
    }
}

TruncatedSeries& TruncatedSeries::operator+=(const TruncatedSeries& o) {
    check_vars(*this, o);
    for (const auto& [e, c] : o.terms_) terms_[e] += c;
    discarded_ += o.discarded_;
    return *this;
}

TruncatedSeries& TruncatedSeries::operator-=(const TruncatedSeries& o) {
    check_vars(*this, o);
    for (const auto& [e, c] : o.terms_) terms_[e] -= c;
    discarded_ += o.discarded_;
    return *this;
}

TruncatedSeries& TruncatedSeries::operator*=(cplx s) {
    for (auto& [e, c] : terms_) c *= s;
    return *this;
}

TruncatedSeries operator*(const TruncatedSeries& a, const TruncatedSeries& b) {
    check_vars(a, b);
    TruncatedSeries r(a.n_);
    r.discarded_ = a.discarded_ + b.discarded_;
    Exponent e(a.n_);
    for (const auto& [ea, ca] : a.terms_) {
        const int da = degree(ea);
        for (const auto& [eb, cb] : b.terms_) {
            if (da + degree(eb) > TruncatedSeries::kDegree) {
                ++r.discarded_;
                continue;
            }
            for (int i = 0; i < a.n_; ++i) e[i] = ea[i] + eb[i];
            r.terms_[e] += ca * cb;
        }
    }
    return r;
}

TruncatedSeries compose(const TruncatedSeries& f, const std::vector<TruncatedSeries>& subs) {
    if (static_cast<int>(subs.size()) != f.variables() || subs.empty()) {
        throw Error(ErrorKind::precondition, "incompatible-variables",
                    "one substitution per variable required");
    }
    const int m = subs[0].variables();
    for (const auto& s : subs) {
        if (s.variables() != m) {
            throw Error(ErrorKind::precondition, "incompatible-variables", "substitution variables");
        }
        if (std::abs(s.coeff(Exponent(m, 0))) != 0.0) {
            throw Error(ErrorKind::precondition, "substitution-constant-term",
                        "substitutions must vanish at the origin");
        }
    }
    // powers[i][k] = subs_i^k
    std::vector<std::vector<TruncatedSeries>> powers(subs.size());
    for (std::size_t i = 0; i < subs.size(); ++i) {
        powers[i].push_back(TruncatedSeries::constant(m, 1.0));
        for (int k = 1; k <= TruncatedSeries::kDegree; ++k) {
            powers[i].push_back(powers[i].back() * subs[i]);
        }
    }
    TruncatedSeries r(m);
    for (const auto& [e, c] : f.terms()) {
        TruncatedSeries t = TruncatedSeries::constant(m, c);
        for (std::size_t i = 0; i < subs.size(); ++i) {
            if (e[i] > 0) t = t * powers[i][e[i]];
        }
        r += t;
    }
    return r;
}

CMatrix linear_part(const std::vector<TruncatedSeries>& map) {
    const int n = map.empty() ? 0 : map[0].variables();
    CMatrix L = CMatrix::Zero(static_cast<Eigen::Index>(map.size()), n);
    for (std::size_t i = 0; i < map.size(); ++i) {
        for (int j = 0; j < n; ++j) {
            Exponent e(n, 0);
            e[j] = 1;
            L(static_cast<Eigen::Index>(i), j) = map[i].coeff(e);
        }
    }
    return L;
}

namespace {

void require_invertible(const std::vector<TruncatedSeries>& map) {
    const CMatrix L = linear_part(map);
    if (L.rows() != L.cols() || L.rows() == 0) {
        throw Error(ErrorKind::precondition, "non-invertible-substitution", "linear part is not square");
    }
    const Eigen::JacobiSVD<CMatrix> svd(L);
    const auto& s = svd.singularValues();
    if (!(s(s.size() - 1) > 1e-12 * std::max(1.0, s(0)))) {
        throw Error(ErrorKind::precondition, "non-invertible-substitution",
                    "linear part is singular (smallest singular value " +
                        std::to_string(s(s.size() - 1)) + ")");
    }
}

std::vector<TruncatedSeries> apply_matrix(const CMatrix& A, const std::vector<TruncatedSeries>& v) {
    const int n = v.empty() ? 0 : v[0].variables();
    std::vector<TruncatedSeries> out;
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
        TruncatedSeries s(n);
        for (Eigen::Index j = 0; j < A.cols(); ++j) s += v[static_cast<std::size_t>(j)] * A(i, j);
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace

TruncatedSeries change_variables(const TruncatedSeries& f, const std::vector<TruncatedSeries>& subs) {
    require_invertible(subs);
    return compose(f, subs);
}

std::vector<TruncatedSeries> invert_map(const std::vector<TruncatedSeries>& map) {
    require_invertible(map);
    const int n = map[0].variables();
    const CMatrix Linv = linear_part(map).inverse();
    std::vector<TruncatedSeries> u, nonlinear;
    for (int i = 0; i < n; ++i) {
        u.push_back(TruncatedSeries::variable(n, i));
        TruncatedSeries s = map[static_cast<std::size_t>(i)];
        s -= s.homogeneous(1);
        nonlinear.push_back(std::move(s));
    }
    std::vector<TruncatedSeries> W = apply_matrix(Linv, u);
    for (int it = 0; it < TruncatedSeries::kDegree; ++it) {
        std::vector<TruncatedSeries> rhs;
        for (int i = 0; i < n; ++i) rhs.push_back(u[i] - compose(nonlinear[i], W));
        W = apply_matrix(Linv, rhs);
    }
    return W;
}

// ---------------------------------------------------------------------------
// Normal form at a boundary point.
//
// Real-split variables over C^q: index 0 = Re w1, 1 = Im w1, 1 + k = w_{k+1},
// q + k = conj w_{k+1} for k = 1..q-1.

namespace {

struct Split {
    int q;
    [[nodiscard]] int n() const { return 2 * q; }
    [[nodiscard]] int w(int k) const { return 1 + k; }      // k = 1..q-1
    [[nodiscard]] int wbar(int k) const { return q + k; }
    [[nodiscard]] TruncatedSeries var(int i) const { return TruncatedSeries::variable(n(), i); }
    /// Re w1 + i Im w1
    [[nodiscard]] TruncatedSeries w1() const { return var(0) + var(1) * I; }
};

TruncatedSeries split_conj(const Split& sp, const TruncatedSeries& s) {
    TruncatedSeries r(sp.n());
    for (const auto& [e, c] : s.terms()) {
        Exponent f = e;
        for (int k = 1; k < sp.q; ++k) std::swap(f[sp.w(k)], f[sp.wbar(k)]);
        r.add_term(f, std::conj(c));
    }
    return r;
}

/// Holomorphic series in (w1, ..., wq) rewritten in split variables.
TruncatedSeries lift(const Split& sp, const TruncatedSeries& h) {
    std::vector<TruncatedSeries> subs{sp.w1()};
    for (int k = 1; k < sp.q; ++k) subs.push_back(sp.var(sp.w(k)));
    return compose(h, subs);
}

/// Split-variable substitution induced by the holomorphic change of coordinates phi.
std::vector<TruncatedSeries> split_substitution(const Split& sp, const std::vector<TruncatedSeries>& phi) {
    std::vector<TruncatedSeries> L;
    for (const auto& p : phi) L.push_back(lift(sp, p));
    const TruncatedSeries c1 = split_conj(sp, L[0]);
    std::vector<TruncatedSeries> subs{(L[0] + c1) * 0.5, (L[0] - c1) * (-0.5 * I)};
    for (int k = 1; k < sp.q; ++k) subs.push_back(L[static_cast<std::size_t>(k)]);
    for (int k = 1; k < sp.q; ++k) subs.push_back(split_conj(sp, L[static_cast<std::size_t>(k)]));
    return subs;
}

/// rho(zeta + A v) in split variables of v.
TruncatedSeries expand_defining(const DomainSpec& d, const CPoint& zeta, const CMatrix& A, const Split& sp) {
    std::vector<TruncatedSeries> z, zb;
    for (int i = 0; i < d.q; ++i) {
        TruncatedSeries s = TruncatedSeries::constant(sp.n(), zeta[i]) + sp.w1() * A(i, 0);
        for (int k = 1; k < d.q; ++k) s += sp.var(sp.w(k)) * A(i, k);
        zb.push_back(split_conj(sp, s));
        z.push_back(std::move(s));
    }
    TruncatedSeries rho(sp.n());
    for (const auto& m : d.terms) {
        TruncatedSeries t = TruncatedSeries::constant(sp.n(), m.coeff);
        for (int i = 0; i < d.q; ++i) {
            for (int k = 0; k < m.a[i]; ++k) t = t * z[i];
            for (int k = 0; k < m.b[i]; ++k) t = t * zb[i];
        }
        rho += t;
    }
    // Real part: the defining polynomial is real on C^q.
    return (rho + split_conj(sp, rho)) * 0.5;
}

/// Height F(Re w1, w') of the boundary {-Im w1 + G = 0}, given psi = -Im w1 + G.
TruncatedSeries graph_height(const Split& sp, const TruncatedSeries& psi) {
    TruncatedSeries G = psi + sp.var(1);
    G.add_term(Exponent(sp.n(), 0), -G.coeff(Exponent(sp.n(), 0)));
    const TruncatedSeries lin = G.homogeneous(1);
    if (lin.max_abs() > 1e-10) {
        throw Error(ErrorKind::invariant_violation, "chart-construction",
                    "linear part is not -Im w1 (deviation " + std::to_string(lin.max_abs()) + ")");
    }
    G -= lin;
    G.prune();
    TruncatedSeries Y(sp.n());
    for (int it = 0; it <= TruncatedSeries::kDegree; ++it) {
        std::vector<TruncatedSeries> subs;
        for (int i = 0; i < sp.n(); ++i) subs.push_back(i == 1 ? Y : sp.var(i));
        Y = compose(G, subs);
    }
    return Y;
}

struct Parts {
    int a = 0;        // power of Re w1
    int beta = 0;     // total power of w'
    int gamma = 0;    // total power of conj w'
};

Parts parts(const Split& sp, const Exponent& e) {
    Parts p;
    p.a = e[0];
    for (int k = 1; k < sp.q; ++k) {
        p.beta += e[sp.w(k)];
        p.gamma += e[sp.wbar(k)];
    }
    return p;
}

/// Holomorphic exponent (w1^a w'^beta) from a split exponent without conj factors.
Exponent holo_exponent(const Split& sp, const Exponent& e) {
    Exponent h(sp.q, 0);
    h[0] = e[0];
    for (int k = 1; k < sp.q; ++k) h[k] = e[sp.w(k)];
    return h;
}

std::vector<TruncatedSeries> identity_map_series(int q) {
    std::vector<TruncatedSeries> id;
    for (int i = 0; i < q; ++i) id.push_back(TruncatedSeries::variable(q, i));
    return id;
}

/// Index k of the single conj factor of a split exponent with gamma = 1.
int conj_index(const Split& sp, const Exponent& e) {
    int k = 1;
    while (e[sp.wbar(k)] == 0) ++k;
    return k;
}

/// Mean over the unit sphere of C^{q-1} of the (2,2) part of F_4.
double sphere_mean_22(const Split& sp, const TruncatedSeries& F4) {
    const double n = sp.q - 1;
    double mean = 0.0;
    for (const auto& [e, c] : F4.terms()) {
        const Parts p = parts(sp, e);
        if (p.a != 0 || p.beta != 2 || p.gamma != 2) continue;
        bool diagonal = true;
        int square = 0;
        for (int k = 1; k < sp.q; ++k) {
            if (e[sp.w(k)] != e[sp.wbar(k)]) diagonal = false;
            if (e[sp.w(k)] == 2) square = 1;
        }
        if (diagonal) mean += c.real() * (square ? 2.0 : 1.0) / (n * (n + 1.0));
    }
    return mean;
}

/// w_k -> w_k + i alpha w1 w_k - (alpha^2 / 2) w1^2 w_k: lowers F by 2 alpha ||w'||^4 on the
/// graph, the second term cancelling alpha^2 |Re w1|^2 ||w'||^2.
void add_trace_shear(const Split& sp, std::vector<TruncatedSeries>& phi, double alpha) {
    for (int k = 1; k < sp.q; ++k) {
        Exponent he(sp.q, 0);
        he[0] = 1;
        he[k] = 1;
        phi[static_cast<std::size_t>(k)].add_term(he, I * alpha);
        he[0] = 2;
        phi[static_cast<std::size_t>(k)].add_term(he, -0.5 * alpha * alpha);
    }
}

/// Holomorphic change v = phi(w) removing the removable part of F_d: pluriharmonic terms through
/// w1, mixed terms through w' (d = 3, 4), and for d = 4 the sphere mean of the (2,2) part.
std::vector<TruncatedSeries> correction(const Split& sp, const TruncatedSeries& F, int d) {
    auto phi = identity_map_series(sp.q);
    TruncatedSeries h(sp.q);
    const TruncatedSeries Fd = F.homogeneous(d);
    for (const auto& [e, c] : Fd.terms()) {
        if (e[1] != 0) {
            throw Error(ErrorKind::invariant_violation, "chart-construction", "graph depends on Im w1");
        }
        const Parts p = parts(sp, e);
        if (p.gamma == 0) {
            h.add_term(holo_exponent(sp, e), p.beta == 0 ? 0.5 * c.real() : c);
        } else if (d >= 3 && p.gamma == 1 && p.beta >= 1) {
            // x^a w^beta conj(w_k): Hermitian pairs when beta = 1, otherwise one-sided.
            const int k = conj_index(sp, e);
            phi[static_cast<std::size_t>(k)].add_term(holo_exponent(sp, e), p.beta == 1 ? -0.5 * c : -c);
        }
    }
    phi[0] += h * (2.0 * I);
    if (d == 4) add_trace_shear(sp, phi, 0.5 * sphere_mean_22(sp, Fd));
    return phi;
}

/// Adds kappa (|Re w1|^4 + ||w'||^4) to P4.
std::vector<TruncatedSeries> convexifier(const Split& sp, double kappa) {
    auto phi = identity_map_series(sp.q);
    Exponent e1(sp.q, 0);
    e1[0] = 4;
    phi[0].add_term(e1, I * kappa);  // w1 -> w1 + 2i (kappa / 2) w1^4
    add_trace_shear(sp, phi, 0.5 * kappa);
    return phi;
}

/// Off-form coefficients of a graph height: target is ||w'||^2 through degree 3.
std::pair<double, std::string> form_deviation(const Split& sp, const TruncatedSeries& F) {
    TruncatedSeries target(sp.n());
    for (int k = 1; k < sp.q; ++k) target += sp.var(sp.w(k)) * sp.var(sp.wbar(k));
    const TruncatedSeries diff = F - target;
    double worst = 0.0;
    std::string where;
    for (const auto& [e, c] : diff.terms()) {
        if (degree(e) > 3 || std::abs(c) <= worst) continue;
        worst = std::abs(c);
        where = "exponent (";
        for (std::size_t i = 0; i < e.size(); ++i) where += (i ? "," : "") + std::to_string(e[i]);
        where += ") coefficient " + std::to_string(c.real()) + "+" + std::to_string(c.imag()) + "i";
    }
    return {worst, where};
}

CMatrix series_jacobian(const std::vector<TruncatedSeries>& map, const CPoint& u) {
    const int n = static_cast<int>(u.size());
    CMatrix J = CMatrix::Zero(static_cast<Eigen::Index>(map.size()), n);
    for (std::size_t i = 0; i < map.size(); ++i) {
        for (const auto& [e, c] : map[i].terms()) {
            for (int j = 0; j < n; ++j) {
                if (e[j] == 0) continue;
                cplx t = c * static_cast<double>(e[j]);
                for (int k = 0; k < n; ++k) t *= ipow(u[k], k == j ? e[k] - 1 : e[k]);
                J(static_cast<Eigen::Index>(i), j) += t;
            }
        }
    }
    return J;
}

CPoint evaluate_map(const std::vector<TruncatedSeries>& map, const CPoint& u) {
    CPoint r(static_cast<Eigen::Index>(map.size()));
    for (std::size_t i = 0; i < map.size(); ++i) r[static_cast<Eigen::Index>(i)] = map[i].evaluate(u);
    return r;
}

/// Series in split variables at (Re w1, Im w1) = (x, 0) and w'.
double evaluate_split(const Split& sp, const TruncatedSeries& f, double x, const CPoint& wp) {
    std::vector<cplx> v(static_cast<std::size_t>(sp.n()), 0.0);
    v[0] = x;
    for (int k = 1; k < sp.q; ++k) {
        v[static_cast<std::size_t>(sp.w(k))] = wp[k - 1];
        v[static_cast<std::size_t>(sp.wbar(k))] = std::conj(wp[k - 1]);
    }
    return f.evaluate(v).real();
}

double quartic_norm(double x, const CPoint& wp) {
    const double n2 = wp.squaredNorm();
    return x * x * x * x + n2 * n2;
}

/// Direction (x, w') on the unit sphere of R x C^{q-1}.
std::pair<double, CPoint> sample_direction(SeededSampler& rng, int q) {
    double x = rng.normal();
    CPoint wp(q - 1);
    for (int k = 0; k < q - 1; ++k) wp[k] = cplx(rng.normal(), rng.normal());
    const double n = std::sqrt(x * x + wp.squaredNorm());
    return {x / n, wp / n};
}

}  // namespace

CPoint NormalFormChart::to_chart(const CPoint& z) const {
    if (exact) return cayley_at_e1(CPoint(unitary * z));
    return evaluate_map(map, CPoint(z - zeta));
}

CPoint NormalFormChart::from_chart(const CPoint& w) const {
    if (exact) return unitary.adjoint() * cayley_at_e1_inverse(w);
    CPoint u = evaluate_map(inverse, w);
    double res = kInf;
    for (int it = 0; it < 60; ++it) {
        const CPoint r = evaluate_map(map, u) - w;
        res = r.norm();
        if (!std::isfinite(res)) break;
        if (res <= 1e-15 * (1.0 + w.norm())) return zeta + u;
        const CPoint step = series_jacobian(map, u).partialPivLu().solve(r);
        u -= step;
        if (step.norm() <= 1e-17 * (1.0 + u.norm())) break;
    }
    if (!(res <= 1e-11 * (1.0 + w.norm()))) {
        throw Error(ErrorKind::non_convergence, "chart-inverse",
                    "Newton inversion of the chart did not converge (residual " + std::to_string(res) + ")");
    }
    return zeta + u;
}

double NormalFormChart::p4_at(double x, const CPoint& w_prime) const {
    return evaluate_split(Split{domain.q}, p4, x, w_prime);
}

double boundary_height(const NormalFormChart& chart, double x, const CPoint& w_prime) {
    const int q = chart.domain.q;
    auto rho_at = [&](double y) {
        CPoint w(q);
        w[0] = cplx(x, y);
        for (int k = 1; k < q; ++k) w[k] = w_prime[k - 1];
        return chart.domain.rho(chart.from_chart(w));
    };
    const double s2 = x * x + w_prime.squaredNorm();
    const double y0 = w_prime.squaredNorm();
    double lo = y0 - 0.5 * s2 - 1e-300, hi = y0 + 0.5 * s2 + 1e-300;
    for (int it = 0; it < 40 && rho_at(lo) <= 0.0; ++it) lo -= s2;
    for (int it = 0; it < 40 && rho_at(hi) >= 0.0; ++it) hi += s2;
    if (rho_at(lo) <= 0.0 || rho_at(hi) >= 0.0) {
        throw Error(ErrorKind::non_convergence, "height-bracket", "no sign change of rho along Im w1");
    }
    for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        (rho_at(mid) > 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

double p4_from_heights(const NormalFormChart& chart, double x, const CPoint& w_prime, double s) {
    auto est = [&](double t) {
        const CPoint wp = w_prime * t;
        return (wp.squaredNorm() - boundary_height(chart, x * t, wp)) / std::pow(t, 4);
    };
    const double e0 = est(s), e1 = est(0.5 * s), e2 = est(0.25 * s);
    const double r0 = 2.0 * e1 - e0, r1 = 2.0 * e2 - e1;
    return (4.0 * r1 - r0) / 3.0;
}

int sandwich_violations(const NormalFormChart& chart, int directions, std::uint64_t seed) {
    SeededSampler rng(seed, chart.domain.q);
    int bad = 0;
    for (int i = 0; i < directions; ++i) {
        const auto [x, wp] = sample_direction(rng, chart.domain.q);
        const double n = quartic_norm(x, wp);
        const double p = chart.p4_at(x, wp);
        const double slack = 1e-12 * n;
        if (p < chart.C * n - slack || p > 0.5 * chart.D * n + slack) ++bad;
    }
    return bad;
}

/// Ball: w = cayley_at_e1(U z), whose image is the Siegel domain itself.
NormalFormChart exact_ball_chart(NormalFormChart chart) {
    const int q = chart.domain.q;
    const Split sp{q};
    CMatrix F = CMatrix::Identity(q, q);
    F.col(0) = chart.zeta;
    const Eigen::HouseholderQR<CMatrix> qr(F);
    CMatrix Q = qr.householderQ();
    Q.col(0) = chart.zeta;
    chart.unitary = Q.adjoint();
    chart.exact = true;

    // v = U (z - zeta); w1 = -i v1 / (2 + v1), w_k = v_k / (2 + v1).
    std::vector<TruncatedSeries> v(static_cast<std::size_t>(q), TruncatedSeries(q));
    for (int i = 0; i < q; ++i) {
        for (int j = 0; j < q; ++j) v[static_cast<std::size_t>(i)] += TruncatedSeries::variable(q, j, chart.unitary(i, j));
    }
    TruncatedSeries geometric = TruncatedSeries::constant(q, 0.5);  // 1 / (2 + v1)
    TruncatedSeries power = TruncatedSeries::constant(q, 0.5);
    for (int n = 1; n <= TruncatedSeries::kDegree; ++n) {
        power = power * v[0] * (-0.5);
        geometric += power;
    }
    chart.map.assign(static_cast<std::size_t>(q), TruncatedSeries(q));
    chart.map[0] = v[0] * geometric * (-I);
    for (int k = 1; k < q; ++k) chart.map[static_cast<std::size_t>(k)] = v[static_cast<std::size_t>(k)] * geometric;
    chart.inverse = invert_map(chart.map);
    chart.linear = linear_part(chart.map);
    const Eigen::JacobiSVD<CMatrix> svd(chart.linear);
    chart.linear_condition = svd.singularValues()(0) / svd.singularValues()(q - 1);

    chart.defining = sp.var(1) * (-1.0);
    for (int k = 1; k < q; ++k) chart.defining += sp.var(sp.w(k)) * sp.var(sp.wbar(k));
    chart.p4 = TruncatedSeries(sp.n());
    return chart;
}

NormalFormChart normal_form_chart(const DomainSpec& d, const CPoint& zeta_in, const ChartOptions& options) {
    const auto conv = strong_convexity_check(d, zeta_in);
    if (!conv.strongly_convex) {
        throw Error(ErrorKind::precondition, "not-strongly-convex",
                    "boundary point fails the strong convexity check (min eigenvalue " +
                        std::to_string(conv.min_eigenvalue) + ")");
    }
    const int q = d.q;
    const Split sp{q};
    NormalFormChart chart;
    chart.domain = d;
    chart.zeta = project_to_boundary(d, zeta_in);

    if (d.kind == DomainKind::ball) return exact_ball_chart(chart);

    // Complex normal e and unitary tangent frame; v1 is chosen so the linear part is -Im v1.
    const CPoint db = d.dbar(chart.zeta);
    const double gnorm = db.norm();
    const CPoint e = db / gnorm;
    CMatrix F = CMatrix::Identity(q, q);
    F.col(0) = e;
    const Eigen::HouseholderQR<CMatrix> qr(F);
    CMatrix Q = qr.householderQ();
    Q.col(0) = e;
    CMatrix A = CMatrix::Zero(q, q);
    A.col(0) = e * (I / (2.0 * gnorm));
    for (int k = 1; k < q; ++k) A.col(k) = Q.col(k);

    if (q > 1) {
        // Levi form on the tangent coordinates, then normalized to the identity.
        const TruncatedSeries psi0 = expand_defining(d, chart.zeta, A, sp);
        CMatrix P(q - 1, q - 1);
        for (int k = 1; k < q; ++k) {
            for (int l = 1; l < q; ++l) {
                Exponent ex(sp.n(), 0);
                ex[sp.w(k)] += 1;
                ex[sp.wbar(l)] += 1;
                P(l - 1, k - 1) = psi0.coeff(ex);
            }
        }
        P = 0.5 * (P + P.adjoint()).eval();
        const Eigen::SelfAdjointEigenSolver<CMatrix> es(P);
        if (!(es.eigenvalues().minCoeff() > 1e-10)) {
            throw Error(ErrorKind::precondition, "not-strongly-pseudoconvex", "Levi form is not positive");
        }
        const CMatrix L = es.operatorInverseSqrt();
        A.rightCols(q - 1) = (A.rightCols(q - 1) * L).eval();
    }

    TruncatedSeries psi = expand_defining(d, chart.zeta, A, sp);
    psi.prune(1e-15);
    std::vector<TruncatedSeries> total = identity_map_series(q);  // v as series in current w
    const auto apply = [&](const std::vector<TruncatedSeries>& phi) {
        psi = change_variables(psi, split_substitution(sp, phi));
        for (auto& t : total) t = compose(t, phi);
    };
    for (int deg = 2; deg <= 4; ++deg) {
        const TruncatedSeries Fh = graph_height(sp, psi);
        psi = sp.var(1) * (-1.0) + Fh;
        apply(correction(sp, Fh, deg));
    }
    {
        // What is left of P4 is fixed by the domain; kappa is raised until P4 >= kappa |.|^4.
        const TruncatedSeries Fh = graph_height(sp, psi);
        psi = sp.var(1) * (-1.0) + Fh;
        const TruncatedSeries residual = Fh.homogeneous(4) * (-1.0);
        SeededSampler rng(options.seed + 2, q);
        double low = 0.0;
        for (int i = 0; i < options.directions; ++i) {
            const auto [x, wp] = sample_direction(rng, q);
            low = std::min(low, evaluate_split(sp, residual, x, wp) / quartic_norm(x, wp));
        }
        chart.convexity = options.convexity - low;
        if (chart.convexity > 0.0) apply(convexifier(sp, chart.convexity));
    }
    const TruncatedSeries Fh = graph_height(sp, psi);
    chart.defining = sp.var(1) * (-1.0) + Fh;
    chart.p4 = Fh.homogeneous(4) * (-1.0);
    chart.p4 = (chart.p4 + split_conj(sp, chart.p4)) * 0.5;
    chart.discarded_terms = psi.discarded() + Fh.discarded();

    const auto [dev, where] = form_deviation(sp, Fh);
    chart.normal_form_error = dev;
    if (dev > options.coefficient_tol) {
        throw Error(ErrorKind::invariant_violation, "chart-construction",
                    "terms of degree <= 3 not removed: " + where);
    }

    chart.inverse = apply_matrix(A, total);
    chart.map = invert_map(chart.inverse);
    chart.linear = linear_part(chart.map);
    const Eigen::JacobiSVD<CMatrix> svd(chart.linear);
    chart.linear_condition = svd.singularValues()(0) / svd.singularValues()(q - 1);

    SeededSampler rng(options.seed, q);
    chart.p4_min = kInf;
    chart.p4_max = -kInf;
    for (int i = 0; i < options.directions; ++i) {
        const auto [x, wp] = sample_direction(rng, q);
        const double r = chart.p4_at(x, wp) / quartic_norm(x, wp);
        chart.p4_min = std::min(chart.p4_min, r);
        chart.p4_max = std::max(chart.p4_max, r);
    }
    chart.direction_samples = options.directions;
    const double m = options.safety;
    chart.C = chart.p4_min >= 0.0 ? (1.0 - m) * chart.p4_min : (1.0 + m) * chart.p4_min;
    chart.D = std::max(0.0, 2.0 * (chart.p4_max >= 0.0 ? (1.0 + m) * chart.p4_max : (1.0 - m) * chart.p4_max));

    // Remainder beyond degree 4 along a few directions at s = 0.05.
    const double s = 0.05;
    SeededSampler rr(options.seed + 1, q);
    for (int i = 0; i < 16; ++i) {
        const auto [x, wp] = sample_direction(rr, q);
        std::vector<cplx> v(static_cast<std::size_t>(sp.n()), 0.0);
        v[0] = s * x;
        for (int k = 1; k < q; ++k) {
            v[static_cast<std::size_t>(sp.w(k))] = s * wp[k - 1];
            v[static_cast<std::size_t>(sp.wbar(k))] = s * std::conj(wp[k - 1]);
        }
        const double series = Fh.evaluate(v).real();
        const double h = boundary_height(chart, s * x, CPoint(s * wp));
        chart.remainder_estimate = std::max(chart.remainder_estimate, std::abs(h - series) / std::pow(s, 5));
    }
    return chart;
}

// ---------------------------------------------------------------------------

CPoint push_T(double R, const CPoint& w) { return w * (R / (R - I * w[0])); }

CPoint push_T_inverse(double R, const CPoint& eta) { return eta * (R / (R + I * eta[0])); }

CPoint cayley_at_e1(const CPoint& z) {
    CPoint w = z / (1.0 + z[0]);
    w[0] = I * (1.0 - z[0]) / (1.0 + z[0]);
    return w;
}

CPoint cayley_at_e1_inverse(const CPoint& w) {
    CPoint z = w * (2.0 * I / (I + w[0]));
    z[0] = (I - w[0]) / (I + w[0]);
    return z;
}

LocalizedChart localized_chart(const NormalFormChart& chart, double R) {
    if (!(R > 0.0) || (chart.D > 0.0 && !(R < 1.0 / chart.D))) {
        throw Error(ErrorKind::precondition, "invalid-radius",
                    "push parameter must satisfy 0 < R < 1/D (D = " + std::to_string(chart.D) + ")");
    }
    const int q = chart.domain.q;
    const Split sp{q};
    LocalizedChart lc;
    lc.chart = chart;
    lc.R = R;

    // w = T^{-1}(eta) = eta / (1 + i eta1 / R) as holomorphic series.
    TruncatedSeries geo = TruncatedSeries::constant(q, 1.0);
    TruncatedSeries p = TruncatedSeries::constant(q, 1.0);
    for (int k = 1; k <= TruncatedSeries::kDegree; ++k) {
        p = p * TruncatedSeries::variable(q, 0, -I / R);
        geo += p;
    }
    std::vector<TruncatedSeries> tinv;
    for (int i = 0; i < q; ++i) tinv.push_back(TruncatedSeries::variable(q, i) * geo);
    TruncatedSeries psi = change_variables(chart.defining, split_substitution(sp, tinv));
    // |R + i eta1|^2 / R^2 = (1 - Im eta1 / R)^2 + (Re eta1 / R)^2
    const TruncatedSeries x = sp.var(0), y = sp.var(1);
    const TruncatedSeries one = TruncatedSeries::constant(sp.n(), 1.0);
    const TruncatedSeries factor = one - y * (2.0 / R) + (x * x + y * y) * (1.0 / (R * R));
    lc.defining = psi * factor;

    TruncatedSeries target = y * (-1.0) + (x * x + y * y) * (1.0 / R) - chart.p4;
    for (int k = 1; k < q; ++k) target += sp.var(sp.w(k)) * sp.var(sp.wbar(k));
    lc.series_error = (lc.defining - target).max_abs();
    const TruncatedSeries rest = lc.defining + y - y * y * (1.0 / R);
    for (const auto& [e, c] : rest.terms()) {
        if (e[1] > 0 && degree(e) >= 2) lc.im_dependence = std::max(lc.im_dependence, std::abs(c));
    }

    const NormalFormChart ch = chart;
    lc.frame.name = "localized(" + to_string(chart.domain.kind) + ", R=" + std::to_string(R) + ")";
    lc.frame.to_ball = [ch, R](const CPoint& z) { return cayley_at_e1_inverse(push_T(R, ch.to_chart(z))); };
    lc.frame.from_ball = [ch, R](const CPoint& b) { return ch.from_chart(push_T_inverse(R, cayley_at_e1(b))); };
    return lc;
}

BallFrame identity_frame() {
    return {"identity", [](const CPoint& z) { return z; }, [](const CPoint& z) { return z; }};
}

// ---------------------------------------------------------------------------

namespace {

/// Radial parameter with Beta(1, 1/3) law, concentrated near 1.
double boundary_biased(SeededSampler& rng) {
    const double u = rng.uniform();
    return 1.0 - u * u * u;
}

CPoint e1_of(int q) {
    CPoint e = CPoint::Zero(q);
    e[0] = 1.0;
    return e;
}

struct InclusionCount {
    int samples = 0;
    int violations = 0;
    std::vector<CPoint> witnesses;
};

void note(InclusionCount& c, const CPoint& p) {
    ++c.violations;
    if (c.witnesses.size() < 8) c.witnesses.push_back(p);
}

InclusionCount horosphere_check(const DomainSpec& d, const BallFrame& frame, double R, int n,
                                std::uint64_t seed) {
    InclusionCount c;
    SeededSampler rng(seed, d.q);
    const CPoint center = e1_of(d.q) / (1.0 + R);
    const double radius = R / (1.0 + R);
    for (int i = 0; i < n; ++i) {
        const double t = boundary_biased(rng);
        const CPoint p = center + rng.sphere(d.q) * (radius * t);
        ++c.samples;
        try {
            if (!d.contains(frame.from_ball(p))) note(c, p);
        } catch (const Error&) {
            note(c, p);
        }
    }
    return c;
}

InclusionCount neighborhood_check(const DomainSpec& d, const BallFrame& frame, double rho, int n,
                                  std::uint64_t seed) {
    InclusionCount c;
    SeededSampler rng(seed + 1, d.q);
    const CPoint e1 = e1_of(d.q);
    for (int i = 0; i < n; ++i) {
        const double t = boundary_biased(rng);
        const CPoint p = e1 + rng.sphere(d.q) * (rho * t);
        try {
            if (!d.contains(frame.from_ball(p))) continue;
        } catch (const Error&) {
            note(c, p);
            continue;
        }
        ++c.samples;
        if (p.norm() >= 1.0) note(c, p);
    }
    return c;
}

/// Largest r in (0, hi] with pred(r), searched on a log scale.
double largest_admissible(const std::function<bool(double)>& pred, double hi) {
    if (pred(hi)) return hi;
    double lo = hi;
    for (int it = 0; it < 60; ++it) {
        lo *= 0.5;
        if (pred(lo)) break;
        if (it == 59) return 0.0;
    }
    const double t = bisect_last_true([&](double s) { return pred(std::exp(s)); }, std::log(lo),
                                      std::log(hi), 1e-3);
    return std::exp(t);
}

}  // namespace

InclusionCertificate verify_inclusions(const DomainSpec& d, const BallFrame& frame, double R, double rho,
                                       int n_samples, std::uint64_t seed) {
    if (!(R > 0.0) || !(rho > 0.0) || n_samples <= 0) {
        throw Error(ErrorKind::precondition, "invalid-radius", "R > 0, rho > 0 and n > 0 required");
    }
    InclusionCertificate cert;
    cert.R = R;
    cert.rho = rho;
    const auto h = horosphere_check(d, frame, R, n_samples, seed);
    const auto b = neighborhood_check(d, frame, rho, n_samples, seed);
    cert.horosphere_samples = h.samples;
    cert.horosphere_violations = h.violations;
    cert.neighborhood_samples = b.samples;
    cert.neighborhood_violations = b.violations;
    cert.witnesses = h.witnesses;
    for (const auto& w : b.witnesses) {
        if (cert.witnesses.size() < 8) cert.witnesses.push_back(w);
    }

    const int nb = std::min(n_samples, 4000);
    auto shrink_to_clean = [&](double r, auto&& check) {
        for (int it = 0; it < 40 && r > 0.0; ++it) {
            if (check(r, n_samples).violations == 0) return r;
            r *= 0.9;
        }
        return 0.0;
    };
    auto hcheck = [&](double r, int n) { return horosphere_check(d, frame, r, n, seed); };
    auto bcheck = [&](double r, int n) { return neighborhood_check(d, frame, r, n, seed); };
    cert.R_admissible = h.violations == 0
                            ? R
                            : shrink_to_clean(
                                  largest_admissible([&](double r) { return hcheck(r, nb).violations == 0; }, R),
                                  hcheck);
    cert.rho_admissible = b.violations == 0
                              ? rho
                              : shrink_to_clean(largest_admissible(
                                                    [&](double r) { return bcheck(r, nb).violations == 0; }, rho),
                                                bcheck);
    return cert;
}

DistanceComparison distance_comparison(const DomainSpec& d, const BallFrame& frame, double epsilon,
                                       double R_max, int pairs, std::uint64_t seed) {
    if (!(epsilon > 0.0) || !(R_max > 0.0) || pairs <= 0) {
        throw Error(ErrorKind::precondition, "invalid-radius", "eps > 0, R_max > 0 and pairs > 0 required");
    }
    const DomainGeometry geom = build_geometry(d);
    DistanceComparison out;
    out.epsilon = epsilon;
    out.pairs = pairs;

    struct Pass {
        int violations = 0;
        double max_gap = 0.0;
        std::vector<double> margins;
    };
    auto run = [&](double r) {
        Pass p;
        SeededSampler rng(seed, d.q);
        for (int i = 0; i < pairs; ++i) {
            const CPoint a = ball::sample_horosphere(r, d.q, rng);
            const CPoint b = ball::sample_horosphere(r, d.q, rng);
            CPoint za, zb;
            try {
                za = frame.from_ball(a);
                zb = frame.from_ball(b);
            } catch (const Error&) {
                ++p.violations;
                p.margins.push_back(-kInf);
                continue;
            }
            if (!d.contains(za) || !d.contains(zb)) {
                ++p.violations;
                p.margins.push_back(-kInf);
                continue;
            }
            const double kB = ball::kobayashi_ball(a, b);
            const SandwichBound s = kobayashi_sandwich(geom, za, zb);
            p.max_gap = std::max(p.max_gap, s.gap());
            if (s.gap() > 0.5 * epsilon) {
                throw Error(ErrorKind::non_convergence, "insufficient-precision",
                            "sandwich gap " + std::to_string(s.gap()) + " exceeds eps/2 = " +
                                std::to_string(0.5 * epsilon));
            }
            const double margin = epsilon - std::max(kB - s.lower, s.upper - kB);
            if (margin < -1e-12) ++p.violations;
            p.margins.push_back(margin);
        }
        return p;
    };
    out.R_eps = largest_admissible([&](double r) { return run(r).violations == 0; }, R_max);
    if (out.R_eps > 0.0) {
        const Pass p = run(out.R_eps);
        out.violations = p.violations;
        out.max_gap = p.max_gap;
        out.margins = p.margins;
        out.min_margin = *std::min_element(p.margins.begin(), p.margins.end());
    }
    return out;
}

}  // namespace holokit
