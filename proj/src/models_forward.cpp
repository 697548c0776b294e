#include "holokit/models_forward.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace holokit {

namespace {

constexpr cplx I(0.0, 1.0);

CMatrix cayley_inverse_jacobian_at_i(int q) {
    CPoint w = CPoint::Zero(q);
    w[0] = I;
    return numerical_jacobian([](const CPoint& z) { return ball::cayley_inverse(z); }, w);
}

/// Linear part of the Siegel normalizer at p.
CMatrix normalizer_linear(const CPoint& p) {
    const auto q = p.size();
    const double rp = ball::siegel_rho(p);
    CMatrix L = CMatrix::Zero(q, q);
    L(0, 0) = 1.0 / rp;
    for (Eigen::Index j = 1; j < q; ++j) {
        L(0, j) = -2.0 * I * std::conj(p[j]) / rp;
        L(j, j) = 1.0 / std::sqrt(rp);
    }
    return L;
}

/// exp(i H) for Hermitian H.
CMatrix unitary_exp(const CMatrix& H) {
    Eigen::SelfAdjointEigenSolver<CMatrix> es(H);
    const auto& ev = es.eigenvalues();
    CPoint ph(ev.size());
    for (Eigen::Index j = 0; j < ev.size(); ++j) ph[j] = std::exp(I * ev[j]);
    return es.eigenvectors() * ph.asDiagonal() * es.eigenvectors().adjoint();
}

/// (w1 + a + 2i<w', b> + i|b|^2, w' + b)
CPoint heisenberg(double a, const CPoint& b, const CPoint& w) {
    CPoint out = w;
    const auto k = w.size();
    cplx wb = 0.0;
    for (Eigen::Index j = 1; j < k; ++j) wb += w[j] * std::conj(b[j - 1]);
    out[0] = w[0] + a + 2.0 * I * wb + I * b.squaredNorm();
    for (Eigen::Index j = 1; j < k; ++j) out[j] = w[j] + b[j - 1];
    return out;
}

/// Heisenberg translation sending the boundary point e of H^k to 0, and its inverse.
CPoint to_origin(const CPoint& e, const CPoint& w) {
    const auto k = w.size();
    const CPoint b = -e.tail(k - 1);
    return heisenberg(-e[0].real(), b, w);
}

CPoint from_origin(const CPoint& e, const CPoint& u) {
    const auto k = u.size();
    const CPoint ep = e.tail(k - 1);
    CPoint w = u;
    cplx wp = 0.0;
    for (Eigen::Index j = 1; j < k; ++j) {
        w[j] = u[j] + ep[j - 1];
        wp += w[j] * std::conj(ep[j - 1]);
    }
    w[0] = u[0] + e[0].real() + 2.0 * I * wp - I * ep.squaredNorm();
    return w;
}

std::vector<double> sorted_angles(const CMatrix& V, std::optional<Eigen::Index> drop_nearest_one = {}) {
    std::vector<double> out;
    if (V.rows() == 0) return out;
    Eigen::ComplexEigenSolver<CMatrix> es(V);
    const auto& ev = es.eigenvalues();
    Eigen::Index skip = -1;
    if (drop_nearest_one) {
        double best = std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < ev.size(); ++j) {
            if (std::abs(ev[j] - 1.0) < best) {
                best = std::abs(ev[j] - 1.0);
                skip = j;
            }
        }
    }
    for (Eigen::Index j = 0; j < ev.size(); ++j) {
        if (j != skip) out.push_back(std::arg(ev[j]));
    }
    std::sort(out.begin(), out.end());
    return out;
}

double max_abs_diff(const CPoint& a, const CPoint& b) {
    return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace

// ---------------------------------------------------------------- charts

LocalChart::LocalChart(const DomainSpec& d, const CPoint& p, const SqueezeBudget& budget,
                       const SqueezeEmbedding* warm_start)
    : gauge(CMatrix::Identity(d.q, d.q)), kind_(d.kind), p_(p), domain_(d) {
    if (!d.contains(p)) throw Error(ErrorKind::precondition, "out-of-domain", "chart base point");
    if (!invertible()) {
        const auto cert = squeeze_lower(d, p, budget, warm_start);
        embedding_ = cert.embedding;
        inner_radius = cert.inner_radius;
    }
}

bool LocalChart::invertible() const {
    return kind_ == DomainKind::ball || kind_ == DomainKind::siegel;
}

CPoint LocalChart::raw(const CPoint& z) const {
    switch (kind_) {
        case DomainKind::ball: return ball::mobius(p_, z);
        case DomainKind::siegel: return ball::siegel_to_ball_at(p_, z);
        default: return embedding_(z);
    }
}

CPoint LocalChart::raw_inverse(const CPoint& u) const {
    switch (kind_) {
        case DomainKind::ball: return ball::mobius(p_, u);
        case DomainKind::siegel: return ball::ball_to_siegel_at(p_, u);
        default:
            throw Error(ErrorKind::precondition, "no-inverse",
                        "squeezing embeddings are evaluated forward only");
    }
}

CPoint LocalChart::operator()(const CPoint& z) const { return gauge * raw(z); }

CPoint LocalChart::inverse(const CPoint& u) const { return raw_inverse(CPoint(gauge.adjoint() * u)); }

CMatrix LocalChart::raw_jacobian() const {
    const auto q = p_.size();
    switch (kind_) {
        case DomainKind::ball: {
            const double na = p_.squaredNorm();
            if (na == 0.0) return -CMatrix::Identity(q, q);
            const CMatrix P = p_ * p_.adjoint() / na;
            const CMatrix Q = CMatrix::Identity(q, q) - P;
            const double s = std::sqrt(1.0 - na);
            return -P / (s * s) - Q / s;
        }
        case DomainKind::siegel:
            return cayley_inverse_jacobian_at_i(static_cast<int>(q)) * normalizer_linear(p_);
        default:
            return numerical_jacobian([this](const CPoint& z) { return embedding_(z); }, p_, 1e-7);
    }
}

CMatrix scaled_jacobian(const HoloMap& f, const CPoint& z) {
    if (f.jacobian) return f.jacobian(z);
    return numerical_jacobian(f.eval, z, kDerivativeStep * std::max(1.0, z.norm()));
}

CMatrix polar_unitary(const CMatrix& A) {
    Eigen::JacobiSVD<CMatrix> svd(A, Eigen::ComputeFullU | Eigen::ComputeFullV);
    return svd.matrixU() * svd.matrixV().adjoint();
}

CPoint RescaledStage::operator()(const CPoint& z) const {
    CPoint y = z;
    for (int j = n; j < m; ++j) y = f(y);
    return psi(y);
}

RescaledStage rescaled_stage(const HoloMap& f, const CPoint& base, int m, int n,
                             const SqueezeBudget& budget) {
    if (n < 0 || n > m) throw Error(ErrorKind::precondition, "invalid-stage", "0 <= n <= m");
    CPoint z = base;
    CMatrix D = CMatrix::Identity(base.size(), base.size());
    for (int j = 0; j < m; ++j) {
        D = scaled_jacobian(f, z) * D;
        z = f(z);
        if (escaped(z) || !f.domain.contains(z)) {
            throw Error(ErrorKind::precondition, "orbit-exit", "orbit left the domain before stage m");
        }
    }
    RescaledStage st{m, n, base, f, LocalChart(f.domain, z, budget)};
    st.psi.gauge = polar_unitary(st.psi.raw_jacobian() * D).adjoint();
    return st;
}

// ---------------------------------------------------------------- automorphism fit

ball::BallAutomorphism automorphism_from_maps(const PointMap& g, const PointMap& g_inv, int k) {
    ball::BallAutomorphism t{g_inv(CPoint::Zero(k)), CMatrix::Identity(k, k)};
    CMatrix U(k, k);
    for (int j = 0; j < k; ++j) {
        const CPoint v = 0.5 * unit_vector(k, j);
        U.col(j) = 2.0 * g(ball::mobius(t.a, v));
    }
    t.U = polar_unitary(U);
    return t;
}

namespace {

ball::BallAutomorphism decode(const Eigen::VectorXd& theta, const CMatrix& U0, int k) {
    CPoint b(k);
    for (int j = 0; j < k; ++j) b[j] = cplx(theta[2 * j], theta[2 * j + 1]);
    const CPoint a = b / std::sqrt(1.0 + b.squaredNorm());
    CMatrix H = CMatrix::Zero(k, k);
    int idx = 2 * k;
    for (int j = 0; j < k; ++j) H(j, j) = theta[idx++];
    for (int i = 0; i < k; ++i) {
        for (int j = i + 1; j < k; ++j) {
            H(i, j) = cplx(theta[idx], theta[idx + 1]);
            H(j, i) = std::conj(H(i, j));
            idx += 2;
        }
    }
    return {a, unitary_exp(H) * U0};
}

Eigen::VectorXd encode_a(const CPoint& a, int k) {
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(2 * k + k * k);
    const double s = std::sqrt(std::max(1e-300, 1.0 - a.squaredNorm()));
    for (int j = 0; j < k; ++j) {
        theta[2 * j] = a[j].real() / s;
        theta[2 * j + 1] = a[j].imag() / s;
    }
    return theta;
}

Eigen::VectorXd fit_residuals(const ball::BallAutomorphism& t, const std::vector<CPoint>& src,
                              const std::vector<CPoint>& dst) {
    const auto k = t.a.size();
    Eigen::VectorXd r(2 * k * static_cast<Eigen::Index>(src.size()));
    for (std::size_t i = 0; i < src.size(); ++i) {
        const CPoint d = ball::mobius(dst[i], t(src[i]));
        for (Eigen::Index j = 0; j < k; ++j) {
            r[2 * k * static_cast<Eigen::Index>(i) + 2 * j] = d[j].real();
            r[2 * k * static_cast<Eigen::Index>(i) + 2 * j + 1] = d[j].imag();
        }
    }
    return r;
}

bool lexicographically_less(const ball::BallAutomorphism& x, const ball::BallAutomorphism& y) {
    auto flat = [](const ball::BallAutomorphism& t) {
        std::vector<double> v;
        for (Eigen::Index j = 0; j < t.a.size(); ++j) {
            v.push_back(t.a[j].real());
            v.push_back(t.a[j].imag());
        }
        for (Eigen::Index j = 0; j < t.U.size(); ++j) {
            v.push_back(t.U.data()[j].real());
            v.push_back(t.U.data()[j].imag());
        }
        return v;
    };
    return flat(x) < flat(y);
}

}  // namespace

AutomorphismFit fit_ball_automorphism(const std::vector<CPoint>& source,
                                      const std::vector<CPoint>& target,
                                      const std::vector<ball::BallAutomorphism>& starts, int n_starts,
                                      int iterations, std::uint64_t seed) {
    if (source.empty() || source.size() != target.size()) {
        throw Error(ErrorKind::precondition, "invalid-samples", "paired samples required");
    }
    const int k = static_cast<int>(source.front().size());
    const int np = 2 * k + k * k;
    const double n = static_cast<double>(source.size());
    SeededSampler rng(seed, k);
    std::vector<ball::BallAutomorphism> inits = starts;
    while (static_cast<int>(inits.size()) < n_starts) {
        inits.push_back({rng.ball(k, 0.9), rng.unitary(k)});
    }
    AutomorphismFit best;
    best.cost = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < inits.size(); ++s) {
        CMatrix U0 = polar_unitary(inits[s].U);
        Eigen::VectorXd theta = encode_a(inits[s].a, k);
        auto current = decode(theta, U0, k);
        Eigen::VectorXd r = fit_residuals(current, source, target);
        double cost = r.squaredNorm() / n;
        double mu = 1e-3;
        int it = 0;
        for (; it < iterations && cost > 1e-30; ++it) {
            Eigen::MatrixXd J(r.size(), np);
            for (int p = 0; p < np; ++p) {
                Eigen::VectorXd tp = theta;
                const double h = 1e-7 * std::max(1.0, std::abs(theta[p]));
                tp[p] += h;
                J.col(p) = (fit_residuals(decode(tp, U0, k), source, target) - r) / h;
            }
            const Eigen::MatrixXd A = J.transpose() * J;
            const Eigen::VectorXd g = J.transpose() * r;
            bool accepted = false;
            while (mu < 1e12) {
                Eigen::MatrixXd Ad = A;
                for (int p = 0; p < np; ++p) Ad(p, p) += mu * (A(p, p) + 1e-12);
                const Eigen::VectorXd delta = Ad.ldlt().solve(-g);
                Eigen::VectorXd trial = theta + delta;
                const auto cand = decode(trial, U0, k);
                const Eigen::VectorXd rt = fit_residuals(cand, source, target);
                const double ct = rt.squaredNorm() / n;
                if (std::isfinite(ct) && ct < cost) {
                    // Re-base the unitary so the generator restarts at zero.
                    U0 = cand.U;
                    theta = encode_a(cand.a, k);
                    current = cand;
                    r = rt;
                    accepted = delta.norm() > 1e-15;
                    cost = ct;
                    mu = std::max(mu / 3.0, 1e-12);
                    break;
                }
                mu *= 4.0;
            }
            if (!accepted) break;
        }
        const bool better = cost < best.cost * (1.0 - 1e-12) ||
                            (std::abs(cost - best.cost) <= 1e-12 * best.cost &&
                             lexicographically_less(current, best.tau));
        if (s == 0 || better) {
            best.tau = current;
            best.cost = cost;
            best.start = static_cast<int>(s);
            best.iterations = it;
        }
    }
    best.residual = 0.0;
    for (std::size_t i = 0; i < source.size(); ++i) {
        best.residual = std::max(best.residual, ball::kobayashi_ball(best.tau(source[i]), target[i]));
    }
    return best;
}

// ---------------------------------------------------------------- normal forms

std::string to_string(NormalFormKind k) {
    switch (k) {
        case NormalFormKind::hyperbolic_dilation: return "hyperbolic-dilation";
        case NormalFormKind::parabolic_translation: return "parabolic-translation";
        case NormalFormKind::parabolic_heisenberg: return "parabolic-heisenberg";
        case NormalFormKind::elliptic: return "elliptic";
        case NormalFormKind::parabolic_zero_step: return "parabolic-zero-step";
    }
    return "elliptic";
}

namespace {

/// Projective matrix of z -> U mobius(a, z) acting on (z, 1).
CMatrix projective_matrix(const ball::BallAutomorphism& t) {
    const auto k = t.a.size();
    const double na = t.a.squaredNorm();
    CMatrix PsQ = CMatrix::Identity(k, k);
    if (na > 0.0) {
        const CMatrix P = t.a * t.a.adjoint() / na;
        PsQ = P + std::sqrt(1.0 - na) * (CMatrix::Identity(k, k) - P);
    }
    CMatrix M(k + 1, k + 1);
    M.topLeftCorner(k, k) = -t.U * PsQ;
    M.topRightCorner(k, 1) = t.U * t.a;
    M.bottomLeftCorner(1, k) = -t.a.adjoint();
    M(k, k) = 1.0;
    return M;
}

}  // namespace

NormalForm normal_form(const ball::BallAutomorphism& tau, double decision_tol, bool repelling_at_infinity) {
    const int k = static_cast<int>(tau.a.size());
    NormalForm nf;
    Eigen::ComplexEigenSolver<CMatrix> es(projective_matrix(tau));
    struct Candidate {
        CPoint p;
        double modulus;
    };
    std::vector<Candidate> boundary;
    bool interior = false;
    for (int j = 0; j <= k; ++j) {
        const CPoint v = es.eigenvectors().col(j);
        const cplx t = v[k];
        if (std::abs(t) < 1e-9 * v.norm()) continue;
        const CPoint p = v.head(k) / t;
        const double r = p.norm();
        if (r < 1.0 - 1e-3) interior = true;
        else if (r <= 1.0 + 1e-3) boundary.push_back({p / r, std::abs(es.eigenvalues()[j])});
    }
    if (interior) {
        nf.kind = NormalFormKind::elliptic;
        return nf;
    }
    if (boundary.empty()) {
        throw Error(ErrorKind::invariant_violation, "no-fixed-point", "automorphism without fixed points");
    }
    auto [lo, hi] = std::minmax_element(boundary.begin(), boundary.end(),
                                        [](const Candidate& x, const Candidate& y) { return x.modulus < y.modulus; });
    const double ratio = lo->modulus / hi->modulus;

    const CPoint w0 = [&] {
        CPoint w = CPoint::Zero(k);
        w[0] = I;
        return w;
    }();
    if (ratio < 1.0 - decision_tol) {
        nf.kind = NormalFormKind::hyperbolic_dilation;
        nf.attracting = hi->p;
        nf.repelling = lo->p;
        const CPoint top = repelling_at_infinity ? lo->p : hi->p;
        const CPoint bottom = repelling_at_infinity ? hi->p : lo->p;
        const CMatrix R = frame_from(top).adjoint();
        const CPoint e = ball::cayley(CPoint(R * bottom));
        auto sigma = [&](const CPoint& u) {
            const CPoint z = R.adjoint() * ball::cayley_inverse(from_origin(e, u));
            return to_origin(e, ball::cayley(CPoint(R * tau(z))));
        };
        const CPoint s0 = sigma(w0);
        nf.lambda = 1.0 / s0[0].imag();
        CMatrix V(k - 1, k - 1);
        const double eps = 0.1;
        for (int j = 1; j < k; ++j) {
            CPoint w = w0;
            w[j] = eps;
            V.col(j - 1) = std::sqrt(nf.lambda) * (sigma(w).tail(k - 1) - s0.tail(k - 1)) / eps;
        }
        nf.angles = sorted_angles(V);
        for (const double x : {0.0, 0.3, -1.2}) {
            CPoint u = w0 * 2.0;
            u[0] += x;
            for (int j = 1; j < k; ++j) u[j] = cplx(0.2 * j, -0.1);
            const CPoint got = sigma(u);
            CPoint want(k);
            want[0] = u[0] / nf.lambda;
            if (k > 1) want.tail(k - 1) = V * u.tail(k - 1) / std::sqrt(nf.lambda);
            nf.conjugation_error = std::max(nf.conjugation_error, max_abs_diff(got, want) / (1.0 + u.norm()));
        }
        return nf;
    }

    // Parabolic: the boundary candidates cluster at the unique fixed point.
    CPoint xi = CPoint::Zero(k);
    for (const auto& c : boundary) xi += c.p;
    xi /= xi.norm();
    nf.attracting = xi;
    nf.lambda = ratio;
    const CMatrix R = frame_from(xi).adjoint();
    auto sigma = [&](const CPoint& u) {
        const CPoint z = R.adjoint() * ball::cayley_inverse(u);
        return ball::cayley(CPoint(R * tau(z)));
    };
    const CPoint s0 = sigma(w0);
    const CPoint b = s0.tail(k - 1);
    CMatrix V(k - 1, k - 1);
    const double eps = 0.1;
    for (int j = 1; j < k; ++j) {
        CPoint w = w0;
        w[j] = eps;
        V.col(j - 1) = (sigma(w).tail(k - 1) - b) / eps;
    }
    CPoint c = CPoint::Zero(k - 1);
    if (k > 1) {
        Eigen::ComplexEigenSolver<CMatrix> ev(V);
        CPoint b_fix = CPoint::Zero(k - 1);
        for (int j = 0; j < k - 1; ++j) {
            if (std::abs(ev.eigenvalues()[j] - 1.0) < 1e-6) {
                const CPoint v = ev.eigenvectors().col(j).normalized();
                b_fix += v * inner(b, v);
            }
        }
        const CMatrix IV = CMatrix::Identity(k - 1, k - 1) - V;
        c = -IV.completeOrthogonalDecomposition().solve(CPoint(b - b_fix));
    }
    auto sigma2 = [&](const CPoint& u) {
        return heisenberg(0.0, c, sigma(heisenberg(0.0, CPoint(-c), u)));
    };
    const CPoint s2 = sigma2(w0);
    const double a2 = s2[0].real();
    const CPoint b2 = s2.tail(k - 1);
    if (b2.norm() < 1e-6 * (1.0 + std::abs(a2))) {
        nf.kind = std::abs(a2) < 1e-6 ? NormalFormKind::parabolic_zero_step
                                      : NormalFormKind::parabolic_translation;
        nf.sign = a2 > 0.0 ? 1 : (a2 < 0.0 ? -1 : 0);
        nf.angles = sorted_angles(V);
    } else {
        nf.kind = NormalFormKind::parabolic_heisenberg;
        nf.angles = sorted_angles(V, Eigen::Index{0});
    }
    for (const double x : {0.0, 0.3, -1.2}) {
        CPoint u = w0 * 2.0;
        u[0] += x;
        for (int j = 1; j < k; ++j) u[j] = cplx(0.2 * j, -0.1);
        CPoint lin = u;
        if (k > 1) lin.tail(k - 1) = V * u.tail(k - 1);
        const CPoint want = heisenberg(a2, b2, lin);
        nf.conjugation_error = std::max(nf.conjugation_error, max_abs_diff(sigma2(u), want) / (1.0 + u.norm()));
    }
    return nf;
}

CPoint apply_normal_form(const NormalForm& nf, const CPoint& w) {
    const auto k = w.size();
    CPoint out = w;
    auto rot = [&](Eigen::Index a) {
        return a < static_cast<Eigen::Index>(nf.angles.size()) ? std::exp(I * nf.angles[a]) : cplx(1.0);
    };
    switch (nf.kind) {
        case NormalFormKind::hyperbolic_dilation:
            out[0] = w[0] / nf.lambda;
            for (Eigen::Index j = 1; j < k; ++j) out[j] = rot(j - 1) * w[j] / std::sqrt(nf.lambda);
            return out;
        case NormalFormKind::parabolic_translation:
            out[0] = w[0] + static_cast<double>(nf.sign);
            for (Eigen::Index j = 1; j < k; ++j) out[j] = rot(j - 1) * w[j];
            return out;
        case NormalFormKind::parabolic_heisenberg:
            if (k < 2) break;
            out[0] = w[0] - 2.0 * w[1] + I;
            out[1] = w[1] - I;
            for (Eigen::Index j = 2; j < k; ++j) out[j] = rot(j - 2) * w[j];
            return out;
        default: break;
    }
    throw Error(ErrorKind::precondition, "no-normal-form", "elliptic or zero-step automorphism");
}

// ---------------------------------------------------------------- forward model

int model_dimension(const Eigen::VectorXd& sv, double rel, double gap) {
    const auto q = sv.size();
    if (q == 0 || sv[0] <= 0.0) return 0;
    int k = 0;
    while (k < q && sv[k] > rel * sv[0]) ++k;
    if (k < q) {
        const double g = sv[k] > 0.0 ? sv[k - 1] / sv[k] : std::numeric_limits<double>::infinity();
        if (g < gap) {
            std::string cands;
            for (int c = std::max(1, k - 1); c <= std::min<int>(static_cast<int>(q), k + 1); ++c) {
                cands += (cands.empty() ? "" : ",") + std::to_string(c);
            }
            throw Error(ErrorKind::non_convergence, "ambiguous-dimension",
                        "candidate k in {" + cands + "}, relative gap " + std::to_string(g));
        }
    }
    return k;
}

namespace {

std::vector<CPoint> forward_samples(const DomainSpec& d, const CPoint& base, const ForwardConfig& cfg) {
    SeededSampler rng(cfg.seed, d.q);
    std::vector<CPoint> out;
    const bool exact = d.kind == DomainKind::ball || d.kind == DomainKind::siegel;
    const LocalChart chart = exact ? LocalChart(d, base) : LocalChart();
    const double reach = exact ? 1.0 : boundary_distance(d, base);
    for (double r : cfg.radii) {
        for (int i = 0; i < cfg.samples_per_radius; ++i) {
            const CPoint u = std::tanh(r / 2.0) * rng.sphere(d.q);
            out.push_back(exact ? chart.inverse(u) : CPoint(base + reach * u));
        }
    }
    return out;
}

double trailing_spread(const std::vector<CPoint>& hist, int window) {
    const auto n = static_cast<int>(hist.size());
    double s = 0.0;
    for (int j = std::max(0, n - window); j < n; ++j) s = std::max(s, max_abs_diff(hist[j], hist.back()));
    return s;
}

}  // namespace

ModelEstimate extract_forward_model(const HoloMap& f, const CPoint& base, const ForwardConfig& cfg) {
    const auto& d = f.domain;
    if (!d.contains(base)) throw Error(ErrorKind::precondition, "out-of-domain", "base point");
    if (cfg.check_type) {
        const auto c = classify(f, base);
        if (c.type != MapType::hyperbolic && c.type != MapType::parabolic_nonzero_step) {
            throw Error(ErrorKind::precondition, "unsupported-map-type",
                        "forward models need hyperbolic or parabolic nonzero-step maps, got " + to_string(c.type));
        }
    }
    const bool exact = d.kind == DomainKind::ball || d.kind == DomainKind::siegel;
    const DomainMetric metric(d);
    const std::vector<CPoint> samples = [&] {
        auto s = forward_samples(d, base, cfg);
        s.insert(s.begin(), base);
        return s;
    }();
    const std::size_t ns = samples.size();

    ModelEstimate est;
    est.experimental = !exact;
    std::vector<CPoint> cur = samples, next(ns);
    for (std::size_t i = 0; i < ns; ++i) next[i] = f(samples[i]);
    std::vector<std::vector<CPoint>> hist(ns), hist_f(ns);
    std::vector<std::vector<double>> pull;  // per m, k_Omega(f^m x, f^m y_i) for the first pairs
    const std::size_t n_pull = std::min<std::size_t>(ns, 17);

    CPoint z = base;
    CMatrix D = CMatrix::Identity(d.q, d.q);
    LocalChart chart;
    CMatrix J;
    double spread = std::numeric_limits<double>::infinity();
    const int m_cap = exact ? cfg.m_max : std::min(cfg.m_max, 20);
    const double tol = cfg.tol;
    double tol_eff = tol;
    int m = 0;
    for (m = 1; m <= m_cap; ++m) {
        D = scaled_jacobian(f, z) * D;
        const CPoint zn = f(z);
        if (escaped(zn) || !d.contains(zn)) break;
        if (d.bounded() && metric.boundary_margin(zn) < kPrecisionMargin) break;
        LocalChart ch;
        try {
            ch = LocalChart(d, zn, cfg.squeeze, exact || m == 1 ? nullptr : &chart.embedding());
        } catch (const Error&) {
            break;
        }
        if (!exact) {
            if (ch.inner_radius < cfg.squeeze_floor) {
                throw Error(ErrorKind::precondition, "insufficient-squeezing",
                            "certificate " + std::to_string(ch.inner_radius) + " at stage " + std::to_string(m));
            }
            est.inner_radius = std::min(est.inner_radius, ch.inner_radius);
            tol_eff = tol + (1.0 - est.inner_radius);
        }
        const CMatrix Jm = ch.raw_jacobian() * D;
        ch.gauge = polar_unitary(Jm).adjoint();
        bool ok = true;
        std::vector<CPoint> hv(ns), hfv(ns), nn(ns);
        for (std::size_t i = 0; i < ns && ok; ++i) {
            nn[i] = f(next[i]);
            if (escaped(nn[i]) || !d.contains(nn[i])) ok = false;
        }
        if (!ok) break;
        for (std::size_t i = 0; i < ns && ok; ++i) {
            try {
                hv[i] = ch(next[i]);
                hfv[i] = ch(nn[i]);
            } catch (const Error&) {
                ok = false;
            }
            if (ok && (!is_finite(hv[i]) || !is_finite(hfv[i]))) ok = false;
        }
        if (!ok) break;
        std::vector<double> pk(n_pull, 0.0);
        for (std::size_t i = 1; i < n_pull; ++i) pk[i] = metric.distance(zn, next[i]);
        pull.push_back(pk);
        for (std::size_t i = 0; i < ns; ++i) {
            hist[i].push_back(hv[i]);
            hist_f[i].push_back(hfv[i]);
            cur[i] = next[i];
            next[i] = nn[i];
        }
        chart = ch;
        J = Jm;
        z = zn;
        if (m >= cfg.window) {
            spread = 0.0;
            for (std::size_t i = 0; i < ns; ++i) {
                spread = std::max(spread, trailing_spread(hist[i], cfg.window));
                spread = std::max(spread, trailing_spread(hist_f[i], cfg.window));
            }
            if (spread <= tol_eff) break;
        }
    }
    est.stages = static_cast<int>(hist[0].size());
    est.stage_spread = spread;
    est.tolerance = exact ? 1e-6 : 1e-6 + (1.0 - est.inner_radius);
    if (!(spread <= tol_eff)) {
        throw Error(ErrorKind::non_convergence, "non-convergent-model",
                    "stage spread " + std::to_string(spread) + " after " + std::to_string(est.stages) +
                        " stages (tolerance " + std::to_string(tol_eff) + ")");
    }

    Eigen::JacobiSVD<CMatrix> svd(J, Eigen::ComputeFullV);
    est.singular_values.assign(svd.singularValues().data(),
                               svd.singularValues().data() + svd.singularValues().size());
    est.k = model_dimension(svd.singularValues(), cfg.rank_rel, cfg.rank_gap);
    if (est.k == 0) throw Error(ErrorKind::invariant_violation, "degenerate-model", "constant limit map");
    const int k = est.k;
    // The gauge makes dh(base) = V S V^*, so its range is spanned by the leading columns of V.
    est.slice = svd.matrixV().leftCols(k);

    std::vector<CPoint> src(ns), dst(ns);
    for (std::size_t i = 0; i < ns; ++i) {
        const CPoint& h = hist[i].back();
        const CPoint& hf = hist_f[i].back();
        src[i] = est.slice.adjoint() * h;
        dst[i] = est.slice.adjoint() * hf;
        est.retract_defect = std::max(est.retract_defect, (h - est.slice * src[i]).norm());
        est.retract_defect = std::max(est.retract_defect, (hf - est.slice * dst[i]).norm());
        est.intertwiner.push_back({samples[i], src[i], dst[i]});
    }

    std::vector<ball::BallAutomorphism> starts;
    starts.push_back({dst[0], CMatrix::Identity(k, k)});
    if (exact && dst[0].norm() < 1.0) {
        // tau is approximately psi_M o psi_{M+1}^{-1} on the slice.
        CMatrix Dn = scaled_jacobian(f, z) * D;
        const CPoint zn = f(z);
        if (!escaped(zn) && d.contains(zn)) {
            LocalChart ch(d, zn);
            ch.gauge = polar_unitary(ch.raw_jacobian() * Dn).adjoint();
            const CMatrix S = est.slice;
            try {
                auto g = [&](const CPoint& w) { return CPoint(S.adjoint() * chart(ch.inverse(S * w))); };
                auto gi = [&](const CPoint& w) { return CPoint(S.adjoint() * ch(chart.inverse(S * w))); };
                starts.push_back(automorphism_from_maps(g, gi, k));
            } catch (const Error&) {
            }
        }
    }
    est.fit = fit_ball_automorphism(src, dst, starts, cfg.fit_starts, cfg.fit_iterations, cfg.seed + 1);
    est.tau = est.fit.tau;
    est.residual = est.fit.residual;

    est.normal = normal_form(est.tau);
    switch (est.normal.kind) {
        case NormalFormKind::hyperbolic_dilation: est.type = "hyperbolic"; break;
        case NormalFormKind::elliptic: est.type = "elliptic"; break;
        default: est.type = "parabolic"; break;
    }
    est.dilation = est.normal.kind == NormalFormKind::hyperbolic_dilation ? est.normal.lambda : 1.0;
    est.angles = est.normal.angles;

    // Pullback metric: final-stage distances against model distances from h(base) = 0.
    for (const auto& pk : pull) {
        double worst = 0.0;
        for (std::size_t i = 1; i < n_pull; ++i) {
            worst = std::max(worst, std::abs(pk[i] - ball::kobayashi_ball(src[0], src[i])));
        }
        est.pullback_trend.push_back(worst);
    }
    const std::size_t n_pairs = std::min<std::size_t>(ns - 1, exact ? ns - 1 : 32);
    for (std::size_t i = 1; i <= n_pairs; ++i) {
        const std::size_t j = i + 1 <= n_pairs ? i + 1 : 1;
        const double a = metric.distance(cur[0], cur[i]);
        const double b = metric.distance(cur[i], cur[j]);
        est.metric_agreement = std::max(est.metric_agreement, std::abs(a - ball::kobayashi_ball(src[0], src[i])));
        est.metric_agreement = std::max(est.metric_agreement, std::abs(b - ball::kobayashi_ball(src[i], src[j])));
    }
    return est;
}

StepCheckReport model_step_check(const HoloMap& f, const CPoint& x, const ModelEstimate& est, int m_steps,
                                 int m_max) {
    StepCheckReport rep;
    rep.c_model = est.type == "hyperbolic" ? -std::log(est.dilation) : 0.0;
    rep.c_map = divergence_rate(f, x, m_max).rate;
    // Model coordinates of x: the intertwiner row for x.
    const IntertwinerSample* row = nullptr;
    for (const auto& r : est.intertwiner) {
        if ((r.x - x).norm() == 0.0) row = &r;
    }
    if (row == nullptr) throw Error(ErrorKind::precondition, "unknown-point", "x must be a model sample");
    CPoint w = row->h;
    for (int m = 1; m <= m_steps; ++m) {
        w = est.tau(w);
        const auto s = forward_step(f, x, m);
        StepComparison c;
        c.m = m;
        c.map_step = s.limit ? *s.limit : (s.values.empty() ? 0.0 : s.values.back());
        c.model_step = ball::kobayashi_ball(row->h, w);
        rep.max_step_gap = std::max(rep.max_step_gap, std::abs(c.map_step - c.model_step));
        rep.steps.push_back(c);
    }
    return rep;
}

}  // namespace holokit
