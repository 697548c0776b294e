#pragma once

#include "holokit/models_backward.hpp"

#include <map>
#include <string>
#include <vector>

namespace holokit {

using Exponent = std::vector<int>;

/// Polynomial in n commuting variables, truncated at total degree 4.
class TruncatedSeries {
public:
    static constexpr int kDegree = 4;

    explicit TruncatedSeries(int variables = 0) : n_(variables) {}
    [[nodiscard]] static TruncatedSeries constant(int variables, cplx c);
    [[nodiscard]] static TruncatedSeries variable(int variables, int index, cplx c = 1.0);

    [[nodiscard]] int variables() const noexcept { return n_; }
    [[nodiscard]] const std::map<Exponent, cplx>& terms() const noexcept { return terms_; }
    /// Products of degree > 4 dropped while building this series.
    [[nodiscard]] long discarded() const noexcept { return discarded_; }

    [[nodiscard]] cplx coeff(const Exponent& e) const;
    void add_term(const Exponent& e, cplx c);
    [[nodiscard]] TruncatedSeries homogeneous(int degree) const;
    [[nodiscard]] cplx evaluate(const std::vector<cplx>& x) const;
    [[nodiscard]] cplx evaluate(const CPoint& x) const;
    /// Largest |coefficient| among terms of total degree in [lo, hi].
    [[nodiscard]] double max_abs(int lo = 0, int hi = kDegree) const;
    /// Removes coefficients with modulus <= tol.
    void prune(double tol = 0.0);

    TruncatedSeries& operator+=(const TruncatedSeries& o);
    TruncatedSeries& operator-=(const TruncatedSeries& o);
    TruncatedSeries& operator*=(cplx s);
    friend TruncatedSeries operator+(TruncatedSeries a, const TruncatedSeries& b) { return a += b; }
    friend TruncatedSeries operator-(TruncatedSeries a, const TruncatedSeries& b) { return a -= b; }
    friend TruncatedSeries operator*(TruncatedSeries a, cplx s) { return a *= s; }
    friend TruncatedSeries operator*(cplx s, TruncatedSeries a) { return a *= s; }
    friend TruncatedSeries operator*(const TruncatedSeries& a, const TruncatedSeries& b);

private:
    int n_;
    std::map<Exponent, cplx> terms_;
    long discarded_ = 0;
};

[[nodiscard]] int degree(const Exponent& e);

/// f(subs_1, ..., subs_n); the substitutions share a variable set and have no constant term.
[[nodiscard]] TruncatedSeries compose(const TruncatedSeries& f,
                                      const std::vector<TruncatedSeries>& subs);
/// compose() restricted to substitutions whose linear part is an invertible square matrix.
[[nodiscard]] TruncatedSeries change_variables(const TruncatedSeries& f,
                                               const std::vector<TruncatedSeries>& subs);
/// Linear part of a map given by series without constant terms.
[[nodiscard]] CMatrix linear_part(const std::vector<TruncatedSeries>& map);
/// Inverse map through degree 4 (invertible linear part required).
[[nodiscard]] std::vector<TruncatedSeries> invert_map(const std::vector<TruncatedSeries>& map);

/// Boundary normal form w(z) at a strongly pseudoconvex point: the image has local
/// defining function -Im w1 + ||w'||^2 - P4(Re w1, w', conj w') + o(|Re w1|^4 + ||w'||^4).
struct NormalFormChart {
    DomainSpec domain;
    CPoint zeta;
    std::vector<TruncatedSeries> map;      ///< w as series in z - zeta
    std::vector<TruncatedSeries> inverse;  ///< z - zeta as series in w (Newton seed)
    CMatrix linear;
    double linear_condition = 1.0;
    /// Series in (Re w1, Im w1, w_2..w_q, conj w_2..conj w_q); Im w1 enters only through -Im w1.
    TruncatedSeries defining;
    TruncatedSeries p4;                    ///< same variables, depends on (Re w1, w', conj w')
    double normal_form_error = 0.0;        ///< largest off-form coefficient in degrees 1..3
    double remainder_estimate = 0.0;       ///< max |height - series height| / s^5 at s = 0.05
    double p4_min = 0.0;                   ///< of P4 / (|Re w1|^4 + ||w'||^4) over sampled directions
    double p4_max = 0.0;
    double C = 0.0;
    double D = 0.0;
    int direction_samples = 0;
    long discarded_terms = 0;
    double convexity = 0.0;                ///< kappa of the added kappa (|Re w1|^4 + ||w'||^4)
    bool exact = false;                    ///< ball: w = cayley_at_e1(U z) with U zeta = e1
    CMatrix unitary;

    [[nodiscard]] CPoint to_chart(const CPoint& z) const;
    /// Newton inversion of the polynomial chart; throws non_convergence "chart-inverse".
    [[nodiscard]] CPoint from_chart(const CPoint& w) const;
    /// P4 at (Re w1, w').
    [[nodiscard]] double p4_at(double x, const CPoint& w_prime) const;
};

struct ChartOptions {
    int directions = 10000;
    std::uint64_t seed = 41;
    double coefficient_tol = 1e-9;
    double safety = 0.1;
    /// Smallest C sought: the removable quartic is replaced by kappa (|Re w1|^4 + ||w'||^4).
    double convexity = 0.25;
};

[[nodiscard]] NormalFormChart normal_form_chart(const DomainSpec& d, const CPoint& zeta,
                                              const ChartOptions& options = {});

/// Boundary height Im w1 over (Re w1, w') = s * (x, w') in chart coordinates, found by
/// solving rho(w^{-1}(.)) = 0; the series-free reference for P4.
[[nodiscard]] double boundary_height(const NormalFormChart& chart, double x, const CPoint& w_prime);

/// P4 in direction (x, w') from boundary heights at s and s/2 (Richardson).
[[nodiscard]] double p4_from_heights(const NormalFormChart& chart, double x, const CPoint& w_prime,
                                     double s = 0.02);

/// Fraction of sampled directions on which C (|x|^4 + ||w'||^4) <= P4 <= D/2 (...) fails.
[[nodiscard]] int sandwich_violations(const NormalFormChart& chart, int directions,
                                      std::uint64_t seed);

/// T(w1, w') = (R w1, R w') / (R - i w1)
[[nodiscard]] CPoint push_T(double R, const CPoint& w);
[[nodiscard]] CPoint push_T_inverse(double R, const CPoint& eta);
/// (i (1 - z1) / (1 + z1), z' / (1 + z1)): e1 -> 0, -e1 -> infinity.
[[nodiscard]] CPoint cayley_at_e1(const CPoint& z);
[[nodiscard]] CPoint cayley_at_e1_inverse(const CPoint& w);

struct LocalizedChart {
    NormalFormChart chart;
    double R = 0.0;
    /// Defining function of the pushed image, scaled by |R + i eta1|^2 / R^2; same variables.
    TruncatedSeries defining;
    /// vs -Im eta1 + ||eta'||^2 + |eta1|^2 / R - P4(Re eta1, eta', conj eta').
    double series_error = 0.0;
    /// Largest coefficient of a degree >= 2 term carrying Im eta1, beyond (Im eta1)^2 / R.
    double im_dependence = 0.0;
    BallFrame frame;  ///< z -> cayley_at_e1_inverse(T(w(z))), zeta -> e1
};

[[nodiscard]] LocalizedChart localized_chart(const NormalFormChart& chart, double R);

/// Frame with to_ball = from_ball = identity (ball at e1).
[[nodiscard]] BallFrame identity_frame();

struct InclusionCertificate {
    double R = 0.0;
    double rho = 0.0;
    int horosphere_samples = 0;
    int horosphere_violations = 0;   ///< E(0, e1, R) points outside the transformed domain
    int neighborhood_samples = 0;    ///< transformed-domain points found in B(e1, rho)
    int neighborhood_violations = 0; ///< of those, points outside B^q
    std::vector<CPoint> witnesses;   ///< ball-picture points, at most 8
    double R_admissible = 0.0;
    double rho_admissible = 0.0;
};

/// Sampled check of E(0, e1, R) in the transformed domain and of
/// (transformed domain) meet B(e1, rho) in B^q, with bisected admissible radii.
[[nodiscard]] InclusionCertificate verify_inclusions(const DomainSpec& d, const BallFrame& frame,
                                                     double R, double rho, int n_samples,
                                                     std::uint64_t seed = 43);

struct DistanceComparison {
    double epsilon = 0.0;
    double R_eps = 0.0;
    int pairs = 0;
    int violations = 0;
    double max_gap = 0.0;             ///< largest sandwich gap used
    std::vector<double> margins;      ///< eps - max(k_B - lower, upper - k_B) per pair at R_eps
    double min_margin = 0.0;
};

/// Largest sampled R_eps <= R_max with k_B - eps <= k_Omega <= k_B + eps on E(0, e1, R_eps).
[[nodiscard]] DistanceComparison distance_comparison(const DomainSpec& d, const BallFrame& frame,
                                                     double epsilon, double R_max = 1.0,
                                                     int pairs = 1000, std::uint64_t seed = 47);

}  // namespace holokit
