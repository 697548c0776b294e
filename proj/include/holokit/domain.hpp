#pragma once

#include "holokit/ball.hpp"
#include "holokit/numerics.hpp"

#include <string>
#include <vector>

namespace holokit {

enum class DomainKind { ball, siegel, egg, ellipsoid, custom };

[[nodiscard]] std::string to_string(DomainKind kind);
[[nodiscard]] DomainKind domain_kind_from_string(const std::string& s);

/// coeff * z^a * conj(z)^b
struct Monomial {
    cplx coeff;
    std::vector<int> a;
    std::vector<int> b;
};

/// Domain {rho < 0} with a real polynomial defining function in (z, conj z).
struct DomainSpec {
    DomainKind kind = DomainKind::ball;
    int q = 1;
    std::vector<double> coefficients;  ///< ellipsoid weights a_i
    std::vector<Monomial> terms;
    CPoint center;                     ///< interior reference point
    double circumradius = 1.0;         ///< about `center`

    [[nodiscard]] double rho(const CPoint& z) const;
    /// (d rho / d conj z_j)_j; the outward real normal is its real form.
    [[nodiscard]] CPoint dbar(const CPoint& z) const;
    /// Real gradient in (x_1, y_1, ..., x_q, y_q) ordering.
    [[nodiscard]] Eigen::VectorXd gradient(const CPoint& z) const;
    /// Real Hessian in the same ordering.
    [[nodiscard]] Eigen::MatrixXd hessian(const CPoint& z) const;
    [[nodiscard]] bool contains(const CPoint& z) const { return rho(z) < 0.0; }
    [[nodiscard]] bool bounded() const { return kind != DomainKind::siegel; }
    [[nodiscard]] bool is_quadric() const {
        return kind == DomainKind::ball || kind == DomainKind::ellipsoid;
    }
};

[[nodiscard]] DomainSpec make_ball(int q);
[[nodiscard]] DomainSpec make_siegel(int q);
/// |z1|^2 + |z2|^4 < 1
[[nodiscard]] DomainSpec make_egg();
/// sum a_i |z_i|^2 < 1
[[nodiscard]] DomainSpec make_ellipsoid(const std::vector<double>& a);
[[nodiscard]] DomainSpec make_custom(int q, std::vector<Monomial> terms, const CPoint& center,
                                     double circumradius);

/// Parameter t > 0 where the ray from interior `from` along `dir` leaves the domain.
[[nodiscard]] double ray_exit(const DomainSpec& d, const CPoint& from, const CPoint& dir);

/// Newton projection onto rho = 0 along the gradient.
[[nodiscard]] CPoint project_to_boundary(const DomainSpec& d, const CPoint& z);

/// Euclidean distance to the boundary (nearest-point refinement of sampled rays).
[[nodiscard]] double boundary_distance(const DomainSpec& d, const CPoint& z);

/// sup over the domain of |w - z|.
[[nodiscard]] double farthest_distance(const DomainSpec& d, const CPoint& z);

struct ConvexityResult {
    bool strongly_convex = false;
    double min_eigenvalue = 0.0;
};

[[nodiscard]] ConvexityResult strong_convexity_check(const DomainSpec& d, const CPoint& zeta);

/// Supporting data shared by all sandwich evaluations on one domain.
struct SupportingHyperplane {
    CPoint point;
    CPoint normal;  ///< unit outward complex normal
};

struct ProjectionDisc {
    CPoint direction;  ///< unit vector n; functional w -> <w, n>
    cplx center;
    double radius;
};

struct DomainGeometry {
    DomainSpec domain;
    std::vector<SupportingHyperplane> hyperplanes;
    std::vector<ProjectionDisc> projections;
    double enclosing_radius = 0.0;  ///< about domain.center
};

[[nodiscard]] DomainGeometry build_geometry(const DomainSpec& d, int directions = 512);

struct SandwichBound {
    double lower = 0.0;
    double upper = 0.0;
    std::string lower_witness;
    std::string upper_witness;
    bool upper_found = true;
    [[nodiscard]] double mid() const { return 0.5 * (lower + upper); }
    [[nodiscard]] double gap() const { return upper - lower; }
};

[[nodiscard]] SandwichBound kobayashi_sandwich(const DomainGeometry& g, const CPoint& z,
                                               const CPoint& w);
[[nodiscard]] SandwichBound kobayashi_sandwich(const DomainSpec& d, const CPoint& z,
                                               const CPoint& w);

/// Disc distance under the normalization k(0, t) = log((1+t)/(1-t)).
[[nodiscard]] double disc_distance(cplx a, cplx b, cplx center = 0.0, double radius = 1.0);

struct SqueezeBudget {
    int iterations = 200;
    int boundary_samples = 2048;
    int verification_samples = 10000;
    std::uint64_t seed = 1;
};

/// w -> mobius(a, L (w - c) / s)
struct SqueezeEmbedding {
    CMatrix L;
    CPoint c;
    double s = 1.0;
    CPoint a;
    [[nodiscard]] CPoint operator()(const CPoint& w) const;
};

struct SqueezeCertificate {
    SqueezeEmbedding embedding;
    double inner_radius = 0.0;
    double baseline = 0.0;
    int verified_samples = 0;
    double max_image_norm = 0.0;
    bool improved = false;
};

[[nodiscard]] SqueezeCertificate squeeze_lower(const DomainSpec& d, const CPoint& z,
                                               const SqueezeBudget& budget = {},
                                               const SqueezeEmbedding* warm_start = nullptr);

struct SqueezeTrendPoint {
    double distance = 0.0;
    double squeeze = 0.0;
    double baseline = 0.0;
};

struct SqueezeTrend {
    std::vector<SqueezeTrendPoint> points;
    bool weakly_convex_center = false;
    bool non_decreasing = true;  ///< within 1e-3
};

/// Points zeta - r_j * inward, r_j = r0 * 2^-j.
[[nodiscard]] SqueezeTrend squeeze_trend(const DomainSpec& d, const CPoint& zeta,
                                         const CPoint& inward, int n_points, double r0 = 0.5,
                                         const SqueezeBudget& budget = {});

struct HoroEstimate {
    double value = 0.0;
    ConvergenceReport evidence;
    double gap = 0.0;  ///< largest sandwich gap used
};

/// exp(lim [k(z, w_j) - k(pole, w_j)]) with w_j = zeta + 2^-j (pole - zeta).
[[nodiscard]] HoroEstimate horo_value_general(const DomainGeometry& g, const CPoint& pole,
                                              const CPoint& zeta, const CPoint& z,
                                              int max_steps = 36, int window = kDefaultWindow,
                                              double tol = 1e-6);

}  // namespace holokit
