#pragma once

#include "holokit/numerics.hpp"

#include <limits>
#include <vector>

namespace holokit::ball {

// Distances are normalized so that k(0, t) = log((1+t)/(1-t)) on the unit disc.

/// Kobayashi distance of B^q.
[[nodiscard]] double kobayashi_ball(const CPoint& z, const CPoint& w);

/// Im z1 - |z'|^2, positive on the Siegel half-space H^q.
[[nodiscard]] double siegel_rho(const CPoint& z);

/// Kobayashi distance of H^q, evaluated without leaving Siegel coordinates.
[[nodiscard]] double kobayashi_siegel(const CPoint& z, const CPoint& w);

/// Euclidean boundary distance 1 - |z| of B^q.
[[nodiscard]] double ball_boundary_distance(const CPoint& z);

/// Möbius involution of B^q exchanging a and 0.
[[nodiscard]] CPoint mobius(const CPoint& a, const CPoint& z);

struct BallAutomorphism {
    CPoint a;
    CMatrix U;

    /// z -> U * mobius(a, z)
    [[nodiscard]] CPoint operator()(const CPoint& z) const;
    [[nodiscard]] CPoint inverse(const CPoint& w) const;
    [[nodiscard]] int dim() const { return static_cast<int>(a.size()); }
};

/// sigma(a) = 0, sigma(0) = a, sigma o sigma = id.
[[nodiscard]] BallAutomorphism mobius_to_origin(const CPoint& a);

enum class CayleyDirection { forward, inverse };

/// forward: B^q -> H^q, (i(1+z1)/(1-z1), z'/(1-z1)); inverse: its inverse.
[[nodiscard]] CPoint cayley_pair(CayleyDirection direction, const CPoint& z);
[[nodiscard]] CPoint cayley(const CPoint& z);
[[nodiscard]] CPoint cayley_inverse(const CPoint& w);

/// Affine automorphism of H^q taking p to (i, 0, ..., 0).
struct SiegelNormalizer {
    CPoint p;
    [[nodiscard]] CPoint operator()(const CPoint& z) const;
    [[nodiscard]] CPoint inverse(const CPoint& w) const;
};

/// B^q-valued chart of H^q sending p to 0: cayley_inverse after normalization.
[[nodiscard]] CPoint siegel_to_ball_at(const CPoint& p, const CPoint& z);
[[nodiscard]] CPoint ball_to_siegel_at(const CPoint& p, const CPoint& u);

/// Horosphere function of B^q. `center` is a unit vector.
[[nodiscard]] double horo_value(const CPoint& pole, const CPoint& center, const CPoint& z);

/// Horosphere function of H^q. Boundary points of H^q are passed by their
/// preimage on the unit sphere under the Cayley transform (e1 is infinity).
[[nodiscard]] double horo_value_siegel(const CPoint& pole, const CPoint& center, const CPoint& z);

/// exp((log h + k(pole, z)) / 2); the Koranyi region of size M is {value < M}.
[[nodiscard]] double koranyi_value(const CPoint& pole, const CPoint& center, const CPoint& z);
[[nodiscard]] double koranyi_value_siegel(const CPoint& pole, const CPoint& center,
                                          const CPoint& z);

/// Unit speed geodesic of B^q: t -> transport(tanh(t/2) * direction).
struct GeodesicRay {
    BallAutomorphism transport;
    CPoint direction;  ///< unit vector at the origin
    CPoint endpoint;   ///< boundary point reached as t -> +inf
    double length = std::numeric_limits<double>::infinity();

    [[nodiscard]] CPoint operator()(double t) const;
    /// Nearest point of the full line (t in R) to z, by golden section.
    [[nodiscard]] double nearest_parameter(const CPoint& z, double tol = 1e-8) const;
    [[nodiscard]] double distance_to_line(const CPoint& z) const;
    /// Same as above restricted to t in [lo, hi].
    [[nodiscard]] double nearest_parameter(const CPoint& z, double lo, double hi,
                                           double tol = 1e-8) const;
};

enum class GeodesicKind { segment, ray };

[[nodiscard]] GeodesicRay geodesic(const CPoint& z, const CPoint& w_or_center, GeodesicKind kind);

/// Inclusion E(0, e1, R) -> B^q is conjugate to a translate of H^q; exact metric.
[[nodiscard]] double horosphere_metric(double R, const CPoint& x, const CPoint& y);

/// Uniform-in-parameter sample of E(0, e1, R): Siegel heights above 1/R.
[[nodiscard]] CPoint sample_horosphere(double R, int q, SeededSampler& rng, double spread = 4.0);

struct HorosphereRadiusResult {
    double R_eps = 0.0;
    double closed_form = 0.0;  ///< R (1 - exp(-eps/2)), sufficient by the triangle argument
    double worst_excess = 0.0;  ///< max of k_E - k_B - eps at R_eps (<= 0)
    int pairs = 0;
};

/// Largest sampled R_eps (by bisection) with k_E <= k_B + eps on `pairs` pairs in E(0,e1,R_eps).
[[nodiscard]] HorosphereRadiusResult horosphere_radius_for(double R, double eps, int q, int pairs,
                                                           std::uint64_t seed);

struct SlimnessResult {
    double delta = 0.0;
    bool degenerate = false;
    int density = 0;
};

/// Max distance from sampled side points to the union of the other two sides.
[[nodiscard]] SlimnessResult slimness_delta(const CPoint& a, const CPoint& b, const CPoint& c,
                                            int density = 256);

struct LineProjectionResult {
    bool holds = false;
    double slack = 0.0;
    double z_gamma_t = 0.0;
};

/// Checks d(x0,z) >= d(x0,z_g) + d(z_g,z) - 6 delta for the line `gamma`, x0 = gamma(t0).
[[nodiscard]] LineProjectionResult line_projection_check(const GeodesicRay& gamma, double t0, const CPoint& z,
                                          double delta);

struct InclusionReport {
    int samples = 0;
    int in_A = 0;
    int in_K = 0;
    int in_A_wide = 0;
    int violations_A_in_K = 0;
    int violations_K_in_Awide = 0;
    double M = 0.0;
    double delta = 0.0;
    [[nodiscard]] int violations() const { return violations_A_in_K + violations_K_in_Awide; }
};

/// Classifies samples against A(gamma, M) <= K(p, zeta, M) <= A(gamma, M e^{6 delta}).
[[nodiscard]] InclusionReport region_A_vs_koranyi(const CPoint& pole, const CPoint& center, double M,
                                                  double delta, const std::vector<CPoint>& samples);

/// Empirical Gromov constant: max slimness over `count` seeded triangles.
[[nodiscard]] double empirical_delta(int q, int count, std::uint64_t seed, int density = 256);

}  // namespace holokit::ball
