#pragma once

#include "holokit/domain.hpp"

#include <optional>
#include <string>
#include <vector>

namespace holokit {

/// Orbit statistics stop at this boundary margin; the metric guard itself is kBoundaryGuard.
inline constexpr double kPrecisionMargin = 1e-8;
inline constexpr double kEscapeNorm = 1e150;

/// Non-finite or beyond kEscapeNorm.
[[nodiscard]] bool escaped(const CPoint& z);
/// Unitary with first column zeta (a unit vector).
[[nodiscard]] CMatrix frame_from(const CPoint& zeta);

/// Exact metric on ball, Siegel and ellipsoids; sandwich midpoints elsewhere.
class DomainMetric {
public:
    explicit DomainMetric(const DomainSpec& d);

    [[nodiscard]] const DomainSpec& domain() const { return geometry_.domain; }
    [[nodiscard]] const DomainGeometry& geometry() const { return geometry_; }
    [[nodiscard]] bool exact() const;

    [[nodiscard]] double distance(const CPoint& z, const CPoint& w) const;
    /// Upper minus lower bound of `distance` (0 on exact kinds).
    [[nodiscard]] double gap(const CPoint& z, const CPoint& w) const;
    /// Siegel centers are unit-sphere Cayley preimages (e1 is infinity).
    [[nodiscard]] double horo(const CPoint& pole, const CPoint& center, const CPoint& z) const;
    [[nodiscard]] double koranyi(const CPoint& pole, const CPoint& center, const CPoint& z) const;
    /// Euclidean boundary distance on bounded kinds, rho on Siegel.
    [[nodiscard]] double boundary_margin(const CPoint& z) const;
    [[nodiscard]] bool near_boundary(const CPoint& z) const { return boundary_margin(z) < kBoundaryGuard; }
    /// Point at parameter t on the ray from pole toward the boundary point `center`
    /// (unit-speed geodesic on ball/Siegel, w = center + e^-t (pole - center) otherwise).
    [[nodiscard]] CPoint ray(const CPoint& pole, const CPoint& center, double t) const;
    /// Largest t at which `ray` stays inside the numerical interior.
    [[nodiscard]] double ray_limit(const CPoint& pole, const CPoint& center) const;
    /// Random interior point.
    [[nodiscard]] CPoint sample(SeededSampler& rng, double spread = 0.95) const;
    /// Boundary point of a Siegel center in the ball picture (identity elsewhere).
    [[nodiscard]] CPoint to_ball(const CPoint& z) const;

private:
    DomainGeometry geometry_;
};

struct HoloMap {
    std::string name;
    DomainSpec domain;
    DomainSpec codomain;
    PointMap eval;
    std::function<CMatrix(const CPoint&)> jacobian;  ///< optional
    bool is_automorphism = false;

    [[nodiscard]] CPoint operator()(const CPoint& z) const { return eval(z); }
    [[nodiscard]] CMatrix jac(const CPoint& z, double h = kDerivativeStep) const;
};

/// Checks that sampled interior points are mapped into the codomain.
[[nodiscard]] HoloMap make_holomap(std::string name, const DomainSpec& domain,
                                   const DomainSpec& codomain, PointMap eval,
                                   bool is_automorphism = false, int verify_samples = 1000,
                                   std::uint64_t seed = 7);

[[nodiscard]] HoloMap identity_map(const DomainSpec& d);
/// z -> A z
[[nodiscard]] HoloMap linear_map(const DomainSpec& d, const CMatrix& A);
/// Automorphism z -> -U phi_{-a}(z), sending 0 to U a; on the disc (z + a) / (1 + conj(a) z).
[[nodiscard]] HoloMap ball_translation(const CPoint& a, const CMatrix& U);
[[nodiscard]] HoloMap ball_translation(const CPoint& a);
/// Siegel affine map w -> (d1 w1 + b, d2 w2, ..., dq wq).
[[nodiscard]] HoloMap siegel_affine(const std::vector<cplx>& d, cplx b = 0.0);
/// (w1 - 2 w2 + i, w2 - i, ...) on H^q.
[[nodiscard]] HoloMap siegel_parabolic_shear(int q);
/// Coordinate polynomials: out_i = sum_k c_{ik} z^{e_{ik}}.
struct PolyTerm {
    cplx coeff;
    std::vector<int> exponents;
};
[[nodiscard]] HoloMap polynomial_map(const DomainSpec& d, std::vector<std::vector<PolyTerm>> coords,
                                     std::string name = "polynomial");
/// C^{-1} o f o C on the ball, for a Siegel self-map f.
[[nodiscard]] HoloMap cayley_conjugate(const HoloMap& siegel_map);
[[nodiscard]] HoloMap compose(const HoloMap& outer, const HoloMap& inner);
/// Egg automorphism (z1, z2) -> (phi(z1), z2 * (sqrt(1 - |a|^2) / (1 + conj(a) z1))^{1/2}),
/// with phi(z1) = (z1 + a) / (1 + conj(a) z1).
[[nodiscard]] HoloMap egg_automorphism(double a);

enum class OrbitDirection { forward, backward };

struct OrbitRecord {
    std::vector<CPoint> points;
    OrbitDirection direction = OrbitDirection::forward;
    CPoint base;
    std::vector<double> distance_to_base;
    std::vector<double> steps;  ///< k(x_n, x_{n+1})
    std::vector<double> horo;   ///< at (horo_pole, horo_center) when set
    std::optional<CPoint> horo_pole;
    std::optional<CPoint> horo_center;
    bool exited = false;
    double solver_tol = 0.0;
    double metric_gap = 0.0;
    std::string note;
};

struct OrbitOptions {
    std::optional<CPoint> pole;
    std::optional<CPoint> center;
    bool stats = true;
};

[[nodiscard]] OrbitRecord iterate(const HoloMap& f, const CPoint& x, int n,
                                  const OrbitOptions& opts = {});

/// Fills distance/step/horosphere statistics for an existing orbit.
void fill_orbit_stats(const DomainMetric& metric, OrbitRecord& orbit);

/// Limit of k(f^n x, f^{n+m} x); `n_max` iterates at most.
[[nodiscard]] ConvergenceReport forward_step(const HoloMap& f, const CPoint& x, int m,
                                             int n_max = 200, int window = kDefaultWindow,
                                             double tol = kDefaultTol);

struct DivergenceRate {
    double rate = 0.0;
    int m_used = 0;        ///< largest m reached before the orbit left the numerical interior
    ConvergenceReport trend;  ///< k(f^m x, x) / m
    std::optional<double> second_base_rate;
};

[[nodiscard]] DivergenceRate divergence_rate(const HoloMap& f, const CPoint& x, int m_max,
                                             const std::optional<CPoint>& second_base = std::nullopt);

enum class DilationMethod { liminf, geodesic_step };

struct DilationResult {
    double value = 1.0;
    double liminf_value = 1.0;
    double geodesic_step_value = 1.0;
    std::vector<double> trace;  ///< k(p, z) - k(p, f(z)) along the ray
};

[[nodiscard]] DilationResult dilation(const HoloMap& f, const CPoint& zeta, const CPoint& pole,
                                      DilationMethod method = DilationMethod::liminf);

enum class MapType { elliptic, hyperbolic, parabolic_zero_step, parabolic_nonzero_step, inconclusive };
[[nodiscard]] std::string to_string(MapType t);

struct ClassifyBudget {
    int max_iter = 100000;
    int m_max = 200;
    double boundary_tol = 1e-8;
    double decision_tol = 1e-3;
};

struct ClassificationResult {
    MapType type = MapType::inconclusive;
    CPoint denjoy_wolff;       ///< interior fixed point, or boundary point (ball picture)
    bool boundary = false;
    double dilation = 1.0;
    double divergence_rate = 0.0;
    double s1 = 0.0;
    double rate_dilation_gap = 0.0;  ///< |log lambda + c|
    int iterations = 0;
    ConvergenceReport step_evidence;
    DivergenceRate rate_evidence;
};

[[nodiscard]] ClassificationResult classify(const HoloMap& f, const CPoint& x,
                                            const ClassifyBudget& budget = {});

struct JuliaReport {
    int samples = 0;
    int violations = 0;
    double worst_ratio = 0.0;  ///< max h(f z) / h(z)
    double lambda = 1.0;
};

/// Samples z in E(pole, zeta, R) for each R and checks h(f z) <= lambda h(z) (1 + 1e-6).
[[nodiscard]] JuliaReport julia_check(const HoloMap& f, const CPoint& zeta, const CPoint& pole,
                                      double lambda, const std::vector<double>& R_values,
                                      int n_samples, std::uint64_t seed = 11);

}  // namespace holokit
