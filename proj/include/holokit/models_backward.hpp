#pragma once

#include "holokit/models_forward.hpp"

#include <optional>
#include <string>
#include <vector>

namespace holokit {

/// Coordinates of the domain in which the repelling point sits at e1 of B^q.
struct BallFrame {
    std::string name;
    PointMap to_ball;
    PointMap from_ball;
};

/// Unitary frame on the ball; Cayley frame on Siegel (zeta given by its unit-sphere preimage).
[[nodiscard]] BallFrame standard_frame(const DomainSpec& d, const CPoint& zeta);

struct BackwardConfig {
    CPoint zeta;
    std::optional<double> lambda;  ///< defaults to the geodesic-step dilation estimate
    double R0 = 1.0;
    std::vector<double> t_seq;     ///< empty: phase-locked schedule
    double phase = 0.5;            ///< offset of the phase-locked schedule, in units of log lambda
    int max_iter = 100000;
    int trail_length = 10;
    int n_max = 6;
    int k_max = 400;
    double cauchy_tol = 1e-7;
    int cauchy_run = 3;            ///< consecutive trails that must agree
    double hysteresis = 1e-12;
    double step_tol = 1e-2;
    double compat_tol = 1e-8;
    std::optional<BallFrame> frame;  ///< required on convex domains
};

/// Smallest boundary margin of a stopping-time seed (ball frame).
inline constexpr double kSeedMargin = 1e-9;

struct StoppingTrail {
    double t = 0.0;
    int exit_time = 0;      ///< m_{n,k}
    double seed_margin = 0.0;
    double diff = -1.0;     ///< sup distance to the previous usable trail (-1 if none)
};

struct BackwardOrbitResult {
    OrbitRecord orbit;      ///< f(points[n + 1]) = points[n]
    CPoint zeta;
    double lambda = 1.0;
    std::string lambda_source;
    int n_used = 0;
    double R_n = 0.0;
    double r_n = 0.0;
    double epsilon_n = 0.0;
    CPoint z_n;             ///< ball frame
    std::vector<StoppingTrail> trails;
    /// sigma_n(x_{n,k}) and sigma_n(y_{n,k}) with sigma_n(z_n) = 0, sigma_n(e1) = e1.
    std::vector<CPoint> x_rescaled;
    std::vector<CPoint> y_rescaled;
    double compat_error = 0.0;
    double step_limit = 0.0;
    double step_gap = 0.0;  ///< |last step - log lambda|
    double koranyi_max = 0.0;
    std::vector<std::string> diagnostics;
};

[[nodiscard]] BackwardOrbitResult backward_orbit(const HoloMap& f, const BackwardConfig& config);

/// Limit of k(x_n, x_{n+m}) along a backward orbit (non-decreasing in n).
[[nodiscard]] ConvergenceReport backward_step(const DomainSpec& d, const OrbitRecord& orbit, int m,
                                              int window = kDefaultWindow, double tol = kDefaultTol);

struct PreModelConfig {
    std::vector<double> radii{0.5, 1.0, 2.0};
    int samples_per_radius = 24;
    int window = 3;
    double stage_tol = 1e-5;
    std::uint64_t seed = 23;
    int fit_iterations = 100;
    int fit_starts = 8;
    double rank_rel = 1e-5;
    double rank_gap = 10.0;
    int ray_points = 40;
    double c_tol = 1e-3;
};

struct StableSample {
    CPoint w;      ///< model point in B^k
    CPoint ell;    ///< l(w)
    CPoint f_ell;  ///< f(l(w))
};

struct PreModelEstimate {
    int k = 0;
    std::string type;
    double dilation = 1.0;  ///< repelling dilation of tau, compared with lambda_zeta
    std::vector<double> angles;
    NormalForm normal;
    ball::BallAutomorphism tau;
    CMatrix slice;
    std::vector<double> singular_values;
    double residual = 0.0;  ///< max |f(l(w)) - l(tau(w))|
    int stages = 0;
    double stage_spread = 0.0;
    OrbitRecord orbit;
    std::vector<StableSample> stable_samples;
    AutomorphismFit fit;
    double c_tau = 0.0;
    double c_orbit_inf = 0.0;  ///< inf_m s_m / m over the computed m
    double c_orbit_lim = 0.0;  ///< s_m / m at the largest computed m
    std::vector<double> s_over_m;
    bool c_consistent = false;
    std::vector<double> ray_koranyi;   ///< along l of the model ray toward the repelling point
    std::vector<double> ray_distance;  ///< Euclidean distance to zeta (ball picture)
    double ray_koranyi_max = 0.0;
};

/// Stages f^m o psi_m^{-1} along the orbit; exact kinds only.
[[nodiscard]] PreModelEstimate extract_pre_model(const HoloMap& f, const OrbitRecord& orbit,
                                                 const PreModelConfig& config = {});

struct UniquenessReport {
    std::vector<double> distances;  ///< k(x_m, y_m)
    int common = 0;
    bool monotone = true;
    double tail_min = 0.0;
    double tail_max = 0.0;
    bool same_class = false;
    std::string warning;
};

[[nodiscard]] UniquenessReport uniqueness_check(const DomainSpec& d, const OrbitRecord& a,
                                                const OrbitRecord& b, double tail_tol = 1e-2);

enum class CompactnessStatus { compact, boundary_drift, inconclusive, precondition_violated };
[[nodiscard]] std::string to_string(CompactnessStatus s);

struct CompactnessReport {
    CompactnessStatus status = CompactnessStatus::inconclusive;
    double L = 0.0;
    bool limits_established = false;
    bool drift = false;  ///< boundary margin shrinking along the sequences
    double max_norm_x = 0.0;
    double max_norm_y = 0.0;
    std::string detail;
};

/// Sequences in B^q with x_n in E(0, zeta, R), y_n outside, and matching limits
/// lim [k(0, x_n) - k(0, y_n)] = lim k(x_n, y_n) = L > 0.
[[nodiscard]] CompactnessReport rescaled_compactness_experiment(const std::vector<CPoint>& x,
                                                                const std::vector<CPoint>& y,
                                                                const CPoint& zeta, double R,
                                                                double tol = 1e-3);

}  // namespace holokit
