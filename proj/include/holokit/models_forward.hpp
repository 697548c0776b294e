#pragma once

#include "holokit/dynamics.hpp"

#include <optional>
#include <string>
#include <vector>

namespace holokit {

/// Automorphism-like chart of the domain sending a point p to 0 in B^q, followed by a
/// gauge unitary. Exact on ball and Siegel; a squeezing embedding on convex domains.
class LocalChart {
public:
    LocalChart() = default;
    LocalChart(const DomainSpec& d, const CPoint& p, const SqueezeBudget& budget = {},
               const SqueezeEmbedding* warm_start = nullptr);

    [[nodiscard]] CPoint operator()(const CPoint& z) const;
    /// Throws on convex domains (squeezing embeddings have no closed-form inverse).
    [[nodiscard]] CPoint inverse(const CPoint& u) const;
    [[nodiscard]] bool invertible() const;
    /// Jacobian at p of the chart before the gauge.
    [[nodiscard]] CMatrix raw_jacobian() const;

    CMatrix gauge;
    double inner_radius = 1.0;  ///< squeezing certificate (1 on exact kinds)
    [[nodiscard]] const CPoint& point() const { return p_; }
    [[nodiscard]] const SqueezeEmbedding& embedding() const { return embedding_; }

private:
    [[nodiscard]] CPoint raw(const CPoint& z) const;
    [[nodiscard]] CPoint raw_inverse(const CPoint& u) const;

    DomainKind kind_ = DomainKind::ball;
    CPoint p_;
    SqueezeEmbedding embedding_;
    DomainSpec domain_;
};

/// Jacobian with a central-difference step scaled to |z|.
[[nodiscard]] CMatrix scaled_jacobian(const HoloMap& f, const CPoint& z);

/// Unitary factor of the polar decomposition A = U P.
[[nodiscard]] CMatrix polar_unitary(const CMatrix& A);

/// psi_m o f^(m - n); stage(m, n) sends f^n(base) to 0.
struct RescaledStage {
    int m = 0;
    int n = 0;
    CPoint base;
    HoloMap f;
    LocalChart psi;

    [[nodiscard]] CPoint operator()(const CPoint& z) const;
};

[[nodiscard]] RescaledStage rescaled_stage(const HoloMap& f, const CPoint& base, int m, int n,
                                           const SqueezeBudget& budget = {});

/// Ball automorphism parameters as in BallAutomorphism: z -> U mobius(a, z).
struct AutomorphismFit {
    ball::BallAutomorphism tau;
    double cost = 0.0;      ///< mean squared |mobius(target, tau(source))|^2
    double residual = 0.0;  ///< max Kobayashi mismatch
    int start = 0;          ///< index of the winning start
    int iterations = 0;
};

/// Levenberg-damped Gauss-Newton over (a, U), multi-start; starts[0..] are tried first,
/// then seeded random starts until `n_starts` in total.
[[nodiscard]] AutomorphismFit fit_ball_automorphism(const std::vector<CPoint>& source,
                                                    const std::vector<CPoint>& target,
                                                    const std::vector<ball::BallAutomorphism>& starts,
                                                    int n_starts = 8, int iterations = 100,
                                                    std::uint64_t seed = 29);

/// Recovers (a, U) of an automorphism of B^k given the map and its inverse.
[[nodiscard]] ball::BallAutomorphism automorphism_from_maps(const PointMap& g, const PointMap& g_inv,
                                                            int k);

enum class NormalFormKind {
    hyperbolic_dilation,   ///< (z1/lambda, e^{it_j} z'_j / sqrt(lambda))
    parabolic_translation, ///< (z1 +- 1, e^{it_j} z'_j)
    parabolic_heisenberg,  ///< (z1 - 2 z'_1 + i, z'_1 - i, e^{it_j} z'_j) for j >= 2
    elliptic,
    parabolic_zero_step,
};
[[nodiscard]] std::string to_string(NormalFormKind k);

struct NormalForm {
    NormalFormKind kind = NormalFormKind::elliptic;
    double lambda = 1.0;           ///< dilation at the attracting boundary fixed point
    std::vector<double> angles;    ///< t_j in (-pi, pi], ascending
    int sign = 0;                  ///< +-1 for the translation form
    CPoint attracting;             ///< boundary fixed point sent to infinity
    std::optional<CPoint> repelling;
    double conjugation_error = 0.0;  ///< sup distance to the displayed form on test points
};

/// Normal form of an automorphism of B^k, with the attracting point at infinity.
/// `repelling_at_infinity` sends the repelling point to infinity instead (hyperbolic only).
[[nodiscard]] NormalForm normal_form(const ball::BallAutomorphism& tau, double decision_tol = 1e-3,
                                     bool repelling_at_infinity = false);

/// Normal-form map in Siegel coordinates of H^k.
[[nodiscard]] CPoint apply_normal_form(const NormalForm& nf, const CPoint& w);

struct ForwardConfig {
    int m_max = 80;
    int window = kDefaultWindow;
    double tol = 1e-9;
    int samples_per_radius = 64;
    std::vector<double> radii{0.5, 1.0, 2.0};
    std::uint64_t seed = 17;
    int fit_iterations = 100;
    int fit_starts = 8;
    double rank_rel = 1e-5;
    double rank_gap = 10.0;
    bool check_type = true;
    SqueezeBudget squeeze{60, 1024, 2000, 5};
    double squeeze_floor = 0.5;
};

struct IntertwinerSample {
    CPoint x;
    CPoint h;   ///< model coordinates in B^k
    CPoint hf;  ///< model coordinates of f(x)
};

struct ModelEstimate {
    int k = 0;
    std::string type;  ///< hyperbolic | parabolic | elliptic
    double dilation = 1.0;
    std::vector<double> angles;
    NormalForm normal;
    ball::BallAutomorphism tau;  ///< in B^k model coordinates
    CMatrix slice;               ///< q x k orthonormal basis of the image of h
    std::vector<IntertwinerSample> intertwiner;
    std::vector<double> singular_values;
    double residual = 0.0;
    double metric_agreement = 0.0;
    std::vector<double> pullback_trend;  ///< per stage m, max |k_Omega - k_B| on base pairs
    double retract_defect = 0.0;         ///< max distance of h-values from the slice
    int stages = 0;
    double stage_spread = 0.0;
    bool experimental = false;
    double inner_radius = 1.0;  ///< worst squeezing certificate used
    double tolerance = 1e-6;    ///< acceptance tolerance, widened on convex domains
    AutomorphismFit fit;
};

[[nodiscard]] ModelEstimate extract_forward_model(const HoloMap& f, const CPoint& base,
                                                  const ForwardConfig& config = {});

/// Numerical rank with a relative gap requirement; throws ambiguous-dimension.
[[nodiscard]] int model_dimension(const Eigen::VectorXd& singular_values, double rel, double gap);

struct StepComparison {
    int m = 0;
    double map_step = 0.0;    ///< s_m(x) of f
    double model_step = 0.0;  ///< k_{B^k}(h x, tau^m h x)
};

struct StepCheckReport {
    double c_model = 0.0;
    double c_map = 0.0;
    std::vector<StepComparison> steps;
    double max_step_gap = 0.0;
};

[[nodiscard]] StepCheckReport model_step_check(const HoloMap& f, const CPoint& x,
                                               const ModelEstimate& estimate, int m_steps = 5,
                                               int m_max = 200);

}  // namespace holokit
