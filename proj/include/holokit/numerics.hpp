#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace holokit {

using cplx = std::complex<double>;
using CPoint = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using PointMap = std::function<CPoint(const CPoint&)>;

/// Outcome classes; the numeric values double as CLI exit codes.
enum class ErrorKind : int {
    schema = 2,
    non_convergence = 3,
    invariant_violation = 4,
    precondition = 5,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string code, const std::string& what)
        : std::runtime_error(code + ": " + what), kind_(kind), code_(std::move(code)) {}

    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }
    [[nodiscard]] const std::string& code() const noexcept { return code_; }

private:
    ErrorKind kind_;
    std::string code_;
};

inline constexpr double kDerivativeStep = 1e-6;
inline constexpr double kBoundaryGuard = 1e-12;
inline constexpr int kDefaultWindow = 8;
inline constexpr double kDefaultTol = 1e-6;

[[nodiscard]] bool is_finite(const CPoint& z);
void require_finite(const CPoint& z, const char* what);

/// Hermitian product <z, w> = sum z_i conj(w_i).
[[nodiscard]] cplx inner(const CPoint& z, const CPoint& w);
[[nodiscard]] CPoint unit_vector(int q, int i);

struct ConvergenceReport {
    std::vector<double> values;
    bool converged = false;
    std::optional<double> limit;
    int window = kDefaultWindow;
    double tol = kDefaultTol;
};

/// Converged iff the spread of the last `window` values is at most `tol`.
[[nodiscard]] ConvergenceReport detect_limit(const std::vector<double>& values,
                                             int window = kDefaultWindow,
                                             double tol = kDefaultTol);

/// Componentwise detect_limit on a sequence of points (real and imaginary parts).
struct PointConvergence {
    bool converged = false;
    CPoint limit;
    double spread = 0.0;
};
[[nodiscard]] PointConvergence detect_point_limit(const std::vector<CPoint>& values,
                                                  int window = kDefaultWindow,
                                                  double tol = kDefaultTol);

enum class LiminfMode { liminf_tail, monotone_limit };

/// liminf_tail: minimum of the trailing quarter (at least kDefaultWindow values).
/// monotone_limit: final value of a sequence that is monotone within `tol`.
[[nodiscard]] double monotone_liminf(const std::vector<double>& values, LiminfMode mode,
                                     double tol = 1e-9);

/// d f_i / d z_j by central differences along the real and imaginary axes.
[[nodiscard]] CMatrix numerical_jacobian(const PointMap& f, const CPoint& z,
                                         double h = kDerivativeStep);

/// Splitmix-seeded xoshiro256** stream; results are bit-identical across platforms.
class SeededSampler {
public:
    explicit SeededSampler(std::uint64_t seed, int dimension = 1);

    [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }
    [[nodiscard]] int dimension() const noexcept { return dimension_; }

    std::uint64_t next_u64();
    double uniform();                       ///< [0, 1)
    double uniform(double lo, double hi);
    double normal();                        ///< Box-Muller, no cached spare
    CPoint gaussian(int q);
    CPoint sphere(int q);                   ///< uniform on the unit sphere of C^q
    CPoint ball(int q, double radius = 1.0);  ///< uniform in the ball of C^q
    CMatrix unitary(int q);                 ///< Haar-distributed unitary via QR

private:
    std::uint64_t seed_;
    int dimension_;
    std::uint64_t s_[4];
};

/// Deterministic, well spread unit vectors of C^q (Kronecker sequence pushed
/// through Box-Muller, then normalized).
[[nodiscard]] std::vector<CPoint> sphere_directions(int q, int n);

/// Golden-section minimization of a unimodal function on [a, b].
[[nodiscard]] double golden_section_min(const std::function<double(double)>& f, double a,
                                        double b, double tol = 1e-8);

/// Largest t in [lo, hi] with pred(t) true, assuming pred is true at lo and
/// monotone (true then false).
[[nodiscard]] double bisect_last_true(const std::function<bool(double)>& pred, double lo,
                                      double hi, double tol = 1e-12, int max_iter = 200);

/// Unitary factor of the polar decomposition of the map restricted to its range,
/// i.e. the G with G * J Hermitian positive semidefinite (G = V W^*).
[[nodiscard]] CMatrix gauge_unitary(const CMatrix& J);

}  // namespace holokit
