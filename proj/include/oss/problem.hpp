#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "oss/numerics.hpp"
#include "oss/plant.hpp"

namespace oss {

/// Incremental sector bounds (m, L) for a smooth residual gradient:
/// the gradient increments satisfy  <dp, dq> >= m |dq|^2  and, when L is
/// finite, |dp|^2 <= L <dp, dq>. L may be infinity.
struct Sector {
  double m = 0.0;
  double L = std::numeric_limits<double>::infinity();
};

enum class ResidualKind { none, log_barrier, softmax_penalty, custom };

/// User-supplied smooth residual; hess may use a generalized (one-sided)
/// second derivative where the gradient is only piecewise differentiable.
struct CustomResidual {
  std::function<double(const Vector&)> value;
  std::function<Vector(const Vector&)> grad;
  std::function<Matrix(const Vector&)> hess;
};

/// Convex objective stored as an explicit split
///   f(x) = 1/2 x'Qx + l'x + residual(x)
/// so that the quadratic portion can be pulled out of robustness analyses.
/// The residual is one of: nothing, a coordinatewise log barrier on the
/// domain box, a coordinatewise soft quadratic penalty, or a custom smooth
/// convex term.
class ConvexFunction {
public:
  static ConvexFunction zero(int dim);
  static ConvexFunction quadratic(const Matrix& Q, const Vector& linear);
  /// Quadratic plus log barrier -sum_k w_k (log(hi_k - x_k) + log(x_k - lo_k))
  /// over the coordinates with positive weight; the box is the domain.
  static ConvexFunction with_log_barrier(const Matrix& Q, const Vector& linear,
                                         const Vector& lo, const Vector& hi,
                                         const Vector& weights, Sector sector);
  /// Quadratic plus c/2 * sum_k max(0, lo_k - x_k, x_k - hi_k)^2. Domain is
  /// unrestricted; infinite bounds disable the penalty per coordinate.
  static ConvexFunction with_softmax_penalty(const Matrix& Q, const Vector& linear,
                                             const Vector& lo, const Vector& hi,
                                             double weight, Sector sector);
  static ConvexFunction with_custom(const Matrix& Q, const Vector& linear,
                                    CustomResidual residual, std::optional<BoxBounds> box,
                                    Sector sector);

  int dim() const { return dim_; }
  const Matrix& quadratic_term() const { return Q_; }
  const Vector& linear_term() const { return linear_; }
  ResidualKind residual_kind() const { return kind_; }
  bool has_residual() const { return kind_ != ResidualKind::none; }
  const std::optional<BoxBounds>& box() const { return box_; }
  Sector sector() const { return sector_; }
  double min_quadratic_eigenvalue() const { return min_eig_Q_; }
  bool strongly_convex() const { return min_eig_Q_ + sector_.m > 0; }
  const Vector& barrier_weights() const { return barrier_weights_; }
  const Vector& penalty_lo() const { return penalty_lo_; }
  const Vector& penalty_hi() const { return penalty_hi_; }
  double penalty_weight() const { return penalty_weight_; }

  double value(const Vector& x) const;
  Vector residual_gradient(const Vector& x) const;
  Matrix residual_hessian(const Vector& x) const;

  /// Direct sum of independent scalar/low-dimensional pieces. Residual kinds
  /// must all be none or log_barrier.
  static ConvexFunction direct_sum(const std::vector<ConvexFunction>& parts);

  /// Zero-dimensional placeholder; real instances come from the factories.
  ConvexFunction() : Q_(0, 0), linear_(0) {}

private:
  void validate_and_finalize();

  int dim_ = 0;
  Matrix Q_;
  Vector linear_;
  ResidualKind kind_ = ResidualKind::none;
  std::optional<BoxBounds> box_;
  Sector sector_;
  double min_eig_Q_ = 0.0;
  Vector barrier_weights_;           // log_barrier
  Vector penalty_lo_, penalty_hi_;   // softmax_penalty
  double penalty_weight_ = 0.0;      // softmax_penalty
  CustomResidual custom_;
};

/// Full gradient Qx + l + residual_gradient. Throws DomainError outside the
/// open domain of a barrier.
Vector gradient(const ConvexFunction& c, const Vector& x);
Matrix hessian(const ConvexFunction& c, const Vector& x);

/// Inverse gradient map: the unique u with gradient(c, u) = xi, realized by
/// damped Newton from the box center. Requires strong convexity; with a
/// bounded domain the residual must be essentially smooth (a barrier).
Vector grad_inverse(const ConvexFunction& c, const Vector& xi);

/// Minimum over sampled pairs of the normalized incremental sector form for
/// the declared (m, L). Nonnegative (up to roundoff) iff the declaration is
/// consistent with the residual on the sampled region.
double sector_check_min(const ConvexFunction& c, int num_pairs, std::uint64_t seed);

/// Sector suggestion for a coordinatewise log barrier: m = w * 8/(hi-lo)^2
/// minimized over coordinates, L = infinity.
Sector log_barrier_sector(const Vector& lo, const Vector& hi, const Vector& weights);
/// Sector for the soft penalty: (0, weight).
Sector softmax_penalty_sector(double weight);

/// Steady-state optimization program
///   minimize f0(u) + g0(z)
///   s.t.     z = Gu u + Gw w,  0 = Hz z + Hu u + Hw w.
struct OssProblem {
  ConvexFunction f0;  // on inputs, dim m
  ConvexFunction g0;  // on outputs, dim r
  Matrix Hz, Hu, Hw;  // nc x r, nc x m, nc x nw
  std::optional<BoxBounds> disturbance_box;
  int m = 0, r = 0, nc = 0, nw = 0;
};

OssProblem make_oss_problem(ConvexFunction f0, ConvexFunction g0, const Matrix& Hz,
                            const Matrix& Hu, const Matrix& Hw,
                            std::optional<BoxBounds> disturbance_box = std::nullopt);

/// Primal-dual candidate with its first-order optimality residuals.
struct KktPoint {
  Vector u_star;
  Vector z_star;
  Vector mu_star;
  double stationarity_residual = 0.0;
  double feasibility_residual = 0.0;
};

/// Euclidean norms of the stationarity and feasibility residuals
///   | grad f0(u) + Gu' grad g0(z) + (Hz Gu + Hu)' mu |
///   | Hz z + Hu u + Hw w |
/// evaluated with the measured output z.
std::pair<double, double> kkt_residual(const OssProblem& prob, const DcGains& gains,
                                       const Vector& u, const Vector& z, const Vector& mu,
                                       const Vector& w);

/// Independent optimizer: reduces the program to the feasible subspace,
/// runs damped Newton on the reduced stationarity condition, and recovers
/// the multiplier by least squares. Residuals of the returned point are
/// <= 1e-9.
KktPoint solve_reference(const OssProblem& prob, const DcGains& gains, const Vector& w);

/// Assumption checks on the problem data at specific disturbance values:
/// executable counterparts of convexity, differentiability, and strict
/// feasibility requirements.
struct DataAssumptionReport {
  double f0_sector_min = 0.0;
  double g0_sector_min = 0.0;
  bool f0_quadratic_psd = true;
  bool g0_quadratic_psd = true;
  std::vector<bool> strictly_feasible;  // one per checked w
  bool all_ok = false;
};

DataAssumptionReport verify_problem_data(const OssProblem& prob, const DcGains& gains,
                                         const std::vector<Vector>& w_samples,
                                         std::uint64_t seed = 2024);

}  // namespace oss
