#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "oss/errors.hpp"

namespace oss {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Real parts of the spectrum of a square matrix.
struct SpectrumReport {
  std::vector<double> eigen_real_parts;
  double max_real_part = 0.0;
};

/// Componentwise bounds; entries may be +/-infinity.
struct BoxBounds {
  Vector lo;
  Vector hi;

  int dim() const { return static_cast<int>(lo.size()); }
  bool strictly_inside(const Vector& x) const;
  /// Midpoint of the bounded coordinates, 0 for unbounded ones.
  Vector center() const;
};

bool all_finite(const Matrix& m);
void require_finite(const char* name, const Matrix& m);

/// Relative singular-value cutoff: sigma <= max(rows,cols) * eps * sigma_max
/// counts as zero.
double default_rank_tol(const Matrix& m);

/// Orthonormal basis N of the nullspace of M, via SVD. Singular values
/// sigma_i <= tol * sigma_max are treated as zero; tol < 0 selects the
/// default cutoff. Guarantees ||M*N|| <= tol * ||M||.
Matrix nullspace(const Matrix& m, double tol = -1.0);

/// Numerical rank under the same cutoff convention as nullspace().
int rank(const Matrix& m, double tol = -1.0);

/// Moore-Penrose pseudoinverse via SVD.
Matrix pseudoinverse(const Matrix& m, double tol = -1.0);

/// Minimum-norm least-squares solution of A x = b (SVD based).
Matrix lstsq(const Matrix& a, const Matrix& b, double tol = -1.0);

/// Real parts of all eigenvalues of a square matrix.
SpectrumReport max_eig_real(const Matrix& m);

bool is_hurwitz(const Matrix& m, double margin = 0.0);

/// Largest absolute eigenvalue magnitude; used for step-size policies.
double spectral_abs_max(const Matrix& m);

using VectorField = std::function<Vector(double, const Vector&)>;

struct TracePoint {
  double t;
  Vector x;
};

/// Fixed-step classical RK4. Steps of dt, with a shortened final step so the
/// last sample lands exactly on t1. Throws DivergenceError on non-finite
/// state.
std::vector<TracePoint> integrate(const VectorField& f, const Vector& x0, double t0,
                                  double t1, double dt);

/// One classical RK4 step.
Vector rk4_step(const VectorField& f, double t, const Vector& x, double h);

struct NewtonOptions {
  int max_iterations = 200;
  int max_backtracks = 60;
  /// Fraction of the distance to the box boundary an iterate may cover.
  double boundary_fraction = 0.995;
};

/// Damped Newton for g(x) = 0. Iterates stay strictly inside `box` when one
/// is given; steps are first clipped to the box interior and then halved
/// until the residual norm decreases. Throws NonConvergenceError when the
/// iteration budget runs out.
Vector newton_solve(const std::function<Vector(const Vector&)>& g,
                    const std::function<Matrix(const Vector&)>& jacobian, const Vector& x0,
                    double tol, const std::optional<BoxBounds>& box = std::nullopt,
                    const NewtonOptions& options = {});

/// Deterministic random source. The Gaussian variates are produced by an
/// explicit Box-Muller transform so that streams are identical across
/// platforms for a fixed seed.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  /// Uniform on (0, 1).
  double uniform();
  /// Uniform on [lo, hi).
  double uniform(double lo, double hi);
  /// Standard normal.
  double normal();
  Matrix gaussian_matrix(int rows, int cols);
  Vector gaussian_vector(int n);

private:
  std::uint64_t next_u64();
  std::uint64_t state_;
};

}  // namespace oss
