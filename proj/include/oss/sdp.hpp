#pragma once

#include <functional>
#include <string>
#include <vector>

#include "oss/numerics.hpp"

namespace oss {

/// One affine matrix inequality F0 + sum_i x_i Fi >= 0. Coefficients are
/// stored per participating variable.
struct LmiBlock {
  Matrix F0;
  std::vector<std::pair<int, Matrix>> terms;  // (variable index, coefficient)

  int dim() const { return static_cast<int>(F0.rows()); }
  Matrix evaluate(const Vector& x) const;
};

/// Numerically extract an LMI block from an affine symmetric-matrix-valued
/// map: evaluates at 0 and at unit vectors. The map must be affine; the
/// extraction is exact for affine maps.
LmiBlock lmi_block_from_affine(int num_vars,
                               const std::function<Matrix(const Vector&)>& psd_expr);

/// min c'x subject to every block being positive semidefinite.
struct SdpProblem {
  int num_vars = 0;
  Vector c;
  std::vector<LmiBlock> blocks;
};

enum class SdpStatus { optimal, infeasible, numerical_failure };

struct SdpSolution {
  SdpStatus status = SdpStatus::numerical_failure;
  Vector x;
  double objective = 0.0;
  /// Smallest eigenvalue over all constraint blocks at the returned point.
  double min_margin = 0.0;
  int iterations = 0;
  std::string message;
};

struct SdpOptions {
  double tol = 1e-8;
  int max_iterations = 100;
  /// Fraction of the step to the cone boundary.
  double step_fraction = 0.99;
};

/// Dense primal-dual interior-point method with Nesterov-Todd scaling.
/// Intended for desk-scale problems (total LMI dimension up to a few
/// hundred). Infeasibility is reported through an approximate Farkas
/// certificate on the primal iterate.
SdpSolution solve_sdp(const SdpProblem& p, const SdpOptions& options = {});

inline SdpSolution solve_sdp(const SdpProblem& p, double tol) {
  SdpOptions o;
  o.tol = tol;
  return solve_sdp(p, o);
}

}  // namespace oss
