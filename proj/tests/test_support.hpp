#pragma once

#include <cmath>
#include <functional>

#include "oss/optimality.hpp"
#include "oss/plant.hpp"
#include "oss/problem.hpp"

namespace oss::testing {

/// Academic servo objectives: f0 = sum 1/2 u_k^2 + gamma * barrier on
/// (-0.75, 0.75), g0 = c * soft penalty keeping z_3..z_5 in [-1, 1].
/// The barrier residual declares the finite Lipschitz bound valid on the
/// sampled interior (gain synthesis needs a class-(iv) core).
inline ConvexFunction academic_f0(int m = 4, double gamma = 0.01, double bound = 0.75) {
  const Vector lo = Vector::Constant(m, -bound);
  const Vector hi = Vector::Constant(m, bound);
  const Vector w = Vector::Constant(m, gamma);
  Sector sector = log_barrier_sector(lo, hi, w);
  if (gamma == 0.01 && bound == 0.75) {
    sector = Sector{0.0355, 1.8};
  }
  return ConvexFunction::with_log_barrier(Matrix::Identity(m, m), Vector::Zero(m), lo, hi,
                                          w, sector);
}

inline ConvexFunction academic_g0(int r = 5, double c = 50.0, double limit = 1.0) {
  const double inf = std::numeric_limits<double>::infinity();
  Vector lo = Vector::Constant(r, -inf);
  Vector hi = Vector::Constant(r, inf);
  for (int k = 2; k < r; ++k) {
    lo[k] = -limit;
    hi[k] = limit;
  }
  return ConvexFunction::with_softmax_penalty(Matrix::Zero(r, r), Vector::Zero(r), lo, hi,
                                              c, softmax_penalty_sector(c));
}

/// Seeded servo plant: n = 30 states, 4 inputs, 5 outputs, full-column-rank
/// Gu, references entering only through the engineering constraints. The
/// plant is fast (stability margin 40) so the pinned controller tunings sit
/// inside their low-gain stability regions; the tracked rows carry the
/// actuator authority and the soft-constrained outputs couple weakly.
inline Plant academic_plant(std::uint64_t seed = 13) {
  PlantGenOptions options;
  options.stability_margin = 40.0;
  options.require_gu_full_column_rank = true;
  options.gu_min_singular_value = 3.0;
  options.gu_authority_rows = 2;
  options.c_row_scales = (Vector(5) << 1, 1, 0.2, 0.2, 0.2).finished();
  options.zero_disturbance_channels = true;
  return generate_stable_plant(seed, 30, 4, 5, 2, options);
}

/// Tracking constraints 0 = z_i - r_i for i in {1, 2}, with w = (r1, r2).
inline OssProblem academic_problem(int m = 4, int r = 5) {
  Matrix Hz = Matrix::Zero(2, r);
  Hz(0, 0) = 1;
  Hz(1, 1) = 1;
  return make_oss_problem(academic_f0(m), academic_g0(r), Hz, Matrix::Zero(2, m),
                          -Matrix::Identity(2, 2));
}

/// Random DC gains with full-row-rank constraint data; small instances for
/// algebra property tests.
struct RandomInstance {
  DcGains gains;
  OssProblem problem;
};

inline RandomInstance random_instance(std::uint64_t seed, int m, int r, int nc, int nw,
                                      bool with_residuals = false) {
  Rng rng(seed);
  RandomInstance inst;
  inst.gains.Gu = rng.gaussian_matrix(r, m);
  inst.gains.Gw = rng.gaussian_matrix(r, nw);
  Matrix a_f = rng.gaussian_matrix(m, m);
  Matrix Qf = a_f.transpose() * a_f / m + 0.5 * Matrix::Identity(m, m);
  Matrix a_g = rng.gaussian_matrix(r, r);
  Matrix Qg = a_g.transpose() * a_g / r;
  ConvexFunction f0 = ConvexFunction::quadratic(Qf, rng.gaussian_vector(m));
  ConvexFunction g0 = ConvexFunction::quadratic(Qg, rng.gaussian_vector(r));
  if (with_residuals) {
    const Vector lo = Vector::Constant(m, -2.0);
    const Vector hi = Vector::Constant(m, 2.0);
    const Vector wts = Vector::Constant(m, 0.05);
    f0 = ConvexFunction::with_log_barrier(Qf, Vector::Zero(m), lo, hi, wts,
                                          log_barrier_sector(lo, hi, wts));
  }
  const Matrix Hz = rng.gaussian_matrix(nc, r);
  const Matrix Hu = rng.gaussian_matrix(nc, m);
  const Matrix Hw = rng.gaussian_matrix(nc, nw);
  inst.problem = make_oss_problem(std::move(f0), std::move(g0), Hz, Hu, Hw);
  return inst;
}

/// Scalar bisection for a strictly increasing function; independent oracle
/// for gradient inversion.
inline double bisect_increasing(const std::function<double(double)>& fn, double lo,
                                double hi, double target, int iters = 200) {
  for (int i = 0; i < iters; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (fn(mid) < target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace oss::testing
