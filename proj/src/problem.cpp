#include "oss/problem.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <string>

namespace oss {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Matrix symmetrized(const Matrix& q) { return 0.5 * (q + q.transpose()); }

void check_symmetric_psd(const char* name, const Matrix& q, double* min_eig_out) {
  if (q.size() == 0) {
    *min_eig_out = 0.0;
    return;
  }
  const double scale = std::max(1.0, q.cwiseAbs().maxCoeff());
  if ((q - q.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw InvalidInputError(std::string(name) + ": quadratic term must be symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(q), Eigen::EigenvaluesOnly);
  const double min_eig = q.rows() > 0 ? es.eigenvalues().minCoeff() : 0.0;
  if (min_eig < -1e-10 * scale) {
    throw InvalidInputError(std::string(name) + ": quadratic term must be PSD, min eig = " +
                            std::to_string(min_eig));
  }
  *min_eig_out = std::max(0.0, min_eig);
}

}  // namespace

ConvexFunction ConvexFunction::zero(int dim) {
  return quadratic(Matrix::Zero(dim, dim), Vector::Zero(dim));
}

ConvexFunction ConvexFunction::quadratic(const Matrix& Q, const Vector& linear) {
  ConvexFunction c;
  c.dim_ = static_cast<int>(linear.size());
  c.Q_ = Q;
  c.linear_ = linear;
  c.kind_ = ResidualKind::none;
  c.validate_and_finalize();
  return c;
}

ConvexFunction ConvexFunction::with_log_barrier(const Matrix& Q, const Vector& linear,
                                                const Vector& lo, const Vector& hi,
                                                const Vector& weights, Sector sector) {
  ConvexFunction c;
  c.dim_ = static_cast<int>(linear.size());
  c.Q_ = Q;
  c.linear_ = linear;
  c.kind_ = ResidualKind::log_barrier;
  c.box_ = BoxBounds{lo, hi};
  c.barrier_weights_ = weights;
  c.sector_ = sector;
  if (lo.size() != c.dim_ || hi.size() != c.dim_ || weights.size() != c.dim_) {
    throw InvalidInputError("log barrier: bounds/weights dimension mismatch");
  }
  for (int i = 0; i < c.dim_; ++i) {
    if (weights[i] < 0) throw InvalidInputError("log barrier: negative weight");
    if (weights[i] > 0 && !(std::isfinite(lo[i]) && std::isfinite(hi[i]) && lo[i] < hi[i])) {
      throw InvalidInputError("log barrier: weighted coordinate needs finite lo < hi");
    }
  }
  c.validate_and_finalize();
  return c;
}

ConvexFunction ConvexFunction::with_softmax_penalty(const Matrix& Q, const Vector& linear,
                                                    const Vector& lo, const Vector& hi,
                                                    double weight, Sector sector) {
  ConvexFunction c;
  c.dim_ = static_cast<int>(linear.size());
  c.Q_ = Q;
  c.linear_ = linear;
  c.kind_ = ResidualKind::softmax_penalty;
  c.penalty_lo_ = lo;
  c.penalty_hi_ = hi;
  c.penalty_weight_ = weight;
  c.sector_ = sector;
  if (lo.size() != c.dim_ || hi.size() != c.dim_) {
    throw InvalidInputError("penalty: bounds dimension mismatch");
  }
  if (!(weight > 0)) throw InvalidInputError("penalty: weight must be positive");
  c.validate_and_finalize();
  return c;
}

ConvexFunction ConvexFunction::with_custom(const Matrix& Q, const Vector& linear,
                                           CustomResidual residual,
                                           std::optional<BoxBounds> box, Sector sector) {
  ConvexFunction c;
  c.dim_ = static_cast<int>(linear.size());
  c.Q_ = Q;
  c.linear_ = linear;
  c.kind_ = ResidualKind::custom;
  c.custom_ = std::move(residual);
  c.box_ = std::move(box);
  c.sector_ = sector;
  if (!c.custom_.value || !c.custom_.grad || !c.custom_.hess) {
    throw InvalidInputError("custom residual: value/grad/hess are all required");
  }
  c.validate_and_finalize();
  return c;
}

void ConvexFunction::validate_and_finalize() {
  require_finite("linear term", linear_);
  require_finite("quadratic term", Q_);
  if (Q_.rows() != dim_ || Q_.cols() != dim_) {
    throw InvalidInputError("quadratic term dimension mismatch");
  }
  check_symmetric_psd("convex function", Q_, &min_eig_Q_);
  Q_ = symmetrized(Q_);
  if (!(sector_.m >= 0)) throw InvalidInputError("sector: m must be >= 0");
  if (!(sector_.L > 0)) throw InvalidInputError("sector: L must be positive");
  if (sector_.m > sector_.L) throw InvalidInputError("sector: need m <= L");
  if (has_residual()) {
    const double worst = sector_check_min(*this, 10000, 0x5ec70  /* fixed */);
    if (worst < -1e-12) {
      throw PreconditionError("declared sector (" + std::to_string(sector_.m) + ", " +
                              std::to_string(sector_.L) +
                              ") fails the sampled incremental inequality by " +
                              std::to_string(worst));
    }
  }
}

double ConvexFunction::value(const Vector& x) const {
  double v = 0.5 * x.dot(Q_ * x) + linear_.dot(x);
  switch (kind_) {
    case ResidualKind::none:
      break;
    case ResidualKind::log_barrier:
      for (int i = 0; i < dim_; ++i) {
        if (barrier_weights_[i] > 0) {
          const double a = box_->hi[i] - x[i];
          const double b = x[i] - box_->lo[i];
          if (!(a > 0 && b > 0)) return kInf;
          v -= barrier_weights_[i] * (std::log(a) + std::log(b));
        }
      }
      break;
    case ResidualKind::softmax_penalty:
      for (int i = 0; i < dim_; ++i) {
        const double d = std::max({0.0, penalty_lo_[i] - x[i], x[i] - penalty_hi_[i]});
        v += 0.5 * penalty_weight_ * d * d;
      }
      break;
    case ResidualKind::custom:
      v += custom_.value(x);
      break;
  }
  return v;
}

Vector ConvexFunction::residual_gradient(const Vector& x) const {
  Vector g = Vector::Zero(dim_);
  switch (kind_) {
    case ResidualKind::none:
      break;
    case ResidualKind::log_barrier:
      for (int i = 0; i < dim_; ++i) {
        if (barrier_weights_[i] > 0) {
          const double a = box_->hi[i] - x[i];
          const double b = x[i] - box_->lo[i];
          if (!(a > 0 && b > 0)) {
            throw DomainError("barrier gradient evaluated outside the open domain");
          }
          g[i] = barrier_weights_[i] * (1.0 / a - 1.0 / b);
        }
      }
      break;
    case ResidualKind::softmax_penalty:
      for (int i = 0; i < dim_; ++i) {
        if (x[i] > penalty_hi_[i]) {
          g[i] = penalty_weight_ * (x[i] - penalty_hi_[i]);
        } else if (x[i] < penalty_lo_[i]) {
          g[i] = penalty_weight_ * (x[i] - penalty_lo_[i]);
        }
      }
      break;
    case ResidualKind::custom:
      g = custom_.grad(x);
      break;
  }
  return g;
}

Matrix ConvexFunction::residual_hessian(const Vector& x) const {
  Matrix h = Matrix::Zero(dim_, dim_);
  switch (kind_) {
    case ResidualKind::none:
      break;
    case ResidualKind::log_barrier:
      for (int i = 0; i < dim_; ++i) {
        if (barrier_weights_[i] > 0) {
          const double a = box_->hi[i] - x[i];
          const double b = x[i] - box_->lo[i];
          if (!(a > 0 && b > 0)) {
            throw DomainError("barrier hessian evaluated outside the open domain");
          }
          h(i, i) = barrier_weights_[i] * (1.0 / (a * a) + 1.0 / (b * b));
        }
      }
      break;
    case ResidualKind::softmax_penalty:
      // One-sided generalized derivative at the activation boundaries.
      for (int i = 0; i < dim_; ++i) {
        if (x[i] > penalty_hi_[i] || x[i] < penalty_lo_[i]) h(i, i) = penalty_weight_;
      }
      break;
    case ResidualKind::custom:
      h = custom_.hess(x);
      break;
  }
  return h;
}

ConvexFunction ConvexFunction::direct_sum(const std::vector<ConvexFunction>& parts) {
  int dim = 0;
  bool any_barrier = false;
  for (const auto& p : parts) {
    if (p.residual_kind() != ResidualKind::none &&
        p.residual_kind() != ResidualKind::log_barrier) {
      throw InvalidInputError("direct_sum: parts must be quadratic or barrier type");
    }
    if (p.residual_kind() == ResidualKind::log_barrier) any_barrier = true;
    dim += p.dim();
  }
  Matrix Q = Matrix::Zero(dim, dim);
  Vector linear = Vector::Zero(dim);
  Vector lo = Vector::Constant(dim, -kInf);
  Vector hi = Vector::Constant(dim, kInf);
  Vector weights = Vector::Zero(dim);
  double sector_m = kInf;
  double sector_L = 0.0;
  int at = 0;
  for (const auto& p : parts) {
    const int d = p.dim();
    Q.block(at, at, d, d) = p.quadratic_term();
    linear.segment(at, d) = p.linear_term();
    if (p.residual_kind() == ResidualKind::log_barrier) {
      lo.segment(at, d) = p.box()->lo;
      hi.segment(at, d) = p.box()->hi;
      weights.segment(at, d) = p.barrier_weights();
      sector_m = std::min(sector_m, p.sector().m);
      sector_L = std::max(sector_L, p.sector().L);
    } else {
      sector_m = 0.0;  // a residual-free part pins the joint lower sector at 0
    }
    at += d;
  }
  if (!any_barrier) return quadratic(Q, linear);
  if (!std::isfinite(sector_m)) sector_m = 0.0;
  if (sector_L == 0.0) sector_L = kInf;
  return with_log_barrier(Q, linear, lo, hi, weights, Sector{sector_m, sector_L});
}

Vector gradient(const ConvexFunction& c, const Vector& x) {
  if (x.size() != c.dim()) throw InvalidInputError("gradient: dimension mismatch");
  return c.quadratic_term() * x + c.linear_term() + c.residual_gradient(x);
}

Matrix hessian(const ConvexFunction& c, const Vector& x) {
  return c.quadratic_term() + c.residual_hessian(x);
}

Vector grad_inverse(const ConvexFunction& c, const Vector& xi) {
  if (!c.strongly_convex()) {
    throw PreconditionError("grad_inverse: function is not strongly convex");
  }
  if (c.box()) {
    // A bounded coordinate without a barrier is not essentially smooth, and
    // the inverse gradient may not exist for every xi.
    for (int i = 0; i < c.dim(); ++i) {
      const bool bounded = std::isfinite(c.box()->lo[i]) || std::isfinite(c.box()->hi[i]);
      const bool guarded = c.residual_kind() == ResidualKind::custom ||
                           (c.residual_kind() == ResidualKind::log_barrier &&
                            c.barrier_weights()[i] > 0);
      if (bounded && !guarded) {
        throw PreconditionError("grad_inverse: bounded coordinate without barrier");
      }
    }
  }
  const Vector x0 = c.box() ? c.box()->center() : Vector::Zero(c.dim());
  auto g = [&](const Vector& u) -> Vector { return gradient(c, u) - xi; };
  auto jac = [&](const Vector& u) -> Matrix { return hessian(c, u); };
  // Attainable residual scales with the target: near a barrier wall the
  // Jacobian magnitude is of order |xi|^2 and limits double precision.
  const double tol = 1e-10 * std::max(1.0, xi.norm());
  return newton_solve(g, jac, x0, tol, c.box());
}

double sector_check_min(const ConvexFunction& c, int num_pairs, std::uint64_t seed) {
  if (!c.has_residual()) return 0.0;
  Rng rng(seed);
  const int d = c.dim();
  // Per-coordinate sampling ranges: interior of a barrier box, a band around
  // penalty kinks, or a default window.
  Vector slo(d), shi(d);
  for (int i = 0; i < d; ++i) {
    double lo = -3.0, hi = 3.0;
    if (c.box() && std::isfinite(c.box()->lo[i]) && std::isfinite(c.box()->hi[i])) {
      const double width = c.box()->hi[i] - c.box()->lo[i];
      lo = c.box()->lo[i] + 0.05 * width;
      hi = c.box()->hi[i] - 0.05 * width;
    } else if (c.residual_kind() == ResidualKind::softmax_penalty &&
               std::isfinite(c.penalty_lo()[i]) && std::isfinite(c.penalty_hi()[i])) {
      const double width = std::max(1.0, c.penalty_hi()[i] - c.penalty_lo()[i]);
      lo = c.penalty_lo()[i] - width;
      hi = c.penalty_hi()[i] + width;
    }
    slo[i] = lo;
    shi[i] = hi;
  }
  const Sector s = c.sector();
  double worst = kInf;
  Vector a(d), b(d);
  for (int k = 0; k < num_pairs; ++k) {
    for (int i = 0; i < d; ++i) {
      a[i] = rng.uniform(slo[i], shi[i]);
      b[i] = rng.uniform(slo[i], shi[i]);
    }
    const Vector dq = a - b;
    const Vector dp = c.residual_gradient(a) - c.residual_gradient(b);
    const double pq = dp.dot(dq);
    const double qq = dq.squaredNorm();
    const double pp = dp.squaredNorm();
    // Quadratic form of the 2x2 sector core for the declared class, scaled
    // to absorb roundoff on large barrier gradients.
    double form;
    if (std::isfinite(s.L)) {
      form = -2.0 * pp + 2.0 * (s.m + s.L) * pq - 2.0 * s.m * s.L * qq;
    } else {
      form = 2.0 * pq - 2.0 * s.m * qq;
    }
    const double scale = std::max(1.0, std::sqrt(pp * qq));
    worst = std::min(worst, form / scale);
  }
  return worst;
}

Sector log_barrier_sector(const Vector& lo, const Vector& hi, const Vector& weights) {
  double m = kInf;
  for (int i = 0; i < lo.size(); ++i) {
    if (weights[i] > 0) {
      const double width = hi[i] - lo[i];
      m = std::min(m, weights[i] * 8.0 / (width * width));
    } else {
      m = 0.0;
    }
  }
  if (!std::isfinite(m)) m = 0.0;
  return Sector{m, kInf};
}

Sector softmax_penalty_sector(double weight) { return Sector{0.0, weight}; }

OssProblem make_oss_problem(ConvexFunction f0, ConvexFunction g0, const Matrix& Hz,
                            const Matrix& Hu, const Matrix& Hw,
                            std::optional<BoxBounds> disturbance_box) {
  require_finite("Hz", Hz);
  require_finite("Hu", Hu);
  require_finite("Hw", Hw);
  OssProblem p;
  p.m = f0.dim();
  p.r = g0.dim();
  p.nc = static_cast<int>(Hz.rows());
  p.nw = static_cast<int>(Hw.cols());
  if (Hz.cols() != p.r) throw InvalidInputError("Hz must have r columns");
  if (Hu.rows() != p.nc || Hu.cols() != p.m) throw InvalidInputError("Hu must be nc x m");
  if (Hw.rows() != p.nc) throw InvalidInputError("Hw must have nc rows");
  if (p.nc > p.m) {
    throw InvalidInputError("more engineering constraints than inputs (nc > m)");
  }
  p.f0 = std::move(f0);
  p.g0 = std::move(g0);
  p.Hz = Hz;
  p.Hu = Hu;
  p.Hw = Hw;
  p.disturbance_box = std::move(disturbance_box);
  return p;
}

std::pair<double, double> kkt_residual(const OssProblem& prob, const DcGains& gains,
                                       const Vector& u, const Vector& z, const Vector& mu,
                                       const Vector& w) {
  const Matrix N = prob.Hz * gains.Gu + prob.Hu;
  Vector stat = gradient(prob.f0, u) + gains.Gu.transpose() * gradient(prob.g0, z);
  if (prob.nc > 0) stat += N.transpose() * mu;
  const Vector feas = prob.Hz * z + prob.Hu * u + prob.Hw * w;
  return {stat.norm(), feas.norm()};
}

namespace {

// Phase-1: move u(xi) = Tu xi + u0 strictly inside the box by Gauss-Newton
// on the squared violation of a slightly shrunken box.
Vector interior_start(const Matrix& Tu, const Vector& u0, const BoxBounds& box) {
  const int m = static_cast<int>(u0.size());
  Vector margin = Vector::Zero(m);
  for (int i = 0; i < m; ++i) {
    if (std::isfinite(box.lo[i]) && std::isfinite(box.hi[i])) {
      margin[i] = 0.05 * (box.hi[i] - box.lo[i]);
    }
  }
  Vector xi = lstsq(Tu, box.center() - u0);
  for (int it = 0; it < 100; ++it) {
    const Vector u = Tu * xi + u0;
    Vector viol = Vector::Zero(m);
    for (int i = 0; i < m; ++i) {
      if (std::isfinite(box.hi[i]) && u[i] > box.hi[i] - margin[i]) {
        viol[i] = u[i] - (box.hi[i] - margin[i]);
      } else if (std::isfinite(box.lo[i]) && u[i] < box.lo[i] + margin[i]) {
        viol[i] = u[i] - (box.lo[i] + margin[i]);
      }
    }
    if (viol.isZero(0.0)) return xi;
    xi -= lstsq(Tu, viol);
  }
  const Vector u = Tu * xi + u0;
  if (!box.strictly_inside(u)) {
    throw InfeasibleError("no strictly feasible interior point found for the program");
  }
  return xi;
}

}  // namespace

KktPoint solve_reference(const OssProblem& prob, const DcGains& gains, const Vector& w) {
  const int r = prob.r, m = prob.m, nc = prob.nc;
  Matrix stack(r + nc, r + m);
  stack << Matrix::Identity(r, r), -gains.Gu, prob.Hz, prob.Hu;
  Matrix rhs_map(r + nc, prob.nw);
  rhs_map << gains.Gw, -prob.Hw;
  const Vector rhs = rhs_map * w;

  const Vector particular = lstsq(stack, rhs);
  const double lin_res = (stack * particular - rhs).norm();
  if (lin_res > 1e-8 * std::max(1.0, rhs.norm())) {
    throw InfeasibleError("steady-state constraint system is inconsistent, residual = " +
                          std::to_string(lin_res));
  }
  const Vector z0 = particular.head(r);
  const Vector u0 = particular.tail(m);

  const Matrix T = nullspace(stack);
  const int q = static_cast<int>(T.cols());
  const Matrix Tz = T.topRows(r);
  const Matrix Tu = T.bottomRows(m);

  Vector xi = Vector::Zero(q);
  const auto& box = prob.f0.box();
  if (q > 0 && box) xi = interior_start(Tu, u0, *box);
  if (q == 0 && box && !box->strictly_inside(u0)) {
    throw InfeasibleError("fully determined program has its solution outside the domain");
  }

  auto u_of = [&](const Vector& x) -> Vector { return Tu * x + u0; };
  auto z_of = [&](const Vector& x) -> Vector { return Tz * x + z0; };
  auto phi = [&](const Vector& x) -> Vector {
    return Tu.transpose() * gradient(prob.f0, u_of(x)) +
           Tz.transpose() * gradient(prob.g0, z_of(x));
  };

  // Tolerances are scaled by a gradient magnitude so the solve is invariant
  // under f0, g0 -> alpha f0, alpha g0.
  auto inf_norm = [](const Vector& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; };
  const double grad_scale = std::max({1.0, inf_norm(gradient(prob.f0, u_of(xi))),
                                      inf_norm(gradient(prob.g0, z_of(xi)))});
  if (q > 0) {
    Vector res = phi(xi);
    double rnorm = res.norm();
    const double tol = 1e-12 * grad_scale;
    bool converged = rnorm <= tol;
    for (int it = 0; it < 300 && !converged; ++it) {
      const Matrix J = Tu.transpose() * hessian(prob.f0, u_of(xi)) * Tu +
                       Tz.transpose() * hessian(prob.g0, z_of(xi)) * Tz;
      Vector dxi = J.ldlt().solve(-res);
      if (!dxi.allFinite()) {
        dxi = lstsq(J, -res);
      }
      double s = 1.0;
      if (box) {
        const Vector u = u_of(xi);
        const Vector du = Tu * dxi;
        for (int i = 0; i < m; ++i) {
          if (du[i] > 0 && std::isfinite(box->hi[i])) {
            s = std::min(s, 0.995 * (box->hi[i] - u[i]) / du[i]);
          } else if (du[i] < 0 && std::isfinite(box->lo[i])) {
            s = std::min(s, 0.995 * (box->lo[i] - u[i]) / du[i]);
          }
        }
      }
      bool accepted = false;
      for (int bt = 0; bt < 60; ++bt) {
        const Vector xt = xi + s * dxi;
        const Vector rt = phi(xt);
        if (rt.allFinite() && rt.norm() < rnorm) {
          xi = xt;
          res = rt;
          rnorm = rt.norm();
          accepted = true;
          break;
        }
        s *= 0.5;
      }
      if (!accepted) {
        if (rnorm <= 1e-9 * grad_scale) break;
        throw NonConvergenceError("solve_reference: stalled", rnorm, it + 1);
      }
      converged = rnorm <= tol;
    }
    if (!converged && rnorm > 1e-9 * grad_scale) {
      throw NonConvergenceError("solve_reference: did not reach tolerance", rnorm, 300);
    }
  }

  KktPoint point;
  point.u_star = u_of(xi);
  point.z_star = z_of(xi);
  const Vector grad_total = gradient(prob.f0, point.u_star) +
                            gains.Gu.transpose() * gradient(prob.g0, point.z_star);
  if (nc > 0) {
    const Matrix N = prob.Hz * gains.Gu + prob.Hu;
    point.mu_star = lstsq(Matrix(N.transpose()), Matrix(-grad_total));
  } else {
    point.mu_star = Vector::Zero(0);
  }
  auto [stat, feas] =
      kkt_residual(prob, gains, point.u_star, point.z_star, point.mu_star, w);
  point.stationarity_residual = stat;
  point.feasibility_residual = feas;
  const double stat_scale = std::max(grad_scale, grad_total.norm());
  if (stat > 1e-9 * stat_scale || feas > 1e-9 * std::max(1.0, rhs.norm())) {
    throw NonConvergenceError("solve_reference: KKT residuals above tolerance",
                              std::max(stat, feas), 0);
  }
  return point;
}

DataAssumptionReport verify_problem_data(const OssProblem& prob, const DcGains& gains,
                                         const std::vector<Vector>& w_samples,
                                         std::uint64_t seed) {
  DataAssumptionReport rep;
  rep.f0_sector_min = sector_check_min(prob.f0, 10000, seed);
  rep.g0_sector_min = sector_check_min(prob.g0, 10000, seed + 1);
  rep.f0_quadratic_psd = prob.f0.min_quadratic_eigenvalue() >= 0;
  rep.g0_quadratic_psd = prob.g0.min_quadratic_eigenvalue() >= 0;
  bool all = rep.f0_quadratic_psd && rep.g0_quadratic_psd && rep.f0_sector_min >= -1e-12 &&
             rep.g0_sector_min >= -1e-12;
  for (const auto& w : w_samples) {
    bool ok = true;
    try {
      (void)solve_reference(prob, gains, w);
    } catch (const Error&) {
      ok = false;
    }
    rep.strictly_feasible.push_back(ok);
    all = all && ok;
  }
  rep.all_ok = all;
  return rep;
}

}  // namespace oss
