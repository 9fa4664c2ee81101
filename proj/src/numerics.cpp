#include "oss/numerics.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>
#include <numbers>

namespace oss {

bool all_finite(const Matrix& m) { return m.allFinite(); }

void require_finite(const char* name, const Matrix& m) {
  if (!m.allFinite()) {
    throw InvalidInputError(std::string(name) + " contains non-finite entries");
  }
}

bool BoxBounds::strictly_inside(const Vector& x) const {
  if (x.size() != lo.size()) return false;
  for (int i = 0; i < x.size(); ++i) {
    if (!(x[i] > lo[i] && x[i] < hi[i])) return false;
  }
  return true;
}

Vector BoxBounds::center() const {
  Vector c = Vector::Zero(lo.size());
  for (int i = 0; i < lo.size(); ++i) {
    const bool lo_finite = std::isfinite(lo[i]);
    const bool hi_finite = std::isfinite(hi[i]);
    if (lo_finite && hi_finite) {
      c[i] = 0.5 * (lo[i] + hi[i]);
    } else if (lo_finite) {
      c[i] = lo[i] + 1.0;
    } else if (hi_finite) {
      c[i] = hi[i] - 1.0;
    }
  }
  return c;
}

double default_rank_tol(const Matrix& m) {
  return static_cast<double>(std::max(m.rows(), m.cols())) *
         std::numeric_limits<double>::epsilon();
}

namespace {

Eigen::JacobiSVD<Matrix> svd_of(const Matrix& m, unsigned options) {
  Eigen::JacobiSVD<Matrix> svd(m, options);
  return svd;
}

double sv_cutoff(const Eigen::JacobiSVD<Matrix>& svd, const Matrix& m, double tol) {
  const double smax = svd.singularValues().size() > 0 ? svd.singularValues()[0] : 0.0;
  const double rel = tol < 0 ? default_rank_tol(m) : tol;
  return rel * smax;
}

}  // namespace

Matrix nullspace(const Matrix& m, double tol) {
  require_finite("nullspace input", m);
  if (tol == 0.0) throw InvalidInputError("nullspace: tol must be positive");
  if (m.rows() == 0 || m.cols() == 0) return Matrix::Identity(m.cols(), m.cols());
  auto svd = svd_of(m, Eigen::ComputeFullV);
  const double cutoff = sv_cutoff(svd, m, tol);
  int r = 0;
  for (int i = 0; i < svd.singularValues().size(); ++i) {
    if (svd.singularValues()[i] > cutoff) ++r;
  }
  const int nullity = static_cast<int>(m.cols()) - r;
  return svd.matrixV().rightCols(nullity);
}

int rank(const Matrix& m, double tol) {
  require_finite("rank input", m);
  if (m.rows() == 0 || m.cols() == 0) return 0;
  auto svd = svd_of(m, 0);
  const double cutoff = sv_cutoff(svd, m, tol);
  int r = 0;
  for (int i = 0; i < svd.singularValues().size(); ++i) {
    if (svd.singularValues()[i] > cutoff) ++r;
  }
  return r;
}

Matrix pseudoinverse(const Matrix& m, double tol) {
  require_finite("pseudoinverse input", m);
  if (m.rows() == 0 || m.cols() == 0) return Matrix::Zero(m.cols(), m.rows());
  auto svd = svd_of(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const double cutoff = sv_cutoff(svd, m, tol);
  Vector inv_sigma = svd.singularValues();
  for (int i = 0; i < inv_sigma.size(); ++i) {
    inv_sigma[i] = inv_sigma[i] > cutoff ? 1.0 / inv_sigma[i] : 0.0;
  }
  return svd.matrixV() * inv_sigma.asDiagonal() * svd.matrixU().transpose();
}

Matrix lstsq(const Matrix& a, const Matrix& b, double tol) {
  require_finite("lstsq lhs", a);
  require_finite("lstsq rhs", b);
  if (a.rows() != b.rows()) throw InvalidInputError("lstsq: row mismatch");
  return pseudoinverse(a, tol) * b;
}

SpectrumReport max_eig_real(const Matrix& m) {
  require_finite("max_eig_real input", m);
  if (m.rows() != m.cols()) throw InvalidInputError("max_eig_real: matrix must be square");
  SpectrumReport report;
  if (m.rows() == 0) {
    report.max_real_part = -std::numeric_limits<double>::infinity();
    return report;
  }
  Eigen::EigenSolver<Matrix> solver;
  const int max_iters = 50 * static_cast<int>(m.rows());
  solver.setMaxIterations(max_iters);
  solver.compute(m, /*computeEigenvectors=*/false);
  if (solver.info() != Eigen::Success) {
    throw NumericError("eigenvalue iteration failed to converge within " +
                       std::to_string(max_iters) + " iterations");
  }
  report.eigen_real_parts.resize(m.rows());
  double worst = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < m.rows(); ++i) {
    report.eigen_real_parts[i] = solver.eigenvalues()[i].real();
    worst = std::max(worst, report.eigen_real_parts[i]);
  }
  report.max_real_part = worst;
  return report;
}

bool is_hurwitz(const Matrix& m, double margin) {
  return max_eig_real(m).max_real_part < -margin;
}

double spectral_abs_max(const Matrix& m) {
  require_finite("spectral_abs_max input", m);
  if (m.rows() == 0) return 0.0;
  Eigen::EigenSolver<Matrix> solver(m, /*computeEigenvectors=*/false);
  if (solver.info() != Eigen::Success) throw NumericError("eigenvalue iteration failed");
  double worst = 0.0;
  for (int i = 0; i < m.rows(); ++i) worst = std::max(worst, std::abs(solver.eigenvalues()[i]));
  return worst;
}

Vector rk4_step(const VectorField& f, double t, const Vector& x, double h) {
  const Vector k1 = f(t, x);
  const Vector k2 = f(t + 0.5 * h, x + 0.5 * h * k1);
  const Vector k3 = f(t + 0.5 * h, x + 0.5 * h * k2);
  const Vector k4 = f(t + h, x + h * k3);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

std::vector<TracePoint> integrate(const VectorField& f, const Vector& x0, double t0,
                                  double t1, double dt) {
  if (!(dt > 0)) throw InvalidInputError("integrate: dt must be positive");
  if (t1 < t0) throw InvalidInputError("integrate: t1 < t0");
  require_finite("integrate initial state", x0);

  std::vector<TracePoint> out;
  const double span = t1 - t0;
  const int full_steps = static_cast<int>(std::floor(span / dt + 1e-9));
  out.reserve(full_steps + 2);
  out.push_back({t0, x0});
  Vector x = x0;
  double t = t0;
  for (int k = 1; k <= full_steps; ++k) {
    x = rk4_step(f, t, x, dt);
    t = t0 + k * dt;
    if (!x.allFinite()) throw DivergenceError("integrate: non-finite state", t);
    out.push_back({t, x});
  }
  const double rem = t1 - t;
  if (rem > 1e-9 * std::max(1.0, std::abs(t1))) {
    x = rk4_step(f, t, x, rem);
    if (!x.allFinite()) throw DivergenceError("integrate: non-finite state", t1);
    out.push_back({t1, x});
  }
  return out;
}

namespace {

// Largest step fraction in (0, 1] keeping x + s*dx strictly inside the box,
// covering at most `frac` of the distance to the nearest face.
double box_step_limit(const BoxBounds& box, const Vector& x, const Vector& dx, double frac) {
  double s = 1.0;
  for (int i = 0; i < x.size(); ++i) {
    if (dx[i] > 0 && std::isfinite(box.hi[i])) {
      s = std::min(s, frac * (box.hi[i] - x[i]) / dx[i]);
    } else if (dx[i] < 0 && std::isfinite(box.lo[i])) {
      s = std::min(s, frac * (box.lo[i] - x[i]) / dx[i]);
    }
  }
  return s;
}

}  // namespace

Vector newton_solve(const std::function<Vector(const Vector&)>& g,
                    const std::function<Matrix(const Vector&)>& jacobian, const Vector& x0,
                    double tol, const std::optional<BoxBounds>& box,
                    const NewtonOptions& options) {
  if (box && !box->strictly_inside(x0)) {
    throw InvalidInputError("newton_solve: x0 is not strictly inside the box");
  }
  Vector x = x0;
  Vector r = g(x);
  double rnorm = r.norm();
  for (int it = 0; it < options.max_iterations; ++it) {
    if (rnorm <= tol) return x;
    Matrix j = jacobian(x);
    Eigen::FullPivLU<Matrix> lu(j);
    Vector dx;
    if (lu.isInvertible()) {
      dx = lu.solve(-r);
    } else {
      // Tikhonov fallback for a momentarily singular Jacobian.
      const double ridge = 1e-10 * std::max(1.0, j.cwiseAbs().maxCoeff());
      Matrix jr = j.transpose() * j + ridge * Matrix::Identity(j.cols(), j.cols());
      dx = jr.ldlt().solve(-j.transpose() * r);
    }
    double s = box ? box_step_limit(*box, x, dx, options.boundary_fraction) : 1.0;
    bool accepted = false;
    for (int bt = 0; bt < options.max_backtracks; ++bt) {
      Vector xt = x + s * dx;
      Vector rt = g(xt);
      if (rt.allFinite() && rt.norm() < rnorm) {
        x = xt;
        r = rt;
        rnorm = rt.norm();
        accepted = true;
        break;
      }
      s *= 0.5;
    }
    if (!accepted) {
      if (rnorm <= tol) return x;
      throw NonConvergenceError("newton_solve: no descent step found", rnorm, it + 1);
    }
  }
  if (rnorm <= tol) return x;
  throw NonConvergenceError("newton_solve: iteration budget exhausted", rnorm,
                            options.max_iterations);
}

std::uint64_t Rng::next_u64() {
  // splitmix64
  state_ += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

double Rng::uniform() {
  // 53 random bits into (0, 1); never returns exactly 0 or 1.
  const std::uint64_t bits = next_u64() >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
  const double u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Matrix Rng::gaussian_matrix(int rows, int cols) {
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = normal();
  }
  return m;
}

Vector Rng::gaussian_vector(int n) {
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = normal();
  return v;
}

}  // namespace oss
