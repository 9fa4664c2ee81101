#include "oss/sdp.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

namespace oss {

Matrix LmiBlock::evaluate(const Vector& x) const {
  Matrix v = F0;
  for (const auto& [idx, coeff] : terms) v += x[idx] * coeff;
  return v;
}

LmiBlock lmi_block_from_affine(int num_vars,
                               const std::function<Matrix(const Vector&)>& psd_expr) {
  LmiBlock block;
  Vector x = Vector::Zero(num_vars);
  block.F0 = psd_expr(x);
  const double scale = std::max(1.0, block.F0.cwiseAbs().maxCoeff());
  for (int i = 0; i < num_vars; ++i) {
    x[i] = 1.0;
    Matrix coeff = psd_expr(x) - block.F0;
    x[i] = 0.0;
    if (coeff.cwiseAbs().maxCoeff() > 1e-14 * scale) {
      coeff = 0.5 * (coeff + coeff.transpose());
      block.terms.emplace_back(i, std::move(coeff));
    }
  }
  block.F0 = 0.5 * (block.F0 + block.F0.transpose());
  return block;
}

namespace {

double inner(const Matrix& a, const Matrix& b) { return a.cwiseProduct(b).sum(); }

struct SymEig {
  Matrix vectors;
  Vector values;
};

SymEig sym_eig(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  if (es.info() != Eigen::Success) throw NumericError("symmetric eigensolver failed");
  return {es.eigenvectors(), es.eigenvalues()};
}

Matrix apply_spectral(const SymEig& eig, const std::function<double(double)>& fn) {
  Vector mapped = eig.values;
  for (int i = 0; i < mapped.size(); ++i) mapped[i] = fn(mapped[i]);
  return eig.vectors * mapped.asDiagonal() * eig.vectors.transpose();
}

// Largest alpha in (0, 1] with X + alpha dX staying positive definite,
// backed off by `fraction`.
double max_step(const Matrix& x, const Matrix& dx, double fraction) {
  if (x.rows() == 0) return 1.0;
  Eigen::LLT<Matrix> llt(x);
  if (llt.info() != Eigen::Success) return 1e-3;  // iterate drifted; stay short
  const Matrix l_inv_dx = llt.matrixL().solve(dx);
  const Matrix t = llt.matrixL().solve(l_inv_dx.transpose()).transpose();
  const Matrix ts = 0.5 * (t + t.transpose());
  const double lmin = sym_eig(ts).values.minCoeff();
  if (lmin >= 0) return 1.0;
  return std::min(1.0, -fraction / lmin);
}

}  // namespace

SdpSolution solve_sdp(const SdpProblem& p, const SdpOptions& options) {
  SdpSolution sol;
  const int d = p.num_vars;
  const int nb = static_cast<int>(p.blocks.size());
  if (p.c.size() != d) throw InvalidInputError("solve_sdp: objective dimension mismatch");
  int total_dim = 0;
  for (const auto& b : p.blocks) {
    if (b.F0.rows() != b.F0.cols()) throw InvalidInputError("solve_sdp: block not square");
    total_dim += b.dim();
  }
  if (total_dim == 0) {
    sol.status = SdpStatus::optimal;
    sol.x = Vector::Zero(d);
    return sol;
  }

  // Primal-dual pair: our variable x plays the dual role y with b = -c,
  // A_i = -F_i, C = F0; X is the primal matrix variable, Z the dual slack.
  std::vector<Matrix> X(nb), Z(nb);
  Vector x = Vector::Zero(d);
  double f0_scale = 1.0;
  for (int j = 0; j < nb; ++j) {
    const int n = p.blocks[j].dim();
    double s = std::max(1.0, p.blocks[j].F0.norm() / std::sqrt(std::max(1, n)));
    for (const auto& [idx, coeff] : p.blocks[j].terms) {
      s = std::max(s, coeff.norm() / std::sqrt(std::max(1, n)));
    }
    X[j] = s * Matrix::Identity(n, n);
    Z[j] = s * Matrix::Identity(n, n);
    f0_scale = std::max(f0_scale, p.blocks[j].F0.norm());
  }

  std::vector<Matrix> W(nb), Zinv(nb), Rd(nb), Rc(nb), dZ(nb), dX(nb);
  std::vector<std::vector<Matrix>> WFW(nb);
  Matrix schur(d, d);
  Vector rp(d);

  auto primal_obj = [&]() { return p.c.dot(x); };
  auto dual_obj = [&]() {
    double v = 0;
    for (int j = 0; j < nb; ++j) v -= inner(p.blocks[j].F0, X[j]);
    return v;
  };

  for (int iter = 1; iter <= options.max_iterations; ++iter) {
    sol.iterations = iter;
    // Residuals.
    rp = -p.c;
    for (int j = 0; j < nb; ++j) {
      for (const auto& [idx, coeff] : p.blocks[j].terms) rp[idx] += inner(coeff, X[j]);
    }
    double dres = 0;
    for (int j = 0; j < nb; ++j) {
      Rd[j] = p.blocks[j].evaluate(x) - Z[j];
      dres = std::max(dres, Rd[j].norm());
    }
    double gap = 0;
    for (int j = 0; j < nb; ++j) gap += inner(X[j], Z[j]);
    const double mu = gap / total_dim;
    const double pres = rp.norm() / (1.0 + p.c.norm());
    const double drel = dres / (1.0 + f0_scale);
    const double relgap = gap / (1.0 + std::abs(primal_obj()) + std::abs(dual_obj()));

    if (pres <= options.tol && drel <= options.tol && relgap <= options.tol) {
      sol.status = SdpStatus::optimal;
      break;
    }

    // Farkas-style infeasibility certificate: X >= 0 with A(X) ~ 0 and
    // <F0, X> < 0 proves no x satisfies the constraints.
    auto farkas_certificate = [&](double quality) -> bool {
      double xnorm = 0;
      for (int j = 0; j < nb; ++j) xnorm += X[j].squaredNorm();
      xnorm = std::sqrt(xnorm);
      if (xnorm < 1e2) return false;
      double c_ip = 0;
      double a_ip = 0;
      for (int j = 0; j < nb; ++j) c_ip += inner(p.blocks[j].F0, X[j]) / xnorm;
      for (int i = 0; i < d; ++i) a_ip = std::max(a_ip, std::abs(rp[i] + p.c[i]) / xnorm);
      if (c_ip < -quality * f0_scale && a_ip < quality * std::max(1.0, f0_scale)) {
        sol.status = SdpStatus::infeasible;
        sol.message = "Farkas certificate: <F0, X>/|X| = " + std::to_string(c_ip);
        return true;
      }
      return false;
    };
    if (farkas_certificate(1e-8)) break;

    // Nesterov-Todd scaling W = Z^-1/2 (Z^1/2 X Z^1/2)^1/2 Z^-1/2 per block.
    bool scaling_ok = true;
    for (int j = 0; j < nb; ++j) {
      const SymEig ez = sym_eig(Z[j]);
      if (ez.values.minCoeff() <= 0) {
        scaling_ok = false;
        break;
      }
      const Matrix zh = apply_spectral(ez, [](double v) { return std::sqrt(v); });
      const Matrix zih = apply_spectral(ez, [](double v) { return 1.0 / std::sqrt(v); });
      Zinv[j] = apply_spectral(ez, [](double v) { return 1.0 / v; });
      const Matrix inner_m = zh * X[j] * zh;
      const SymEig ei = sym_eig(0.5 * (inner_m + inner_m.transpose()));
      if (ei.values.minCoeff() <= 0) {
        scaling_ok = false;
        break;
      }
      const Matrix sh = apply_spectral(ei, [](double v) { return std::sqrt(v); });
      W[j] = zih * sh * zih;
      W[j] = 0.5 * (W[j] + W[j].transpose());
    }
    if (!scaling_ok) {
      sol.message = "interior iterate lost definiteness";
      sol.status = SdpStatus::numerical_failure;
      break;
    }

    // Schur complement M_ik = sum_j <F_i, W F_k W>.
    schur.setZero();
    for (int j = 0; j < nb; ++j) {
      const auto& terms = p.blocks[j].terms;
      WFW[j].resize(terms.size());
      for (size_t a = 0; a < terms.size(); ++a) {
        WFW[j][a] = W[j] * terms[a].second * W[j];
      }
      for (size_t a = 0; a < terms.size(); ++a) {
        for (size_t b = a; b < terms.size(); ++b) {
          const double v = inner(terms[a].second, WFW[j][b]);
          schur(terms[a].first, terms[b].first) += v;
          if (terms[a].first != terms[b].first) {
            schur(terms[b].first, terms[a].first) += v;
          }
        }
      }
    }
    // Tiny ridge keeps the factorization alive when variables do not appear
    // in any block (they then move only through the objective residual).
    if (d > 0) {
      const double ridge = 1e-12 * std::max(1.0, schur.diagonal().maxCoeff());
      schur.diagonal().array() += ridge;
    }
    Eigen::LDLT<Matrix> schur_fact(schur);
    if (schur_fact.info() != Eigen::Success) {
      sol.message = "Schur complement factorization failed";
      sol.status = SdpStatus::numerical_failure;
      break;
    }

    auto compute_direction = [&](double sigma, Vector& dx_out) {
      Vector rhs = rp;
      for (int j = 0; j < nb; ++j) {
        Rc[j] = sigma * mu * Zinv[j] - X[j];
        const Matrix wrdw = W[j] * Rd[j] * W[j];
        for (const auto& [idx, coeff] : p.blocks[j].terms) {
          rhs[idx] += inner(coeff, Rc[j]) - inner(coeff, wrdw);
        }
      }
      dx_out = schur_fact.solve(rhs);
      for (int j = 0; j < nb; ++j) {
        dZ[j] = Rd[j];
        for (const auto& [idx, coeff] : p.blocks[j].terms) dZ[j] += dx_out[idx] * coeff;
        dX[j] = Rc[j] - W[j] * dZ[j] * W[j];
        dX[j] = 0.5 * (dX[j] + dX[j].transpose());
      }
    };

    // Predictor.
    Vector dx_aff(d);
    compute_direction(0.0, dx_aff);
    double ap = 1.0, ad = 1.0;
    for (int j = 0; j < nb; ++j) {
      ap = std::min(ap, max_step(X[j], dX[j], options.step_fraction));
      ad = std::min(ad, max_step(Z[j], dZ[j], options.step_fraction));
    }
    double gap_aff = 0;
    for (int j = 0; j < nb; ++j) {
      gap_aff += inner(X[j] + ap * dX[j], Z[j] + ad * dZ[j]);
    }
    double sigma = std::pow(std::max(0.0, gap_aff / gap), 3.0);
    sigma = std::min(0.999, std::max(1e-4, sigma));

    // Corrector (recentered step).
    Vector dx(d);
    compute_direction(sigma, dx);
    ap = 1.0;
    ad = 1.0;
    for (int j = 0; j < nb; ++j) {
      ap = std::min(ap, max_step(X[j], dX[j], options.step_fraction));
      ad = std::min(ad, max_step(Z[j], dZ[j], options.step_fraction));
    }
    if (ap < 1e-10 && ad < 1e-10) {
      sol.message = "step length collapsed";
      sol.status = SdpStatus::numerical_failure;
      break;
    }
    for (int j = 0; j < nb; ++j) {
      X[j] += ap * dX[j];
      Z[j] += ad * dZ[j];
    }
    x += ad * dx;

    if (iter == options.max_iterations) {
      sol.message = "iteration budget exhausted";
      sol.status = SdpStatus::numerical_failure;
    }
  }

  sol.x = x;
  sol.objective = primal_obj();
  double margin = std::numeric_limits<double>::infinity();
  for (const auto& b : p.blocks) {
    const Matrix v = b.evaluate(x);
    if (v.rows() > 0) margin = std::min(margin, sym_eig(v).values.minCoeff());
  }
  sol.min_margin = std::isfinite(margin) ? margin : 0.0;
  return sol;
}

}  // namespace oss
