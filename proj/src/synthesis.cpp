#include "oss/synthesis.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <string>

namespace oss {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

SectorMultiplier sector_matrix(ConvexityClass cls, double m, double L, int dim) {
  SectorMultiplier s;
  s.cls = cls;
  s.channel_dim = dim;
  s.m = m;
  s.L = L;
  switch (cls) {
    case ConvexityClass::convex:
      s.core << 0, 1, 1, 0;
      break;
    case ConvexityClass::convex_lipschitz:
      if (!(L > 0) || !std::isfinite(L)) {
        throw InvalidInputError("sector_matrix: class (ii) needs finite L > 0");
      }
      s.core << -2, L, L, 0;
      break;
    case ConvexityClass::strongly_convex:
      if (!(m > 0)) throw InvalidInputError("sector_matrix: class (iii) needs m > 0");
      s.core << 0, 1, 1, -2 * m;
      break;
    case ConvexityClass::strongly_convex_lipschitz:
      if (!(m > 0 && m <= L && std::isfinite(L))) {
        throw InvalidInputError("sector_matrix: class (iv) needs 0 < m <= L < inf");
      }
      s.core << -2, m + L, m + L, -2 * m * L;
      break;
  }
  return s;
}

ConvexityClass classify_sector(const Sector& s) {
  const bool strong = s.m > 0;
  const bool lipschitz = std::isfinite(s.L);
  if (strong && lipschitz) return ConvexityClass::strongly_convex_lipschitz;
  if (strong) return ConvexityClass::strongly_convex;
  if (lipschitz) return ConvexityClass::convex_lipschitz;
  return ConvexityClass::convex;
}

LfrSystem assemble_lfr(const FeasibleSubspace& fs, const OssProblem& prob,
                       const DcGains& gains, const ConstraintGains& cg, double rho) {
  if (!(rho > 0)) throw InvalidInputError("assemble_lfr: rho must be positive");
  LfrSystem l;
  l.rho = rho;
  l.q = fs.q;
  l.nc = prob.nc;
  l.m = prob.m;
  l.r = prob.r;
  l.nw = prob.nw;
  l.p1_dim = prob.f0.has_residual() ? prob.m : 0;
  l.p2_dim = prob.g0.has_residual() ? prob.r : 0;

  const int s = l.state_dim();
  const int pd = l.p_dim();
  const Matrix& Q1 = prob.f0.quadratic_term();
  const Matrix& Q2 = prob.g0.quadratic_term();
  const Matrix Q = fs.Tu.transpose() * Q1 + fs.Tz.transpose() * Q2 * gains.Gu;
  const Matrix Dw_term = fs.Tz.transpose() * Q2 * gains.Gw;  // q x nw

  l.A = Matrix::Zero(s, s);
  l.B = Matrix::Zero(s, l.m);
  l.B.topRows(l.q) = -Q;
  l.B.bottomRows(l.nc) = -cg.N;
  l.B2 = Matrix::Zero(s, l.nw);
  l.B2.topRows(l.q) = -Dw_term;
  l.B2.bottomRows(l.nc) = -cg.Nt;

  l.B1 = Matrix::Zero(s, pd);
  if (l.p1_dim > 0) l.B1.block(0, 0, l.q, l.p1_dim) = -fs.Tu.transpose();
  if (l.p2_dim > 0) l.B1.block(0, l.p1_dim, l.q, l.p2_dim) = -fs.Tz.transpose();

  // Uncertainty outputs: q1 = u, q2 = Gu u + Gw w.
  l.C1 = Matrix::Zero(pd, s);
  l.E1 = Matrix::Zero(pd, l.m);
  l.D1 = Matrix::Zero(pd, pd);
  l.D12 = Matrix::Zero(pd, l.nw);
  if (l.p1_dim > 0) l.E1.topRows(l.p1_dim) = Matrix::Identity(l.m, l.m);
  if (l.p2_dim > 0) {
    l.E1.bottomRows(l.p2_dim) = gains.Gu;
    l.D12.bottomRows(l.p2_dim) = gains.Gw;
  }

  // Performance outputs: z1 = eta1', z2 = rho eta2'.
  l.C2 = Matrix::Zero(s, s);
  l.E2 = Matrix::Zero(s, l.m);
  l.E2.topRows(l.q) = -Q;
  l.E2.bottomRows(l.nc) = -rho * cg.N;
  l.D21 = Matrix::Zero(s, pd);
  if (l.p1_dim > 0) l.D21.block(0, 0, l.q, l.p1_dim) = -fs.Tu.transpose();
  if (l.p2_dim > 0) l.D21.block(0, l.p1_dim, l.q, l.p2_dim) = -fs.Tz.transpose();
  l.D2 = Matrix::Zero(s, l.nw);
  l.D2.topRows(l.q) = -Dw_term;
  l.D2.bottomRows(l.nc) = -rho * cg.Nt;
  return l;
}

Vector lfr_rhs_direct(const FeasibleSubspace& fs, const OssProblem& prob,
                      const DcGains& gains, const ConstraintGains& cg, const Vector& u,
                      const Vector& w) {
  // eta1' = -Tu' grad f0(u) - Tz' grad g0(Gu u + Gw w); eta2' = -N u - Nt w.
  const Vector z = gains.Gu * u + gains.Gw * w;
  Vector out(fs.q + cg.N.rows());
  out.head(fs.q) = -fs.Tu.transpose() * gradient(prob.f0, u) -
                   fs.Tz.transpose() * gradient(prob.g0, z);
  out.tail(cg.N.rows()) = -cg.N * u - cg.Nt * w;
  return out;
}

namespace {

// Diagonal augmentation of per-channel 2x2 blocks expanded over channel
// dimensions: acts on stacked [p1; p2; q1; q2].
Matrix daug_expand(const Eigen::Matrix2d& m1, int d1, const Eigen::Matrix2d& m2, int d2) {
  const int pd = d1 + d2;
  Matrix out = Matrix::Zero(2 * pd, 2 * pd);
  auto put = [&](int bi, int bj, double v1, double v2) {
    if (d1 > 0) {
      out.block(bi * pd, bj * pd, d1, d1) = v1 * Matrix::Identity(d1, d1);
    }
    if (d2 > 0) {
      out.block(bi * pd + d1, bj * pd + d1, d2, d2) = v2 * Matrix::Identity(d2, d2);
    }
  };
  for (int bi = 0; bi < 2; ++bi) {
    for (int bj = 0; bj < 2; ++bj) put(bi, bj, m1(bi, bj), m2(bi, bj));
  }
  return out;
}

Eigen::Matrix2d core_inverse(const SectorMultiplier& th) {
  const double det = th.core.determinant();
  if (std::abs(det) < 1e-12 * std::max(1.0, th.core.cwiseAbs().maxCoeff())) {
    throw PreconditionError(
        "sector core is singular; the dual synthesis form needs invertible cores "
        "(class (iv) with m = L degenerates -- fold the quadratic part into Q instead)");
  }
  return th.core.inverse();
}

struct VarLayout {
  int s = 0, m = 0;
  bool has_th1 = false, has_th2 = false;
  int y_off = 0, z_off = 0, th1_idx = -1, th2_idx = -1, t_idx = -1;
  int count = 0;

  VarLayout(int s_, int m_, bool t1, bool t2) : s(s_), m(m_), has_th1(t1), has_th2(t2) {
    y_off = 0;
    z_off = s * (s + 1) / 2;
    int at = z_off + m * s;
    if (has_th1) th1_idx = at++;
    if (has_th2) th2_idx = at++;
    t_idx = at++;
    count = at;
  }

  Matrix unpack_Y(const Vector& x) const {
    Matrix Y(s, s);
    int k = y_off;
    for (int j = 0; j < s; ++j) {
      for (int i = 0; i <= j; ++i) {
        Y(i, j) = x[k];
        Y(j, i) = x[k];
        ++k;
      }
    }
    return Y;
  }

  Matrix unpack_Z(const Vector& x) const {
    Matrix Z(m, s);
    int k = z_off;
    for (int j = 0; j < s; ++j) {
      for (int i = 0; i < m; ++i) Z(i, j) = x[k++];
    }
    return Z;
  }

  double theta1(const Vector& x) const { return has_th1 ? x[th1_idx] : 0.0; }
  double theta2(const Vector& x) const { return has_th2 ? x[th2_idx] : 0.0; }
  double t(const Vector& x) const { return x[t_idx]; }
};

// Dualized performance inequality: (*)' Mdual (*) with the outer factor
// built from (Y, Z) and -Theta^-1 affine in the theta multipliers. The
// result must be negative definite.
Matrix dual_lmi_matrix(const LfrSystem& l, const SectorMultiplier& th1,
                       const SectorMultiplier& th2, const Matrix& Y, const Matrix& Z,
                       double theta1, double theta2, double gamma, double alpha) {
  const int s = l.state_dim();
  const int pd = l.p_dim();
  const int nw = l.nw;
  const int cols = s + pd + s;

  Matrix F(2 * s + 2 * pd + nw + s, cols);
  F.setZero();
  int at = 0;
  const Matrix A_eff = l.A + alpha * Matrix::Identity(s, s);
  const Matrix AY_BZ = A_eff * Y + l.B * Z;
  const Matrix C1Y_E1Z = l.C1 * Y + l.E1 * Z;
  const Matrix C2Y_E2Z = l.C2 * Y + l.E2 * Z;
  F.block(at, 0, s, s) = -AY_BZ.transpose();
  F.block(at, s, s, pd) = -C1Y_E1Z.transpose();
  F.block(at, s + pd, s, s) = -C2Y_E2Z.transpose();
  at += s;
  F.block(at, 0, s, s) = Matrix::Identity(s, s);
  at += s;
  F.block(at, 0, pd, s) = -l.B1.transpose();
  F.block(at, s, pd, pd) = -l.D1.transpose();
  F.block(at, s + pd, pd, s) = -l.D21.transpose();
  at += pd;
  F.block(at, s, pd, pd) = Matrix::Identity(pd, pd);
  at += pd;
  F.block(at, 0, nw, s) = -l.B2.transpose();
  F.block(at, s, nw, pd) = -l.D12.transpose();
  F.block(at, s + pd, nw, s) = -l.D2.transpose();
  at += nw;
  F.block(at, s + pd, s, s) = Matrix::Identity(s, s);

  Matrix M = Matrix::Zero(F.rows(), F.rows());
  M.block(0, s, s, s) = -Matrix::Identity(s, s);
  M.block(s, 0, s, s) = -Matrix::Identity(s, s);
  if (pd > 0) {
    const Eigen::Matrix2d inv1 = l.p1_dim > 0 ? Eigen::Matrix2d(theta1 * core_inverse(th1))
                                              : Eigen::Matrix2d::Zero();
    const Eigen::Matrix2d inv2 = l.p2_dim > 0 ? Eigen::Matrix2d(theta2 * core_inverse(th2))
                                              : Eigen::Matrix2d::Zero();
    M.block(2 * s, 2 * s, 2 * pd, 2 * pd) = -daug_expand(inv1, l.p1_dim, inv2, l.p2_dim);
  }
  M.block(2 * s + 2 * pd, 2 * s + 2 * pd, nw, nw) = Matrix::Identity(nw, nw);
  // The trailing block pairs with the performance output z = (z1, z2) and is
  // therefore (q + nc)-dimensional, matching the block array of the LFR.
  M.block(2 * s + 2 * pd + nw, 2 * s + 2 * pd + nw, s, s) =
      -gamma * gamma * Matrix::Identity(s, s);

  Matrix out = F.transpose() * M * F;
  return 0.5 * (out + out.transpose());
}

}  // namespace

Matrix primal_certificate_matrix(const LfrSystem& l, const Matrix& K, const Matrix& P,
                                 const SectorMultiplier& th1, const SectorMultiplier& th2,
                                 double theta1, double theta2, double gamma) {
  const int s = l.state_dim();
  const int pd = l.p_dim();
  const int nw = l.nw;
  const int cols = s + pd + nw;

  Matrix F(2 * s + 2 * pd + nw + s, cols);
  F.setZero();
  int at = 0;
  F.block(at, 0, s, s) = Matrix::Identity(s, s);
  at += s;
  F.block(at, 0, s, s) = l.A + l.B * K;
  F.block(at, s, s, pd) = l.B1;
  F.block(at, s + pd, s, nw) = l.B2;
  at += s;
  F.block(at, s, pd, pd) = Matrix::Identity(pd, pd);
  at += pd;
  F.block(at, 0, pd, s) = l.C1 + l.E1 * K;
  F.block(at, s, pd, pd) = l.D1;
  F.block(at, s + pd, pd, nw) = l.D12;
  at += pd;
  F.block(at, s + pd, nw, nw) = Matrix::Identity(nw, nw);
  at += nw;
  F.block(at, 0, s, s) = l.C2 + l.E2 * K;
  F.block(at, s, s, pd) = l.D21;
  F.block(at, s + pd, s, nw) = l.D2;

  Matrix M = Matrix::Zero(F.rows(), F.rows());
  M.block(0, s, s, s) = P;
  M.block(s, 0, s, s) = P;
  if (pd > 0) {
    Eigen::Matrix2d c1 = Eigen::Matrix2d::Zero();
    Eigen::Matrix2d c2 = Eigen::Matrix2d::Zero();
    if (l.p1_dim > 0) c1 = th1.core / theta1;
    if (l.p2_dim > 0) c2 = th2.core / theta2;
    M.block(2 * s, 2 * s, 2 * pd, 2 * pd) = daug_expand(c1, l.p1_dim, c2, l.p2_dim);
  }
  M.block(2 * s + 2 * pd, 2 * s + 2 * pd, nw, nw) = -Matrix::Identity(nw, nw);
  M.block(2 * s + 2 * pd + nw, 2 * s + 2 * pd + nw, s, s) =
      (1.0 / (gamma * gamma)) * Matrix::Identity(s, s);

  Matrix out = F.transpose() * M * F;
  return 0.5 * (out + out.transpose());
}

namespace {

struct FeasibilityOutcome {
  bool feasible = false;
  double t = 0.0;
  Vector x;
  SdpStatus status = SdpStatus::numerical_failure;
};

void normalize_block(LmiBlock& b) {
  double s = b.F0.size() ? b.F0.cwiseAbs().maxCoeff() : 0.0;
  for (const auto& [idx, coeff] : b.terms) s = std::max(s, coeff.cwiseAbs().maxCoeff());
  if (s > 1.0) {
    b.F0 /= s;
    for (auto& [idx, coeff] : b.terms) coeff /= s;
  }
}

// Margin feasibility program at fixed gamma: maximize t subject to
//   -S_dual(Y, Z, theta) >= t I,  Y >= t I,  theta_i >= t,  t <= t_cap.
FeasibilityOutcome solve_feasibility(const LfrSystem& l, const SectorMultiplier& th1,
                                     const SectorMultiplier& th2, double gamma,
                                     const SynthesisOptions& options) {
  const VarLayout vars(l.state_dim(), l.m, l.p1_dim > 0, l.p2_dim > 0);
  SdpProblem sdp;
  sdp.num_vars = vars.count;
  sdp.c = Vector::Zero(vars.count);
  sdp.c[vars.t_idx] = -1.0;

  const int s = vars.s;
  auto dual_expr = [&](const Vector& x) -> Matrix {
    const Matrix S = dual_lmi_matrix(l, th1, th2, vars.unpack_Y(x), vars.unpack_Z(x),
                                     vars.theta1(x), vars.theta2(x), gamma,
                                     options.decay_alpha);
    const int n = static_cast<int>(S.rows());
    return -S - vars.t(x) * Matrix::Identity(n, n);
  };
  LmiBlock dual_block = lmi_block_from_affine(vars.count, dual_expr);
  normalize_block(dual_block);
  sdp.blocks.push_back(std::move(dual_block));

  sdp.blocks.push_back(lmi_block_from_affine(vars.count, [&](const Vector& x) -> Matrix {
    return vars.unpack_Y(x) - vars.t(x) * Matrix::Identity(s, s);
  }));
  if (vars.has_th1) {
    sdp.blocks.push_back(lmi_block_from_affine(vars.count, [&](const Vector& x) -> Matrix {
      return Matrix::Constant(1, 1, vars.theta1(x) - vars.t(x));
    }));
  }
  if (vars.has_th2) {
    sdp.blocks.push_back(lmi_block_from_affine(vars.count, [&](const Vector& x) -> Matrix {
      return Matrix::Constant(1, 1, vars.theta2(x) - vars.t(x));
    }));
  }
  sdp.blocks.push_back(lmi_block_from_affine(vars.count, [&](const Vector& x) -> Matrix {
    return Matrix::Constant(1, 1, 1.0 - vars.t(x));  // t_cap = 1
  }));

  SdpOptions sdp_options;
  sdp_options.tol = options.sdp_tol;
  const SdpSolution sol = solve_sdp(sdp, sdp_options);
  FeasibilityOutcome out;
  out.status = sol.status;
  out.x = sol.x;
  out.t = sol.x.size() ? vars.t(sol.x) : -1.0;
  out.feasible = sol.status == SdpStatus::optimal && out.t >= options.required_margin;
  return out;
}

}  // namespace

SynthesisResult synthesize(const LfrSystem& lfr, const SectorMultiplier& th1,
                           const SectorMultiplier& th2, const SynthesisOptions& options) {
  if (lfr.p1_dim > 0 && th1.channel_dim != lfr.p1_dim) {
    throw InvalidInputError("synthesize: th1 channel dimension mismatch");
  }
  if (lfr.p2_dim > 0 && th2.channel_dim != lfr.p2_dim) {
    throw InvalidInputError("synthesize: th2 channel dimension mismatch");
  }
  // The performance outputs are driven directly by the residual gradients,
  // so a finite gain is only certifiable with a Lipschitz-bounded channel:
  // the core's (1,1) entry must be negative (classes (ii) and (iv)). With a
  // zero entry the quadratic form is nonnegative along the corresponding
  // uncertainty-input direction for every decision variable.
  for (const auto* th : {&th1, &th2}) {
    const int dim = th == &th1 ? lfr.p1_dim : lfr.p2_dim;
    if (dim > 0 && !(th->core(0, 0) < 0)) {
      throw PreconditionError(
          "synthesize: live uncertainty channels need a finite Lipschitz bound "
          "(declare a finite sector L, giving a class (ii) or (iv) core)");
    }
  }
  const VarLayout vars(lfr.state_dim(), lfr.m, lfr.p1_dim > 0, lfr.p2_dim > 0);

  SynthesisResult result;
  double gamma = 0.0;
  FeasibilityOutcome best;

  if (options.mode == SynthesisMode::fixed_gamma) {
    if (!(options.gamma > 0)) throw InvalidInputError("synthesize: gamma must be positive");
    gamma = options.gamma;
    best = solve_feasibility(lfr, th1, th2, gamma, options);
    result.sdp_status = best.status;
    if (!best.feasible) return result;
  } else {
    // Upper bound search, then bisection on gamma^2 over feasibility solves.
    double hi = std::max({1.0, 2.0 * lfr.D2.norm(), 2.0 * lfr.D12.norm()});
    FeasibilityOutcome hi_out;
    bool found = false;
    while (hi <= options.gamma_max) {
      hi_out = solve_feasibility(lfr, th1, th2, hi, options);
      if (hi_out.feasible) {
        found = true;
        break;
      }
      hi *= 10.0;
    }
    result.sdp_status = hi_out.status;
    if (!found) return result;
    double g2_hi = hi * hi;
    double g2_lo = 0.0;
    best = hi_out;
    gamma = hi;
    while (g2_hi - g2_lo > options.gamma_rel_tol * g2_hi) {
      const double g2_mid = 0.5 * (g2_lo + g2_hi);
      const double g_mid = std::sqrt(g2_mid);
      const FeasibilityOutcome mid = solve_feasibility(lfr, th1, th2, g_mid, options);
      if (mid.feasible) {
        g2_hi = g2_mid;
        best = mid;
        gamma = g_mid;
      } else {
        g2_lo = g2_mid;
      }
    }
    result.sdp_status = SdpStatus::optimal;
  }

  result.feasible = true;
  result.gamma = gamma;
  result.margin_t = best.t;
  result.Y = vars.unpack_Y(best.x);
  result.Z = vars.unpack_Z(best.x);
  result.theta1 = vars.theta1(best.x);
  result.theta2 = vars.theta2(best.x);

  Eigen::LLT<Matrix> llt(result.Y);
  if (llt.info() != Eigen::Success) {
    throw CertificateMismatchError("synthesize: recovered Y is not positive definite");
  }
  const Matrix P = llt.solve(Matrix::Identity(vars.s, vars.s));
  result.K = result.Z * P;

  const Matrix cert = primal_certificate_matrix(lfr, result.K, 0.5 * (P + P.transpose()),
                                                th1, th2, result.theta1, result.theta2,
                                                gamma);
  Eigen::SelfAdjointEigenSolver<Matrix> es(cert);
  const double spectral = std::max(std::abs(es.eigenvalues().minCoeff()),
                                   std::abs(es.eigenvalues().maxCoeff()));
  result.certificate_margin =
      spectral > 0 ? es.eigenvalues().maxCoeff() / spectral : 0.0;
  if (!(result.certificate_margin < 0)) {
    throw CertificateMismatchError(
        "synthesize: dual solution fails the primal certificate, normalized margin = " +
        std::to_string(result.certificate_margin));
  }
  return result;
}

}  // namespace oss
