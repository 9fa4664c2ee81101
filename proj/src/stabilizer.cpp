#include "oss/stabilizer.hpp"

#include <string>

namespace oss {

ConstraintGains constraint_gains(const OssProblem& prob, const DcGains& gains) {
  ConstraintGains cg;
  cg.N = prob.Hz * gains.Gu + prob.Hu;
  cg.Nt = prob.Hz * gains.Gw + prob.Hw;
  return cg;
}

TwoLoopController two_loop_gains(const FeasibleSubspace& fs, const ConstraintGains& cg,
                                 const Matrix& P, const std::optional<Matrix>& K2_custom,
                                 double tau1, double tau2) {
  const int m = static_cast<int>(fs.Tu.rows());
  const int nc = static_cast<int>(cg.N.rows());
  if (nc > 0 && rank(cg.N) < nc) {
    throw PreconditionError("two_loop_gains: N = Hz Gu + Hu must have full row rank");
  }
  if (P.rows() != fs.q || P.cols() != fs.q) {
    throw InvalidInputError("two_loop_gains: P must be q x q");
  }
  const double p_scale = std::max(1.0, P.cwiseAbs().maxCoeff());
  if ((P - P.transpose()).cwiseAbs().maxCoeff() > 1e-10 * p_scale) {
    throw InvalidInputError("two_loop_gains: P must be symmetric");
  }
  Eigen::LLT<Matrix> llt(P);
  if (fs.q > 0 && llt.info() != Eigen::Success) {
    throw InvalidInputError("two_loop_gains: P must be positive definite");
  }

  TwoLoopController c;
  c.P = P;
  c.tau1 = tau1;
  c.tau2 = tau2;
  c.K2 = K2_custom ? *K2_custom : pseudoinverse(cg.N);
  if (c.K2.rows() != m || c.K2.cols() != nc) {
    throw InvalidInputError("two_loop_gains: K2 must be m x nc");
  }
  if (nc > 0) {
    const Matrix NK2 = cg.N * c.K2;
    if (!is_hurwitz(-NK2)) {
      throw GainChoiceError("two_loop_gains: -N K2 is not Hurwitz");
    }
    c.Pi_c = Matrix::Identity(m, m) - c.K2 * NK2.partialPivLu().solve(cg.N);
  } else {
    c.Pi_c = Matrix::Identity(m, m);
  }

  const Matrix target = fs.Tu * P;
  // Pi_c is idempotent, so its nonzero singular values are >= 1; a loose
  // relative cutoff keeps rounding noise out of the minimum-norm solve.
  c.K1 = pseudoinverse(c.Pi_c, 1e-8) * target;
  const double scale = std::max(1.0, target.cwiseAbs().maxCoeff());
  const double residual = (c.Pi_c * c.K1 - target).cwiseAbs().maxCoeff();
  if (residual > 1e-10 * scale) {
    // range(Tu) lies in null(N) = range(Pi_c), so this equation is solvable
    // whenever the subspace and N are consistent.
    throw InternalConsistencyError("two_loop_gains: Pi_c K1 = Tu P is inconsistent, "
                                   "residual = " + std::to_string(residual));
  }
  if (rank(c.K1) < fs.q) {
    throw InternalConsistencyError("two_loop_gains: K1 is not full column rank");
  }
  return c;
}

Vector primal_dual_rhs(const PrimalDualController& c, const OssProblem& prob,
                       const DcGains& gains, const ConstraintGains& cg,
                       const Vector& state, const Vector& z, const Vector& w) {
  const int m = prob.m, nc = prob.nc;
  const Vector u = state.head(m);
  const Vector mu = state.tail(nc);
  Vector u_dot = -gradient(prob.f0, u) - gains.Gu.transpose() * gradient(prob.g0, z);
  if (nc > 0) u_dot -= cg.N.transpose() * mu;
  Vector out(m + nc);
  out.head(m) = u_dot / c.tau_p;
  out.tail(nc) = (prob.Hz * z + prob.Hu * u + prob.Hw * w) / c.tau_d;
  return out;
}

Vector inversion_output(const InversionController&, const OssProblem& prob,
                        const DcGains& gains, const ConstraintGains& cg, const Vector& mu,
                        const Vector& z) {
  Vector xi = -gains.Gu.transpose() * gradient(prob.g0, z);
  if (prob.nc > 0) xi -= cg.N.transpose() * mu;
  return grad_inverse(prob.f0, xi);
}

Vector inversion_rhs(const InversionController& c, const OssProblem& prob,
                     const ConstraintGains&, const Vector& u, const Vector& z,
                     const Vector& w) {
  return (prob.Hz * z + prob.Hu * u + prob.Hw * w) / c.tau;
}

Vector two_loop_output(const TwoLoopController& c, const Vector& state) {
  const int q = static_cast<int>(c.K1.cols());
  return c.K1 * state.head(q) + c.K2 * state.tail(state.size() - q);
}

Vector two_loop_rhs(const TwoLoopController& c, const FeasibleSubspace& fs,
                    const OssProblem& prob, const Vector& state, const Vector& z,
                    const Vector& w) {
  const Vector u = two_loop_output(c, state);
  const Om2Error err = om2_error(fs, prob, z, u, w);
  Vector out(state.size());
  out.head(fs.q) = -err.e1 / c.tau1;
  out.tail(prob.nc) = -err.e2 / c.tau2;
  return out;
}

Vector static_gain_output(const StaticGainController& c, const Vector& state) {
  return c.K * state;
}

Vector static_gain_rhs(const StaticGainController& c, const FeasibleSubspace& fs,
                       const OssProblem& prob, const Vector& state, const Vector& z,
                       const Vector& w) {
  const Vector u = static_gain_output(c, state);
  const Om2Error err = om2_error(fs, prob, z, u, w);
  Vector out(state.size());
  out.head(fs.q) = -err.e1 / c.tau;
  out.tail(prob.nc) = -err.e2 / c.tau;
  return out;
}

int controller_state_dim(const Controller& c, const OssProblem& prob,
                         const FeasibleSubspace* fs) {
  return std::visit(
      [&](const auto& ctrl) -> int {
        using T = std::decay_t<decltype(ctrl)>;
        if constexpr (std::is_same_v<T, PrimalDualController>) {
          return prob.m + prob.nc;
        } else if constexpr (std::is_same_v<T, InversionController>) {
          return prob.nc;
        } else {
          if (!fs) throw InvalidInputError("controller needs a feasible subspace");
          return fs->q + prob.nc;
        }
      },
      c);
}

Vector controller_initial_state(const Controller& c, const OssProblem& prob,
                                const FeasibleSubspace* fs) {
  Vector x0 = Vector::Zero(controller_state_dim(c, prob, fs));
  if (std::holds_alternative<PrimalDualController>(c) && prob.f0.box()) {
    x0.head(prob.m) = prob.f0.box()->center();
  }
  return x0;
}

bool controller_output_uses_z(const Controller& c) {
  return std::holds_alternative<InversionController>(c);
}

Vector controller_output(const Controller& c, const OssProblem& prob, const DcGains& gains,
                         const ConstraintGains& cg, const Vector& state, const Vector& z) {
  return std::visit(
      [&](const auto& ctrl) -> Vector {
        using T = std::decay_t<decltype(ctrl)>;
        if constexpr (std::is_same_v<T, PrimalDualController>) {
          return state.head(prob.m);
        } else if constexpr (std::is_same_v<T, InversionController>) {
          return inversion_output(ctrl, prob, gains, cg, state, z);
        } else if constexpr (std::is_same_v<T, TwoLoopController>) {
          return two_loop_output(ctrl, state);
        } else {
          return static_gain_output(ctrl, state);
        }
      },
      c);
}

Vector controller_rhs(const Controller& c, const OssProblem& prob, const DcGains& gains,
                      const ConstraintGains& cg, const FeasibleSubspace* fs,
                      const Vector& state, const Vector& u, const Vector& z,
                      const Vector& w) {
  return std::visit(
      [&](const auto& ctrl) -> Vector {
        using T = std::decay_t<decltype(ctrl)>;
        if constexpr (std::is_same_v<T, PrimalDualController>) {
          return primal_dual_rhs(ctrl, prob, gains, cg, state, z, w);
        } else if constexpr (std::is_same_v<T, InversionController>) {
          return inversion_rhs(ctrl, prob, cg, u, z, w);
        } else if constexpr (std::is_same_v<T, TwoLoopController>) {
          if (!fs) throw InvalidInputError("two-loop controller needs a subspace");
          return two_loop_rhs(ctrl, *fs, prob, state, z, w);
        } else {
          if (!fs) throw InvalidInputError("static-gain controller needs a subspace");
          return static_gain_rhs(ctrl, *fs, prob, state, z, w);
        }
      },
      c);
}

}  // namespace oss
