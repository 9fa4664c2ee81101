#pragma once

#include <optional>
#include <variant>

#include "oss/optimality.hpp"

namespace oss {

/// N = Hz Gu + Hu and Nt = Hz Gw + Hw; the constraint data seen through the
/// plant's steady-state map.
struct ConstraintGains {
  Matrix N;   // nc x m
  Matrix Nt;  // nc x nw
};

ConstraintGains constraint_gains(const OssProblem& prob, const DcGains& gains);

/// Saddle-point flow on the first optimality model:
///   tau_p u'  = -grad f0(u) - Gu' grad g0(z) - N' mu
///   tau_d mu' = Hz z + Hu u + Hw w
/// State layout: [u; mu].
struct PrimalDualController {
  double tau_p = 2.0;
  double tau_d = 2.0;
};

/// Integrator on the constraint violation with static inversion output:
///   tau mu' = Hz z + Hu u + Hw w,   u = (grad f0)^-1(-Gu' grad g0(z) - N' mu).
/// State layout: [mu].
struct InversionController {
  double tau = 2.0;
};

/// Two integral loops on the second optimality model:
///   tau1 eta1' = -e1,   tau2 eta2' = -e2,   u = K1 eta1 + K2 eta2.
/// State layout: [eta1; eta2].
struct TwoLoopController {
  Matrix K1;    // m x q, full column rank, Pi_c K1 = Tu P
  Matrix K2;    // m x nc, -N K2 Hurwitz
  Matrix Pi_c;  // m x m oblique projection I - K2 (N K2)^-1 N
  Matrix P;     // q x q SPD
  double tau1 = 5.0;
  double tau2 = 1.0;
};

/// Single-time-constant form of the two-loop design with a synthesized or
/// user-supplied gain K = [K1 K2]. State layout: [eta1; eta2].
struct StaticGainController {
  Matrix K;  // m x (q + nc)
  double tau = 1.0;
};

using Controller = std::variant<PrimalDualController, InversionController,
                                TwoLoopController, StaticGainController>;

/// Gain construction for the two-loop design. K2 defaults to the
/// pseudoinverse of N; a custom K2 must make -N K2 Hurwitz. K1 is the
/// minimum-norm solution of Pi_c K1 = Tu P, checked for full column rank.
TwoLoopController two_loop_gains(const FeasibleSubspace& fs, const ConstraintGains& cg,
                                 const Matrix& P,
                                 const std::optional<Matrix>& K2_custom = std::nullopt,
                                 double tau1 = 5.0, double tau2 = 1.0);

Vector primal_dual_rhs(const PrimalDualController& c, const OssProblem& prob,
                       const DcGains& gains, const ConstraintGains& cg,
                       const Vector& state, const Vector& z, const Vector& w);

Vector inversion_output(const InversionController& c, const OssProblem& prob,
                        const DcGains& gains, const ConstraintGains& cg, const Vector& mu,
                        const Vector& z);

Vector inversion_rhs(const InversionController& c, const OssProblem& prob,
                     const ConstraintGains& cg, const Vector& u, const Vector& z,
                     const Vector& w);

Vector two_loop_output(const TwoLoopController& c, const Vector& state);

Vector two_loop_rhs(const TwoLoopController& c, const FeasibleSubspace& fs,
                    const OssProblem& prob, const Vector& state, const Vector& z,
                    const Vector& w);

Vector static_gain_output(const StaticGainController& c, const Vector& state);

Vector static_gain_rhs(const StaticGainController& c, const FeasibleSubspace& fs,
                       const OssProblem& prob, const Vector& state, const Vector& z,
                       const Vector& w);

/// Uniform access for the simulation loop.
int controller_state_dim(const Controller& c, const OssProblem& prob,
                         const FeasibleSubspace* fs);

/// mu and eta start at zero; the primal-dual input state starts at the box
/// center so barrier terms are defined from the first step.
Vector controller_initial_state(const Controller& c, const OssProblem& prob,
                                const FeasibleSubspace* fs);

/// True when the output map needs the measured z (inversion design).
bool controller_output_uses_z(const Controller& c);

Vector controller_output(const Controller& c, const OssProblem& prob, const DcGains& gains,
                         const ConstraintGains& cg, const Vector& state, const Vector& z);

Vector controller_rhs(const Controller& c, const OssProblem& prob, const DcGains& gains,
                      const ConstraintGains& cg, const FeasibleSubspace* fs,
                      const Vector& state, const Vector& u, const Vector& z,
                      const Vector& w);

}  // namespace oss
