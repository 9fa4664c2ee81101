#pragma once

#include "oss/sdp.hpp"
#include "oss/stabilizer.hpp"

namespace oss {

enum class ConvexityClass {
  convex,
  convex_lipschitz,
  strongly_convex,
  strongly_convex_lipschitz,
};

/// 2x2 core of the incremental sector constraint for one gradient
/// nonlinearity, acting on increment pairs (dp, dq). The positive multiplier
/// theta scaling the core is a synthesis decision variable, not stored here.
struct SectorMultiplier {
  ConvexityClass cls = ConvexityClass::convex;
  Eigen::Matrix2d core = Eigen::Matrix2d::Zero();
  int channel_dim = 0;
  double m = 0.0;
  double L = std::numeric_limits<double>::infinity();
};

/// Sector core for the declared convexity class:
///   (i)   convex:                      [0 1; 1 0]
///   (ii)  + Lipschitz gradient:        [-2 L; L 0]
///   (iii) strongly convex:             [0 1; 1 -2m]
///   (iv)  strongly convex + Lipschitz: [-2 m+L; m+L -2mL]
/// Classes (i)-(iii) are the corresponding limits of the class-(iv) core.
SectorMultiplier sector_matrix(ConvexityClass cls, double m, double L, int dim);

/// Class pick for declared sector bounds (m, L).
ConvexityClass classify_sector(const Sector& s);

/// Linear-fractional representation of the reduced two-loop dynamics with
/// the gradient residuals pulled out into uncertainty channels p = Delta(q):
///
///   [eta1'; eta2'] = A eta + B u + B1 p + B2 w
///   q              = C1 eta + E1 u + D1 p + D12 w
///   [z1; z2]       = C2 eta + E2 u + D21 p + D2 w
///
/// with performance outputs z1 = eta1', z2 = rho * eta2'. The uncertainty
/// input stacks p1 = grad of the f0 residual (dim m) and p2 = grad of the g0
/// residual (dim r); a channel is dropped when the residual is absent.
struct LfrSystem {
  Matrix A, B, B1, B2;
  Matrix C1, E1, D1, D12;
  Matrix C2, E2, D21, D2;
  double rho = 1.0;
  int q = 0, nc = 0, m = 0, r = 0, nw = 0;
  int p1_dim = 0, p2_dim = 0;
  int state_dim() const { return q + nc; }
  int p_dim() const { return p1_dim + p2_dim; }
};

LfrSystem assemble_lfr(const FeasibleSubspace& fs, const OssProblem& prob,
                       const DcGains& gains, const ConstraintGains& cg, double rho);

/// Direct evaluation of the reduced dynamics eta' with p substituted by the
/// actual residual gradients; cross-checks the LFR assembly in tests.
Vector lfr_rhs_direct(const FeasibleSubspace& fs, const OssProblem& prob,
                      const DcGains& gains, const ConstraintGains& cg, const Vector& u,
                      const Vector& w);

struct SynthesisResult {
  bool feasible = false;
  Matrix K;  // m x (q + nc)
  Matrix Y;  // SPD
  Matrix Z;
  double theta1 = 0.0, theta2 = 0.0;
  double gamma = 0.0;
  /// Largest eigenvalue of the primal performance LMI at (K, Y^-1, theta),
  /// normalized by its spectral norm; certified designs have this < 0.
  double certificate_margin = 0.0;
  /// Margin variable achieved by the feasibility program.
  double margin_t = 0.0;
  SdpStatus sdp_status = SdpStatus::numerical_failure;
};

enum class SynthesisMode { fixed_gamma, minimize_gamma };

struct SynthesisOptions {
  SynthesisMode mode = SynthesisMode::minimize_gamma;
  double gamma = 0.0;             // required for fixed_gamma
  double gamma_rel_tol = 1e-3;    // bisection width, relative
  double gamma_max = 1e6;
  double required_margin = 1e-6;  // feasibility threshold on the margin var
  double sdp_tol = 1e-9;
  /// Exponential decay floor on the reduced closed loop: the synthesis LMI
  /// uses A + alpha*I, ruling out near-singular gains whose slowest mode
  /// would crawl. The recovered design still satisfies the alpha = 0
  /// certificate (the decay form dominates it).
  double decay_alpha = 0.0;
};

/// Dual LMI synthesis: finds Y > 0, Z, theta > 0 making the dualized
/// performance inequality hold, recovers K = Z Y^-1, and re-checks the
/// primal certificate with P = Y^-1. In minimize_gamma mode the smallest
/// feasible gamma is located by bisection on gamma^2 over feasibility
/// subproblems. Throws CertificateMismatchError when a feasible dual point
/// fails the primal recheck.
SynthesisResult synthesize(const LfrSystem& lfr, const SectorMultiplier& th1,
                           const SectorMultiplier& th2, const SynthesisOptions& options);

/// Primal performance LMI matrix at a candidate (K, P, theta, gamma);
/// negative definite iff the design is certified.
Matrix primal_certificate_matrix(const LfrSystem& lfr, const Matrix& K, const Matrix& P,
                                 const SectorMultiplier& th1, const SectorMultiplier& th2,
                                 double theta1, double theta2, double gamma);

}  // namespace oss
