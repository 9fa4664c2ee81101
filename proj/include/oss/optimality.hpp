#pragma once

#include "oss/problem.hpp"

namespace oss {

/// Basis of the subspace where the steady-state map and the engineering
/// constraints intersect:
///   range([Tz; Tu]) = null([I, -Gu; Hz, Hu]),
/// together with the minimum-norm particular solution (z0(w), u0(w)) of the
/// stacked linear system. The defining stack and right-hand-side map are
/// kept for residual checks and rank reports.
struct FeasibleSubspace {
  Matrix Tz;    // r x q
  Matrix Tu;    // m x q
  int q = 0;
  Matrix z0_w;  // r x nw, z0(w) = z0_w * w
  Matrix u0_w;  // m x nw
  Matrix stack;    // (r+nc) x (r+m)
  Matrix rhs_map;  // (r+nc) x nw: [Gw; -Hw]
  bool rank_warning = false;

  Vector z0(const Vector& w) const { return z0_w * w; }
  Vector u0(const Vector& w) const { return u0_w * w; }
};

/// Canonical subspace with orthonormal columns from the SVD nullspace.
/// Throws InfeasibleError when the nullspace is trivial (no design freedom).
FeasibleSubspace build_subspace(const DcGains& gains, const OssProblem& prob);

/// Subspace with a caller-chosen basis (e.g. a Laplacian-derived one).
/// Validates the defining equation and full column rank.
FeasibleSubspace make_subspace_with_basis(const DcGains& gains, const OssProblem& prob,
                                          const Matrix& Tz, const Matrix& Tu);

/// Executable form of the structural rank facts about T = [Tz; Tu].
struct Lemma1Report {
  bool tu_full_column_rank = false;         // item (i), always expected true
  bool tz_full_column_rank = false;         // item (ii), left side
  bool range_tu_in_range_gut = false;       // item (ii), right side
  bool gu_full_column_rank = false;         // item (iii) hypothesis
  bool gu_full_row_rank = false;            // item (iv) hypothesis
  bool item_iv_candidate_exists = false;    // X with (Hz + Hu Gu+)X = 0
  double item_iv_defining_residual = 0.0;   // ||stack * [X; Gu+ X]|| when it exists
  int item_iv_candidate_cols = 0;
  Matrix item_iv_Tz, item_iv_Tu;
};

Lemma1Report lemma1_report(const FeasibleSubspace& fs, const DcGains& gains);

/// Dual-integrator optimality model state (model #1).
struct Om1State {
  Vector mu;   // nc
  double tau;  // > 0
};

/// One evaluation of optimality model #1:
///   tau mu' = Hz z + Hu u + Hw w
///   e = grad f0(u) + Gu' grad g0(z) + (Hz Gu + Hu)' mu
struct Om1Output {
  Vector mu_dot;
  Vector e;
};

Om1Output om1_step(const Om1State& state, const OssProblem& prob, const DcGains& gains,
                   const Vector& z, const Vector& u, const Vector& w);

/// Error signals of optimality model #2:
///   e1 = Tu' grad f0(u) + Tz' grad g0(z),   e2 = Hz z + Hu u + Hw w.
struct Om2Error {
  Vector e1;  // q
  Vector e2;  // nc
};

Om2Error om2_error(const FeasibleSubspace& fs, const OssProblem& prob, const Vector& z,
                   const Vector& u, const Vector& w);

}  // namespace oss
