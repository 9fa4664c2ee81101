#include "oss/optimality.hpp"

#include <string>

namespace oss {

namespace {

Matrix constraint_stack(const DcGains& gains, const OssProblem& prob) {
  const int r = prob.r, m = prob.m, nc = prob.nc;
  Matrix stack(r + nc, r + m);
  stack << Matrix::Identity(r, r), -gains.Gu, prob.Hz, prob.Hu;
  return stack;
}

void fill_particular(FeasibleSubspace& fs, const DcGains& gains, const OssProblem& prob) {
  const int r = prob.r;
  Matrix rhs(r + prob.nc, prob.nw);
  rhs << gains.Gw, -prob.Hw;
  fs.rhs_map = rhs;
  const Matrix particular = lstsq(fs.stack, rhs);
  fs.z0_w = particular.topRows(r);
  fs.u0_w = particular.bottomRows(prob.m);
  // An inconsistent system for some w is reported at solve time, not here:
  // the particular solution is a linear map and exactness depends on w.
  const double res = (fs.stack * particular - rhs).norm();
  if (res > 1e-8 * std::max(1.0, rhs.norm())) fs.rank_warning = true;
}

}  // namespace

FeasibleSubspace build_subspace(const DcGains& gains, const OssProblem& prob) {
  FeasibleSubspace fs;
  fs.stack = constraint_stack(gains, prob);
  const Matrix T = nullspace(fs.stack);
  fs.q = static_cast<int>(T.cols());
  if (fs.q == 0) {
    throw InfeasibleError("feasible subspace is trivial: the program has no freedom");
  }
  fs.Tz = T.topRows(prob.r);
  fs.Tu = T.bottomRows(prob.m);
  // With N = HzGu + Hu of full row rank the stack has full row rank and
  // q = m - nc exactly; anything else is flagged for inspection.
  if (rank(fs.stack) < fs.stack.rows()) fs.rank_warning = true;
  fill_particular(fs, gains, prob);
  return fs;
}

FeasibleSubspace make_subspace_with_basis(const DcGains& gains, const OssProblem& prob,
                                          const Matrix& Tz, const Matrix& Tu) {
  require_finite("Tz", Tz);
  require_finite("Tu", Tu);
  if (Tz.rows() != prob.r || Tu.rows() != prob.m || Tz.cols() != Tu.cols()) {
    throw InvalidInputError("subspace basis: dimension mismatch");
  }
  FeasibleSubspace fs;
  fs.stack = constraint_stack(gains, prob);
  fs.q = static_cast<int>(Tz.cols());
  fs.Tz = Tz;
  fs.Tu = Tu;
  Matrix T(prob.r + prob.m, fs.q);
  T << Tz, Tu;
  const double scale = std::max(1.0, T.cwiseAbs().maxCoeff());
  const double res = (fs.stack * T).norm();
  if (res > 1e-8 * scale) {
    throw InvalidInputError("subspace basis does not satisfy the defining equation, "
                            "residual = " + std::to_string(res));
  }
  if (rank(T) < fs.q) throw InvalidInputError("subspace basis is rank deficient");
  const int expected = static_cast<int>(nullspace(fs.stack).cols());
  if (fs.q != expected) {
    throw InvalidInputError("subspace basis has " + std::to_string(fs.q) +
                            " columns, nullspace dimension is " + std::to_string(expected));
  }
  fill_particular(fs, gains, prob);
  return fs;
}

Lemma1Report lemma1_report(const FeasibleSubspace& fs, const DcGains& gains) {
  Lemma1Report rep;
  const int q = fs.q;
  const int m = static_cast<int>(fs.Tu.rows());
  const int r = static_cast<int>(fs.Tz.rows());
  rep.tu_full_column_rank = rank(fs.Tu) == q;
  rep.tz_full_column_rank = rank(fs.Tz) == q;

  // Item (ii): range(Tu) in range(Gu') iff the projection onto the row space
  // of Gu reproduces Tu.
  Eigen::JacobiSVD<Matrix> svd(gains.Gu, Eigen::ComputeFullV);
  const double cutoff = default_rank_tol(gains.Gu) *
                        (svd.singularValues().size() ? svd.singularValues()[0] : 0.0);
  int gu_rank = 0;
  for (int i = 0; i < svd.singularValues().size(); ++i) {
    if (svd.singularValues()[i] > cutoff) ++gu_rank;
  }
  const Matrix Vr = svd.matrixV().leftCols(gu_rank);
  const double defect = (fs.Tu - Vr * (Vr.transpose() * fs.Tu)).norm();
  rep.range_tu_in_range_gut = defect <= 1e-8 * std::max(1.0, fs.Tu.norm());

  rep.gu_full_column_rank = gu_rank == gains.Gu.cols();
  rep.gu_full_row_rank = gu_rank == gains.Gu.rows();

  if (rep.gu_full_row_rank) {
    // Item (iv): X of full column rank with (Hz + Hu Gu+) X = 0; candidate
    // basis Tz = X, Tu = Gu+ X.
    const Matrix gu_pinv = pseudoinverse(gains.Gu);
    const Matrix Hz = fs.stack.block(r, 0, fs.stack.rows() - r, r);
    const Matrix Hu = fs.stack.block(r, r, fs.stack.rows() - r, m);
    const Matrix X = nullspace(Hz + Hu * gu_pinv);
    rep.item_iv_candidate_cols = static_cast<int>(X.cols());
    rep.item_iv_candidate_exists = X.cols() > 0;
    if (rep.item_iv_candidate_exists) {
      rep.item_iv_Tz = X;
      rep.item_iv_Tu = gu_pinv * X;
      Matrix cand(r + m, X.cols());
      cand << rep.item_iv_Tz, rep.item_iv_Tu;
      rep.item_iv_defining_residual = (fs.stack * cand).norm();
    }
  }
  return rep;
}

Om1Output om1_step(const Om1State& state, const OssProblem& prob, const DcGains& gains,
                   const Vector& z, const Vector& u, const Vector& w) {
  if (!(state.tau > 0)) throw InvalidInputError("om1_step: tau must be positive");
  Om1Output out;
  out.mu_dot = (prob.Hz * z + prob.Hu * u + prob.Hw * w) / state.tau;
  const Matrix N = prob.Hz * gains.Gu + prob.Hu;
  out.e = gradient(prob.f0, u) + gains.Gu.transpose() * gradient(prob.g0, z);
  if (prob.nc > 0) out.e += N.transpose() * state.mu;
  return out;
}

Om2Error om2_error(const FeasibleSubspace& fs, const OssProblem& prob, const Vector& z,
                   const Vector& u, const Vector& w) {
  Om2Error err;
  err.e1 = fs.Tu.transpose() * gradient(prob.f0, u) +
           fs.Tz.transpose() * gradient(prob.g0, z);
  err.e2 = prob.Hz * z + prob.Hu * u + prob.Hw * w;
  return err;
}

}  // namespace oss
