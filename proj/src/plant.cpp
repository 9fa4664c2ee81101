#include "oss/plant.hpp"

#include <string>

namespace oss {

Plant make_plant(const Matrix& A, const Matrix& B, const Matrix& Bw, const Matrix& C,
                 const Matrix& D, const Matrix& Dw) {
  require_finite("A", A);
  require_finite("B", B);
  require_finite("Bw", Bw);
  require_finite("C", C);
  require_finite("D", D);
  require_finite("Dw", Dw);
  const int n = static_cast<int>(A.rows());
  const int m = static_cast<int>(B.cols());
  const int r = static_cast<int>(C.rows());
  const int nw = static_cast<int>(Bw.cols());
  if (A.cols() != n) throw InvalidInputError("A must be square");
  if (B.rows() != n) throw InvalidInputError("B must have n rows");
  if (Bw.rows() != n) throw InvalidInputError("Bw must have n rows");
  if (C.cols() != n) throw InvalidInputError("C must have n columns");
  if (D.rows() != r || D.cols() != m) throw InvalidInputError("D must be r x m");
  if (Dw.rows() != r || Dw.cols() != nw) throw InvalidInputError("Dw must be r x nw");

  const auto spectrum = max_eig_real(A);
  if (!(spectrum.max_real_part < 0)) {
    throw StabilityAssumptionError(
        "A is not Hurwitz: max eigenvalue real part = " +
            std::to_string(spectrum.max_real_part),
        spectrum.max_real_part);
  }
  return Plant{A, B, Bw, C, D, Dw, n, m, r, nw};
}

DcGains dc_gains(const Plant& p) {
  Eigen::PartialPivLU<Matrix> lu(p.A);
  const Matrix A_inv = lu.inverse();
  DcGains g;
  g.Gu = -p.C * (A_inv * p.B) + p.D;
  g.Gw = -p.C * (A_inv * p.Bw) + p.Dw;
  // 1-norm condition estimate; flags foundations that downstream formulas
  // should not trust blindly.
  const double norm_a = p.A.cwiseAbs().colwise().sum().maxCoeff();
  const double norm_ai = A_inv.cwiseAbs().colwise().sum().maxCoeff();
  g.cond_A = norm_a * norm_ai;
  g.near_singular_warning = g.cond_A > 1e12;
  return g;
}

Plant generate_stable_plant(std::uint64_t seed, int n, int m, int r, int nw,
                            const PlantGenOptions& options) {
  if (n < std::max(m, r)) {
    throw InvalidInputError("generate_stable_plant: need n >= max(m, r)");
  }
  if (options.c_row_scales.size() > 0 && options.c_row_scales.size() != r) {
    throw InvalidInputError("generate_stable_plant: c_row_scales must have r entries");
  }
  Rng rng(seed);
  for (int attempt = 0; attempt < options.max_resamples; ++attempt) {
    Matrix A = rng.gaussian_matrix(n, n);
    const double shift = max_eig_real(A).max_real_part + options.stability_margin;
    A -= shift * Matrix::Identity(n, n);
    Matrix B = rng.gaussian_matrix(n, m);
    Matrix C = rng.gaussian_matrix(r, n) / std::sqrt(static_cast<double>(n));
    if (options.c_row_scales.size() > 0) {
      C = options.c_row_scales.asDiagonal() * C;
    }
    Matrix D = Matrix::Zero(r, m);
    Matrix Bw = options.zero_disturbance_channels ? Matrix::Zero(n, nw)
                                                  : rng.gaussian_matrix(n, nw);
    Matrix Dw = Matrix::Zero(r, nw);

    Plant p = make_plant(A, B, Bw, C, D, Dw);
    const DcGains g = dc_gains(p);
    Eigen::JacobiSVD<Matrix> svd(g.Gu);
    const double smin = svd.singularValues().minCoeff();
    const double smax = svd.singularValues().maxCoeff();
    if (options.require_gu_full_column_rank) {
      if (m > r || smin <= 1e-8 * smax) continue;
    }
    if (options.gu_min_singular_value > 0) {
      const int rows = options.gu_authority_rows > 0
                           ? std::min(options.gu_authority_rows, r)
                           : r;
      Eigen::JacobiSVD<Matrix> svd_block(g.Gu.topRows(rows));
      const double block_smin = svd_block.singularValues().minCoeff();
      if (block_smin <= 0) continue;
      const double scale = options.gu_min_singular_value / block_smin;
      p.B *= scale;
      if (p.D.size() > 0) p.D *= scale;
    }
    return p;
  }
  throw GenerationError("generate_stable_plant: resampling budget exhausted");
}

}  // namespace oss
