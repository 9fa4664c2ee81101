#pragma once

#include <cstdint>

#include "oss/numerics.hpp"

namespace oss {

/// Exponentially stable LTI plant
///   x' = A x + B u + Bw w
///   z  = C x + D u + Dw w
/// with n states, m inputs, r measured outputs and nw exogenous channels.
struct Plant {
  Matrix A, B, Bw, C, D, Dw;
  int n = 0, m = 0, r = 0, nw = 0;
};

/// Steady-state input-output maps z = Gu*u + Gw*w of a stable plant.
struct DcGains {
  Matrix Gu;  // -C A^-1 B + D
  Matrix Gw;  // -C A^-1 Bw + Dw
  double cond_A = 0.0;
  bool near_singular_warning = false;
};

/// Validates dimensions and the Hurwitz property of A.
Plant make_plant(const Matrix& A, const Matrix& B, const Matrix& Bw, const Matrix& C,
                 const Matrix& D, const Matrix& Dw);

DcGains dc_gains(const Plant& p);

struct PlantGenOptions {
  double stability_margin = 0.2;
  /// Resample until Gu has full column rank (needs n >= m and r >= m).
  bool require_gu_full_column_rank = false;
  /// When positive, rescale B so the smallest singular value of Gu (or of
  /// its leading gu_authority_rows x m block) equals this target. Keeps
  /// generation deterministic while controlling actuator authority.
  double gu_min_singular_value = 0.0;
  /// Rows of Gu the authority target applies to; 0 means all rows.
  int gu_authority_rows = 0;
  /// Per-output scale factors applied to the rows of C (sensor units);
  /// empty means no scaling.
  Vector c_row_scales;
  /// Zero Bw and Dw; use when w only enters through engineering constraints.
  bool zero_disturbance_channels = false;
  int max_resamples = 64;
};

/// Deterministic random stable plant: A is a Gaussian matrix shifted so its
/// spectral abscissa equals -stability_margin; B, C Gaussian; D = 0.
Plant generate_stable_plant(std::uint64_t seed, int n, int m, int r, int nw,
                            const PlantGenOptions& options = {});

}  // namespace oss
