#pragma once

#include <string>

#include "oss/stabilizer.hpp"

namespace oss {

/// Piecewise-constant exogenous signal: w(t) is the value of the last step
/// at or before t. The first step must be at t = 0.
struct DisturbanceSchedule {
  std::vector<std::pair<double, Vector>> steps;
  const Vector& at(double t) const;
};

struct SimTolerances {
  double final_u = 1e-3;
  double kkt = 1e-4;
  double settle_u = 1e-3;
  int settle_consecutive = 5;
  double divergence_norm = 1e6;
};

/// One closed-loop experiment: plant + problem + controller + schedule.
struct Scenario {
  Plant plant;
  OssProblem problem;
  DcGains gains;
  ConstraintGains cg;
  std::optional<FeasibleSubspace> fs;
  Controller controller;
  DisturbanceSchedule schedule;
  double horizon = 0.0;
  double dt = 0.0;
  SimTolerances tol;
};

/// Validates dimensions, schedule monotonicity, controller preconditions
/// (full-row-rank N; D = 0 for output maps that read z) and packages the
/// derived gains.
Scenario make_scenario(Plant plant, OssProblem problem, Controller controller,
                       DisturbanceSchedule schedule, double horizon, double dt,
                       std::optional<FeasibleSubspace> fs = std::nullopt,
                       SimTolerances tol = {});

/// Time-indexed record of a run. Divergence is recorded, not thrown, so
/// sweeps can tabulate failures.
struct Trace {
  std::vector<double> t;
  std::vector<Vector> x, u, z, ctrl;
  std::vector<double> kkt_stat, kkt_feas;
  std::vector<double> event_times;
  bool diverged = false;
  double divergence_time = 0.0;
};

Trace run(const Scenario& s);

/// Oracle optimizer per schedule interval.
std::vector<KktPoint> interval_oracles(const Scenario& s);

struct IntervalReport {
  double start = 0.0, end = 0.0;
  /// First time after the step with |u - u*| <= settle_u sustained for
  /// settle_consecutive samples; infinity when never reached.
  double settle_time = 0.0;
  double eng_violation_max = 0.0;
  double u_box_violation_max = 0.0;
  double z_box_violation_max = 0.0;
};

struct ConvergenceReport {
  double final_stationarity = 0.0;
  double final_feasibility = 0.0;
  double final_u_error = 0.0;
  std::vector<IntervalReport> intervals;
  bool diverged = false;
  bool success = false;
};

ConvergenceReport evaluate(const Scenario& s, const Trace& trace,
                           const std::vector<KktPoint>& oracles);

struct SweepRow {
  double tau = 0.0;
  bool success = false;
  bool diverged = false;
  double settle_time = 0.0;
};

struct SweepOptions {
  /// Horizon grows with slow controllers: horizon = max(base, scale * tau).
  double horizon_scale = 40.0;
  /// Step shrinks with fast controllers: dt = min(base dt, tau / resolution).
  double dt_resolution = 50.0;
};

/// One run per grid point, scaling the controller time constants to tau
/// (two-loop designs keep their tau1/tau2 ratio). Reports success against
/// the interval oracles.
std::vector<SweepRow> tau_sweep(const Scenario& base, const std::vector<double>& grid,
                                const SweepOptions& options = {});

/// Largest contiguous run of successful grid points, as inclusive indices;
/// (-1, -1) when none succeeded.
std::pair<int, int> largest_contiguous_success(const std::vector<SweepRow>& rows);

/// CSV export: header t, x_0.., u_0.., z_0.., ctrl_0.., kkt_stat, kkt_feas
/// with 17-significant-digit decimal formatting.
void write_trace_csv(const Trace& trace, const std::string& path);

}  // namespace oss
