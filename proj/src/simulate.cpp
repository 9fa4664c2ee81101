#include "oss/simulate.hpp"

#include <cmath>
#include <cstdio>
#include <future>

namespace oss {

const Vector& DisturbanceSchedule::at(double t) const {
  if (steps.empty()) throw InvalidInputError("schedule is empty");
  const Vector* current = &steps.front().second;
  for (const auto& [time, value] : steps) {
    if (time <= t + 1e-12) {
      current = &value;
    } else {
      break;
    }
  }
  return *current;
}

Scenario make_scenario(Plant plant, OssProblem problem, Controller controller,
                       DisturbanceSchedule schedule, double horizon, double dt,
                       std::optional<FeasibleSubspace> fs, SimTolerances tol) {
  if (plant.m != problem.m || plant.r != problem.r || plant.nw != problem.nw) {
    throw InvalidInputError("scenario: plant and problem dimensions disagree");
  }
  if (!(dt > 0)) throw InvalidInputError("scenario: dt must be positive");
  if (schedule.steps.empty() || schedule.steps.front().first != 0.0) {
    throw InvalidInputError("scenario: schedule must start at t = 0");
  }
  double prev = -1.0;
  for (const auto& [time, value] : schedule.steps) {
    if (time <= prev) throw InvalidInputError("scenario: schedule times must increase");
    if (value.size() != plant.nw) throw InvalidInputError("scenario: schedule value size");
    prev = time;
  }
  if (horizon < prev) throw InvalidInputError("scenario: horizon before last step");

  Scenario s;
  s.plant = std::move(plant);
  s.problem = std::move(problem);
  s.gains = dc_gains(s.plant);
  s.cg = constraint_gains(s.problem, s.gains);
  s.fs = std::move(fs);
  s.controller = std::move(controller);
  s.schedule = std::move(schedule);
  s.horizon = horizon;
  s.dt = dt;
  s.tol = tol;

  if (controller_output_uses_z(s.controller) && s.plant.D.cwiseAbs().maxCoeff() > 0) {
    throw InvalidInputError(
        "scenario: inversion output feeds back z; a plant with direct feedthrough "
        "D != 0 would create an algebraic loop");
  }
  const bool needs_fs = std::holds_alternative<TwoLoopController>(s.controller) ||
                        std::holds_alternative<StaticGainController>(s.controller);
  if (needs_fs && !s.fs) {
    throw InvalidInputError("scenario: controller requires a feasible subspace");
  }
  if (s.problem.nc > 0 && rank(s.cg.N) < s.problem.nc) {
    throw PreconditionError("scenario: N = Hz Gu + Hu must have full row rank");
  }
  return s;
}

namespace {

struct SampleMaps {
  // Multiplier recovery for the per-sample KKT residual: least squares on
  // the stationarity condition.
  Matrix nt_pinv;  // pinv(N'), nc x m
};

void record_sample(const Scenario& s, const SampleMaps& maps, double t, const Vector& x,
                   const Vector& xc, const Vector& w, Trace& trace) {
  Vector z, u;
  if (controller_output_uses_z(s.controller)) {
    z = s.plant.C * x + s.plant.Dw * w;
    u = controller_output(s.controller, s.problem, s.gains, s.cg, xc, z);
  } else {
    u = controller_output(s.controller, s.problem, s.gains, s.cg, xc, Vector());
    z = s.plant.C * x + s.plant.D * u + s.plant.Dw * w;
  }
  Vector mu = Vector::Zero(s.problem.nc);
  const Vector grad_total = gradient(s.problem.f0, u) +
                            s.gains.Gu.transpose() * gradient(s.problem.g0, z);
  if (s.problem.nc > 0) mu = maps.nt_pinv * (-grad_total);
  const auto [stat, feas] = kkt_residual(s.problem, s.gains, u, z, mu, w);
  trace.t.push_back(t);
  trace.x.push_back(x);
  trace.u.push_back(u);
  trace.z.push_back(z);
  trace.ctrl.push_back(xc);
  trace.kkt_stat.push_back(stat);
  trace.kkt_feas.push_back(feas);
}

}  // namespace

Trace run(const Scenario& s) {
  Trace trace;
  const int n = s.plant.n;
  const int dc = controller_state_dim(s.controller, s.problem,
                                      s.fs ? &*s.fs : nullptr);
  Vector x = Vector::Zero(n);
  Vector xc = controller_initial_state(s.controller, s.problem, s.fs ? &*s.fs : nullptr);

  SampleMaps maps;
  if (s.problem.nc > 0) maps.nt_pinv = pseudoinverse(s.cg.N.transpose());

  // Segment boundaries: schedule switches and the horizon.
  std::vector<double> boundaries;
  for (const auto& [time, value] : s.schedule.steps) {
    if (time > 0) boundaries.push_back(time);
  }
  boundaries.push_back(s.horizon);
  trace.event_times = boundaries;
  trace.event_times.pop_back();

  const FeasibleSubspace* fs = s.fs ? &*s.fs : nullptr;

  double t0 = 0.0;
  try {
    record_sample(s, maps, 0.0, x, xc, s.schedule.at(0.0), trace);
    for (double t1 : boundaries) {
      if (t1 <= t0) continue;
      const Vector w = s.schedule.at(t0);
      auto field = [&](double, const Vector& state) -> Vector {
        const Vector xs = state.head(n);
        const Vector cs = state.tail(dc);
        Vector z, u;
        if (controller_output_uses_z(s.controller)) {
          z = s.plant.C * xs + s.plant.Dw * w;
          u = controller_output(s.controller, s.problem, s.gains, s.cg, cs, z);
        } else {
          u = controller_output(s.controller, s.problem, s.gains, s.cg, cs, Vector());
          z = s.plant.C * xs + s.plant.D * u + s.plant.Dw * w;
        }
        Vector d(n + dc);
        d.head(n) = s.plant.A * xs + s.plant.B * u + s.plant.Bw * w;
        d.tail(dc) = controller_rhs(s.controller, s.problem, s.gains, s.cg, fs, cs, u, z, w);
        return d;
      };

      Vector state(n + dc);
      state << x, xc;
      const double span = t1 - t0;
      const long full_steps = static_cast<long>(std::floor(span / s.dt + 1e-9));
      double t = t0;
      for (long k = 1; k <= full_steps + 1; ++k) {
        double h = s.dt;
        double t_next = t0 + static_cast<double>(k) * s.dt;
        if (k == full_steps + 1) {
          h = t1 - t;
          t_next = t1;
          if (h <= 1e-9 * std::max(1.0, t1)) break;
        }
        state = rk4_step(field, t, state, h);
        t = t_next;
        if (!state.allFinite() || state.cwiseAbs().maxCoeff() > s.tol.divergence_norm) {
          trace.diverged = true;
          trace.divergence_time = t;
          return trace;
        }
        x = state.head(n);
        xc = state.tail(dc);
        record_sample(s, maps, t, x, xc, w, trace);
      }
      t0 = t1;
    }
  } catch (const DomainError&) {
    // A barrier evaluation escaped its domain: the transient left the
    // admissible region, which counts as a diverged run.
    trace.diverged = true;
    trace.divergence_time = trace.t.empty() ? 0.0 : trace.t.back();
  } catch (const NonConvergenceError&) {
    // An inner solve (gradient inversion) broke down along the trajectory.
    trace.diverged = true;
    trace.divergence_time = trace.t.empty() ? 0.0 : trace.t.back();
  }
  return trace;
}

std::vector<KktPoint> interval_oracles(const Scenario& s) {
  std::vector<KktPoint> oracles;
  oracles.reserve(s.schedule.steps.size());
  for (const auto& [time, w] : s.schedule.steps) {
    oracles.push_back(solve_reference(s.problem, s.gains, w));
  }
  return oracles;
}

ConvergenceReport evaluate(const Scenario& s, const Trace& trace,
                           const std::vector<KktPoint>& oracles) {
  if (oracles.size() != s.schedule.steps.size()) {
    throw InvalidInputError("evaluate: need one oracle per schedule interval");
  }
  ConvergenceReport rep;
  rep.diverged = trace.diverged;
  if (trace.t.empty()) return rep;

  const size_t ns = trace.t.size();
  for (size_t k = 0; k < s.schedule.steps.size(); ++k) {
    IntervalReport ir;
    ir.start = s.schedule.steps[k].first;
    ir.end = k + 1 < s.schedule.steps.size() ? s.schedule.steps[k + 1].first : s.horizon;
    const Vector& u_star = oracles[k].u_star;

    int consecutive = 0;
    double run_start = 0.0;
    double settle = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < ns; ++i) {
      const double t = trace.t[i];
      if (t < ir.start - 1e-12 || t > ir.end + 1e-12) continue;
      const double err = (trace.u[i] - u_star).norm();
      if (err <= s.tol.settle_u) {
        if (consecutive == 0) run_start = t;
        ++consecutive;
        if (consecutive >= s.tol.settle_consecutive && !std::isfinite(settle)) {
          settle = run_start - ir.start;
        }
      } else {
        consecutive = 0;
        settle = std::numeric_limits<double>::infinity();
      }
      const Vector& w = s.schedule.steps[k].second;
      const Vector eng = s.problem.Hz * trace.z[i] + s.problem.Hu * trace.u[i] +
                         s.problem.Hw * w;
      ir.eng_violation_max = std::max(ir.eng_violation_max,
                                      eng.size() ? eng.cwiseAbs().maxCoeff() : 0.0);
      if (s.problem.f0.box()) {
        const auto& box = *s.problem.f0.box();
        for (int c = 0; c < trace.u[i].size(); ++c) {
          ir.u_box_violation_max = std::max({ir.u_box_violation_max,
                                             trace.u[i][c] - box.hi[c],
                                             box.lo[c] - trace.u[i][c]});
        }
      }
      if (s.problem.g0.residual_kind() == ResidualKind::softmax_penalty) {
        for (int c = 0; c < trace.z[i].size(); ++c) {
          ir.z_box_violation_max = std::max({ir.z_box_violation_max,
                                             trace.z[i][c] - s.problem.g0.penalty_hi()[c],
                                             s.problem.g0.penalty_lo()[c] - trace.z[i][c]});
        }
      }
    }
    ir.settle_time = settle;
    ir.u_box_violation_max = std::max(0.0, ir.u_box_violation_max);
    ir.z_box_violation_max = std::max(0.0, ir.z_box_violation_max);
    rep.intervals.push_back(ir);
  }

  rep.final_stationarity = trace.kkt_stat.back();
  rep.final_feasibility = trace.kkt_feas.back();
  rep.final_u_error = (trace.u.back() - oracles.back().u_star).norm();
  rep.success = !trace.diverged && rep.final_u_error <= s.tol.final_u &&
                rep.final_stationarity <= s.tol.kkt && rep.final_feasibility <= s.tol.kkt;
  return rep;
}

namespace {

double controller_tau_min(const Controller& c) {
  return std::visit(
      [](const auto& ctrl) -> double {
        using T = std::decay_t<decltype(ctrl)>;
        if constexpr (std::is_same_v<T, PrimalDualController>) {
          return std::min(ctrl.tau_p, ctrl.tau_d);
        } else if constexpr (std::is_same_v<T, InversionController>) {
          return ctrl.tau;
        } else if constexpr (std::is_same_v<T, TwoLoopController>) {
          return std::min(ctrl.tau1, ctrl.tau2);
        } else {
          return ctrl.tau;
        }
      },
      c);
}

double controller_tau_max(const Controller& c) {
  return std::visit(
      [](const auto& ctrl) -> double {
        using T = std::decay_t<decltype(ctrl)>;
        if constexpr (std::is_same_v<T, PrimalDualController>) {
          return std::max(ctrl.tau_p, ctrl.tau_d);
        } else if constexpr (std::is_same_v<T, InversionController>) {
          return ctrl.tau;
        } else if constexpr (std::is_same_v<T, TwoLoopController>) {
          return std::max(ctrl.tau1, ctrl.tau2);
        } else {
          return ctrl.tau;
        }
      },
      c);
}

Controller with_tau(const Controller& c, double tau) {
  Controller out = c;
  std::visit(
      [&](auto& ctrl) {
        using T = std::decay_t<decltype(ctrl)>;
        if constexpr (std::is_same_v<T, PrimalDualController>) {
          ctrl.tau_p = tau;
          ctrl.tau_d = tau;
        } else if constexpr (std::is_same_v<T, InversionController>) {
          ctrl.tau = tau;
        } else if constexpr (std::is_same_v<T, TwoLoopController>) {
          const double ratio = ctrl.tau1 / ctrl.tau2;
          ctrl.tau2 = tau;
          ctrl.tau1 = ratio * tau;
        } else {
          ctrl.tau = tau;
        }
      },
      out);
  return out;
}

}  // namespace

std::vector<SweepRow> tau_sweep(const Scenario& base, const std::vector<double>& grid,
                                const SweepOptions& options) {
  for (size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] > 0)) throw InvalidInputError("tau_sweep: grid must be positive");
    if (i > 0 && grid[i] <= grid[i - 1]) {
      throw InvalidInputError("tau_sweep: grid must be sorted ascending");
    }
  }
  const std::vector<KktPoint> oracles = interval_oracles(base);

  // A step small enough to resolve the controller, capped by RK4 stability
  // on the plant spectrum so slow tunings do not inflate the step count.
  const double dt_stability = 1.2 / std::max(1e-9, spectral_abs_max(base.plant.A));
  auto run_one = [&](double tau) -> SweepRow {
    Scenario s = base;
    s.controller = with_tau(base.controller, tau);
    const double tmax = controller_tau_max(s.controller);
    const double tmin = controller_tau_min(s.controller);
    s.horizon = std::max(base.horizon, options.horizon_scale * tmax);
    s.dt = std::min(dt_stability, std::max(1e-5, tmin / options.dt_resolution));
    const Trace trace = run(s);
    const ConvergenceReport rep = evaluate(s, trace, oracles);
    SweepRow row;
    row.tau = tau;
    row.success = rep.success;
    row.diverged = rep.diverged;
    row.settle_time = 0.0;
    for (const auto& ir : rep.intervals) {
      row.settle_time = std::max(row.settle_time, ir.settle_time);
    }
    return row;
  };

  std::vector<std::future<SweepRow>> futures;
  futures.reserve(grid.size());
  for (double tau : grid) {
    futures.push_back(std::async(std::launch::async, run_one, tau));
  }
  std::vector<SweepRow> rows;
  rows.reserve(grid.size());
  for (auto& f : futures) rows.push_back(f.get());
  return rows;
}

std::pair<int, int> largest_contiguous_success(const std::vector<SweepRow>& rows) {
  int best_lo = -1, best_hi = -1, best_len = 0;
  int lo = -1;
  for (int i = 0; i <= static_cast<int>(rows.size()); ++i) {
    const bool ok = i < static_cast<int>(rows.size()) && rows[i].success;
    if (ok && lo < 0) lo = i;
    if (!ok && lo >= 0) {
      if (i - lo > best_len) {
        best_len = i - lo;
        best_lo = lo;
        best_hi = i - 1;
      }
      lo = -1;
    }
  }
  return {best_lo, best_hi};
}

void write_trace_csv(const Trace& trace, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw Error("cannot open trace output file: " + path);
  const int nx = trace.x.empty() ? 0 : static_cast<int>(trace.x.front().size());
  const int nu = trace.u.empty() ? 0 : static_cast<int>(trace.u.front().size());
  const int nz = trace.z.empty() ? 0 : static_cast<int>(trace.z.front().size());
  const int nctrl = trace.ctrl.empty() ? 0 : static_cast<int>(trace.ctrl.front().size());
  std::fprintf(f, "t");
  for (int i = 0; i < nx; ++i) std::fprintf(f, ",x_%d", i);
  for (int i = 0; i < nu; ++i) std::fprintf(f, ",u_%d", i);
  for (int i = 0; i < nz; ++i) std::fprintf(f, ",z_%d", i);
  for (int i = 0; i < nctrl; ++i) std::fprintf(f, ",ctrl_%d", i);
  std::fprintf(f, ",kkt_stat,kkt_feas\n");
  for (size_t k = 0; k < trace.t.size(); ++k) {
    std::fprintf(f, "%.17g", trace.t[k]);
    for (int i = 0; i < nx; ++i) std::fprintf(f, ",%.17g", trace.x[k][i]);
    for (int i = 0; i < nu; ++i) std::fprintf(f, ",%.17g", trace.u[k][i]);
    for (int i = 0; i < nz; ++i) std::fprintf(f, ",%.17g", trace.z[k][i]);
    for (int i = 0; i < nctrl; ++i) std::fprintf(f, ",%.17g", trace.ctrl[k][i]);
    std::fprintf(f, ",%.17g,%.17g\n", trace.kkt_stat[k], trace.kkt_feas[k]);
  }
  std::fclose(f);
}

}  // namespace oss
