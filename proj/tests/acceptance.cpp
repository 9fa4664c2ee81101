#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "oss/cli.hpp"
#include "oss/frequency.hpp"
#include "oss/synthesis.hpp"
#include "test_support.hpp"

using namespace oss;
using oss::testing::academic_plant;
using oss::testing::academic_problem;

namespace {

const std::string kScenarioDir = OSS_SCENARIO_DIR;

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void report(int criterion, const char* label, bool ok) {
  std::printf("[%s] criterion %d: %s\n", ok ? "PASS" : "FAIL", criterion, label);
  std::fflush(stdout);
  CHECK_MESSAGE(ok, "criterion ", criterion, ": ", label);
}

struct ServoFixture {
  Plant plant = academic_plant();
  OssProblem problem = academic_problem();
  DcGains gains = dc_gains(plant);
  ConstraintGains cg = constraint_gains(problem, gains);
  FeasibleSubspace fs = build_subspace(gains, problem);
  DisturbanceSchedule schedule;

  ServoFixture() {
    schedule.steps = {{0.0, Vector::Zero(2)},
                      {10.0, (Vector(2) << 2, 0).finished()},
                      {40.0, (Vector(2) << 2, -2).finished()}};
  }

  Scenario scenario(Controller c, double dt = 0.01) const {
    return make_scenario(plant, problem, std::move(c), schedule, 120.0, dt, fs);
  }
};

SynthesisResult synthesize_servo(const ServoFixture& fix) {
  const LfrSystem lfr = assemble_lfr(fix.fs, fix.problem, fix.gains, fix.cg, 100.0);
  const Sector sf = fix.problem.f0.sector();
  const Sector sg = fix.problem.g0.sector();
  const SectorMultiplier th1 = sector_matrix(classify_sector(sf), sf.m, sf.L, lfr.p1_dim);
  const SectorMultiplier th2 = sector_matrix(classify_sector(sg), sg.m, sg.L, lfr.p2_dim);
  SynthesisOptions options;
  options.mode = SynthesisMode::minimize_gamma;
  options.decay_alpha = 0.2;
  return synthesize(lfr, th1, th2, options);
}

struct ServoOutcome {
  bool converged = false;
  bool u_strictly_inside = false;
  bool z_soft_ok = false;
  double runtime = 0.0;
};

ServoOutcome run_servo(const ServoFixture& fix, Controller c, double dt) {
  const auto t0 = std::chrono::steady_clock::now();
  const Scenario s = fix.scenario(std::move(c), dt);
  const std::vector<KktPoint> oracles = interval_oracles(s);
  const Trace trace = run(s);
  const ConvergenceReport rep = evaluate(s, trace, oracles);
  ServoOutcome out;
  out.runtime = seconds_since(t0);
  out.converged = rep.success && rep.final_u_error <= 1e-3 &&
                  rep.final_stationarity <= 1e-4 && rep.final_feasibility <= 1e-4;
  out.u_strictly_inside = !trace.diverged;
  for (const auto& u : trace.u) {
    out.u_strictly_inside = out.u_strictly_inside && s.problem.f0.box()->strictly_inside(u);
  }
  // Steady-state soft limits: the final quarter of each interval must keep
  // z_3..z_5 within the 0.05 slack of the penalty bounds.
  out.z_soft_ok = true;
  for (size_t j = 0; j < s.schedule.steps.size(); ++j) {
    const double start = s.schedule.steps[j].first;
    const double end =
        j + 1 < s.schedule.steps.size() ? s.schedule.steps[j + 1].first : s.horizon;
    const double from = start + 0.75 * (end - start);
    for (size_t k = 0; k < trace.t.size(); ++k) {
      if (trace.t[k] < from || trace.t[k] > end) continue;
      for (int i = 2; i < 5; ++i) {
        out.z_soft_ok = out.z_soft_ok && std::abs(trace.z[k][i]) <= 1.05;
      }
    }
  }
  return out;
}

}  // namespace

TEST_CASE("criterion 1: servo tracking with all four stabilizers") {
  const ServoFixture fix;
  bool all_ok = true;
  auto check_one = [&](const char* name, Controller c, double dt) {
    const ServoOutcome out = run_servo(fix, std::move(c), dt);
    const bool ok =
        out.converged && out.u_strictly_inside && out.z_soft_ok && out.runtime <= 60.0;
    std::printf("  servo %-12s converged=%d strict_u=%d soft_z=%d runtime=%.1fs\n", name,
                out.converged, out.u_strictly_inside, out.z_soft_ok, out.runtime);
    all_ok = all_ok && ok;
  };
  check_one("primal-dual", PrimalDualController{2.0, 2.0}, 0.01);
  check_one("inversion", InversionController{2.0}, 0.01);
  check_one("two-loop", two_loop_gains(fix.fs, fix.cg, Matrix::Identity(fix.fs.q, fix.fs.q),
                                       std::nullopt, 5.0, 1.0),
            0.01);
  const SynthesisResult synth = synthesize_servo(fix);
  REQUIRE(synth.feasible);
  StaticGainController sg;
  sg.K = synth.K;
  sg.tau = 0.5;
  check_one("synthesized", sg, 0.005);
  report(1, "servo tracking, constraints, and runtime for all four stabilizers", all_ok);
}

TEST_CASE("criterion 2: two-loop gain algebra over 100 seeded instances") {
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = true;
  int checked = 0;
  for (std::uint64_t seed = 1; checked < 100; ++seed) {
    Rng shape_rng(seed + 777);
    const int m = 2 + static_cast<int>(shape_rng.uniform(0, 4));
    const int r = 1 + static_cast<int>(shape_rng.uniform(0, 4));
    const int nc = 1 + static_cast<int>(shape_rng.uniform(0, m - 1));
    const auto inst = oss::testing::random_instance(seed, m, r, nc, 1);
    const ConstraintGains cg = constraint_gains(inst.problem, inst.gains);
    if (rank(cg.N) < nc) continue;
    ++checked;
    const FeasibleSubspace fs = build_subspace(inst.gains, inst.problem);
    Rng prng(seed + 5);
    const Matrix ps = prng.gaussian_matrix(fs.q, fs.q);
    const Matrix P = ps.transpose() * ps / fs.q + Matrix::Identity(fs.q, fs.q);
    const TwoLoopController c = two_loop_gains(fs, cg, P);
    const double scale = std::max(1.0, fs.Tu.cwiseAbs().maxCoeff());
    ok = ok && (cg.N * fs.Tu).norm() <= 1e-10 * scale;
    ok = ok && (c.Pi_c * c.Pi_c - c.Pi_c).cwiseAbs().maxCoeff() <= 1e-10;
    ok = ok && (c.Pi_c * c.K1 - fs.Tu * c.P).cwiseAbs().maxCoeff() <= 1e-10;
    ok = ok && is_hurwitz(-(cg.N * c.K2));
    ok = ok && rank(c.K1) == fs.q;
  }
  const double runtime = seconds_since(t0);
  report(2, "two-loop algebra residuals below 1e-10 within 5 s",
         ok && checked == 100 && runtime <= 5.0);
}

TEST_CASE("criterion 3: structural rank facts over 100 seeded instances") {
  bool ok = true;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    Rng shape_rng(seed + 5123);
    const bool tall = shape_rng.uniform() < 0.5;
    const int m = 2 + static_cast<int>(shape_rng.uniform(0, 3));
    const int r = tall ? m + static_cast<int>(shape_rng.uniform(0, 3))
                       : 1 + static_cast<int>(shape_rng.uniform(0, m - 1));
    const int nc = tall ? static_cast<int>(shape_rng.uniform(0, 2)) : 0;
    const auto inst = oss::testing::random_instance(seed, m, r, nc, 1);
    const FeasibleSubspace fs = build_subspace(inst.gains, inst.problem);
    const Lemma1Report rep = lemma1_report(fs, inst.gains);
    ok = ok && rep.tu_full_column_rank;
    ok = ok && (rep.tz_full_column_rank == rep.range_tu_in_range_gut);
    if (rep.gu_full_row_rank && rep.item_iv_candidate_exists) {
      ok = ok && rep.item_iv_defining_residual <= 1e-10;
    }
  }
  report(3, "Tu rank, rank/range agreement, and constructive candidates", ok);
}

TEST_CASE("criterion 4: gradient-inverse contract") {
  bool ok = true;
  auto check_function = [&](const ConvexFunction& c, std::uint64_t seed) {
    Rng rng(seed);
    for (int k = 0; k < 100; ++k) {
      Vector xi = rng.gaussian_vector(c.dim());
      const double target = rng.uniform(0, 100);
      if (xi.norm() > 0) xi *= target / xi.norm();
      const Vector u = grad_inverse(c, xi);
      ok = ok && (gradient(c, u) - xi).norm() <= 1e-8;
    }
  };
  check_function(oss::testing::academic_f0(), 41);
  for (std::uint64_t seed : {42ull, 43ull, 44ull}) {
    Rng rng(seed);
    const int dim = 3 + static_cast<int>(rng.uniform(0, 4));
    const Matrix a = rng.gaussian_matrix(dim, dim);
    const Matrix Q = a.transpose() * a / dim + Matrix::Identity(dim, dim);
    check_function(ConvexFunction::quadratic(Q, rng.gaussian_vector(dim)), seed + 100);
  }
  report(4, "grad f0 o (grad f0)^-1 = id to 1e-8 over 100 targets per objective", ok);
}

TEST_CASE("criterion 5: oracle equivalence") {
  bool ok = true;
  // Twenty random 2-D problems against a dense grid search.
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed * 7 + 1);
    DcGains gains;
    gains.Gu = rng.gaussian_matrix(2, 2);
    gains.Gw = rng.gaussian_matrix(2, 1);
    const ConvexFunction f0 = oss::testing::academic_f0(2, 0.01, 1.0);
    const ConvexFunction g0 =
        ConvexFunction::quadratic(Matrix::Identity(2, 2), rng.gaussian_vector(2));
    const OssProblem prob = make_oss_problem(f0, g0, Matrix::Zero(0, 2),
                                             Matrix::Zero(0, 2), Matrix::Zero(0, 1));
    const Vector w = Vector::Constant(1, rng.uniform(-1, 1));
    const KktPoint point = solve_reference(prob, gains, w);
    double best = std::numeric_limits<double>::infinity();
    Vector best_u(2);
    const double step = 1e-3;
    for (double u0 = -1 + step; u0 < 1; u0 += step) {
      for (double u1 = -1 + step; u1 < 1; u1 += step) {
        Vector u(2);
        u << u0, u1;
        const double v = prob.f0.value(u) + prob.g0.value(gains.Gu * u + gains.Gw * w);
        if (v < best) {
          best = v;
          best_u = u;
        }
      }
    }
    ok = ok && (point.u_star - best_u).norm() <= 2e-3;
  }

  // Frequency quadratic case against the equal-marginal-cost closed form.
  std::vector<ConvexFunction> costs;
  for (int i = 0; i < 4; ++i) costs.push_back(quadratic_bus_cost(1.0 + i));
  const FrequencyModel model = make_frequency_model(1.0, 4, ring_edges(4), costs);
  const FrequencyParts parts = build_frequency_problem(model);
  const KktPoint point = solve_reference(parts.problem, parts.gains, Vector::Ones(1));
  double denom = 0;
  for (int i = 0; i < 4; ++i) denom += 1.0 / (1.0 + i);
  for (int i = 0; i < 4; ++i) {
    ok = ok && std::abs(point.u_star[i] - (1.0 / (1.0 + i)) / denom) <= 1e-8;
  }
  report(5, "reference solver matches grid search (2e-3) and closed form (1e-8)", ok);
}

TEST_CASE("criterion 6: synthesis certificate and solver unit values") {
  bool ok = true;
  // min x s.t. [[x, 1], [1, x]] >= 0.
  {
    SdpProblem p;
    p.num_vars = 1;
    p.c = Vector::Ones(1);
    p.blocks.push_back(lmi_block_from_affine(1, [](const Vector& x) -> Matrix {
      Matrix f(2, 2);
      f << x[0], 1, 1, x[0];
      return f;
    }));
    const SdpSolution sol = solve_sdp(p);
    ok = ok && sol.status == SdpStatus::optimal && std::abs(sol.x[0] - 1.0) <= 1e-6;
  }
  // min tr P s.t. A'P + PA <= -I, P >= 0, A = -I (n = 2): objective n/2.
  {
    SdpProblem p;
    p.num_vars = 3;
    p.c = (Vector(3) << 1, 0, 1).finished();
    auto unpack = [](const Vector& x) -> Matrix {
      Matrix P(2, 2);
      P << x[0], x[1], x[1], x[2];
      return P;
    };
    p.blocks.push_back(lmi_block_from_affine(3, [&](const Vector& x) -> Matrix {
      return 2.0 * unpack(x) - Matrix::Identity(2, 2);
    }));
    p.blocks.push_back(lmi_block_from_affine(3, [&](const Vector& x) -> Matrix {
      return unpack(x);
    }));
    const SdpSolution sol = solve_sdp(p);
    ok = ok && sol.status == SdpStatus::optimal && std::abs(sol.objective - 1.0) <= 1e-6;
  }
  // Servo synthesis at rho = 100: feasible, certified, and convergent.
  const ServoFixture fix;
  const SynthesisResult synth = synthesize_servo(fix);
  ok = ok && synth.feasible && synth.certificate_margin < -1e-8;
  if (synth.feasible) {
    StaticGainController c;
    c.K = synth.K;
    c.tau = 0.5;
    const ServoOutcome out = run_servo(fix, c, 0.005);
    ok = ok && out.converged && out.u_strictly_inside;
  }
  report(6, "dual LMI feasible at rho=100, primal certificate < -1e-8, loop converges",
         ok);
}

TEST_CASE("criterion 7: frequency case with all three specialized controllers") {
  std::vector<ConvexFunction> costs;
  for (int i = 0; i < 4; ++i) costs.push_back(quadratic_bus_cost(1.0 + i));
  const FrequencyModel model = make_frequency_model(1.0, 4, ring_edges(4), costs);
  FrequencyParts parts = build_frequency_problem(model);
  DisturbanceSchedule sched;
  sched.steps = {{0.0, Vector::Zero(1)}, {5.0, Vector::Ones(1)}};

  bool ok = true;
  auto run_freq = [&](Controller c) {
    const Scenario s = make_scenario(parts.plant, parts.problem, std::move(c), sched,
                                     80.0, 0.01, parts.subspace);
    const Trace trace = run(s);
    ok = ok && !trace.diverged;
    if (trace.diverged) return;
    ok = ok && std::abs(trace.z.back()[3]) <= 1e-4;
    ok = ok && std::abs(power_balance_error(model, trace.u.back(), 1.0)) <= 1e-4;
    ok = ok && marginal_cost_spread(model, trace.u.back()) <= 1e-3;
  };
  run_freq(PrimalDualController{2.0, 2.0});
  run_freq(InversionController{2.0});
  const TwoLoopController dist = distributed_controller(model, 5.0, 1.0);
  run_freq(dist);

  // Closed-form gains, matched exactly.
  Matrix k2 = Matrix::Zero(4, 1);
  k2(3, 0) = 1.0;
  Matrix pic = Matrix::Identity(4, 4);
  pic.row(3) -= Matrix::Ones(1, 4);
  Matrix k1 = Matrix::Zero(4, 3);
  k1.topRows(3) = Matrix::Identity(3, 3);
  ok = ok && dist.K2 == k2 && dist.Pi_c == pic && dist.K1 == k1;
  report(7, "frequency regulation, power balance, marginal-cost consensus, exact gains",
         ok);
}

TEST_CASE("criterion 8: time-constant sweeps") {
  const ServoFixture fix;
  bool ok = true;

  const auto t0 = std::chrono::steady_clock::now();
  const Scenario pd = fix.scenario(PrimalDualController{2.0, 2.0});
  const std::vector<double> grid = {0.05, 0.15, 0.5, 1.5, 5.0, 15.0, 50.0};
  const auto rows = tau_sweep(pd, grid);
  const double pd_time = seconds_since(t0);
  // Up-set structure: once successful, successful for every larger tau.
  bool seen_success = false;
  int first_success = -1;
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].success && !seen_success) {
      seen_success = true;
      first_success = static_cast<int>(i);
    }
    if (seen_success) ok = ok && rows[i].success;
  }
  ok = ok && seen_success && pd_time <= 120.0;
  if (seen_success) {
    std::printf("  primal-dual stability threshold (empirical): tau >= %g\n",
                rows[first_success].tau);
  }

  const auto t1 = std::chrono::steady_clock::now();
  const Scenario two = fix.scenario(two_loop_gains(
      fix.fs, fix.cg, Matrix::Identity(fix.fs.q, fix.fs.q), std::nullopt, 5.0, 1.0));
  const std::vector<double> scale_grid = {0.2, 0.6, 2.0, 6.0};
  const auto two_rows = tau_sweep(two, scale_grid);
  const double two_time = seconds_since(t1);
  // Ratio tau1/tau2 = 5 is preserved; sufficiently large scales succeed.
  ok = ok && two_rows.back().success && two_time <= 120.0;
  std::printf("  two-loop (ratio 5) success at scale: ");
  for (const auto& row : two_rows) std::printf("%g:%s ", row.tau, row.success ? "y" : "n");
  std::printf("\n");
  report(8, "primal-dual success set is an up-set; scaled two-loop succeeds", ok);
}

TEST_CASE("criterion 9: bit-identical reruns of the bundled scenarios") {
  namespace fs = std::filesystem;
  bool ok = true;
  CliOverrides ov;
  ov.quiet = true;
  for (const char* name :
       {"quadratic_smoke.scenario", "frequency.scenario", "academic.scenario"}) {
    const auto dir_a = fs::temp_directory_path() / "oss_acc_a";
    const auto dir_b = fs::temp_directory_path() / "oss_acc_b";
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
    ok = ok && cmd_run(kScenarioDir + "/" + name, dir_a.string(), ov) == 0;
    ok = ok && cmd_run(kScenarioDir + "/" + name, dir_b.string(), ov) == 0;
    for (const auto& entry : fs::directory_iterator(dir_a)) {
      std::ifstream fa(entry.path()), fb(dir_b / entry.path().filename());
      std::string sa((std::istreambuf_iterator<char>(fa)),
                     std::istreambuf_iterator<char>());
      std::string sb((std::istreambuf_iterator<char>(fb)),
                     std::istreambuf_iterator<char>());
      ok = ok && !sa.empty() && sa == sb;
    }
  }
  report(9, "re-running every bundled scenario reproduces identical bytes", ok);
}
