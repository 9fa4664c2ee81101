#include "oss/cli.hpp"

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

namespace oss {

using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

[[noreturn]] void schema_fail(const std::string& path, const std::string& what) {
  throw SchemaError(what, path);
}

void check_keys(const json& j, const std::string& path,
                const std::set<std::string>& allowed) {
  if (!j.is_object()) schema_fail(path, "expected an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) schema_fail(path + "." + key, "unknown key");
  }
}

const json& require_key(const json& j, const std::string& path, const std::string& key) {
  if (!j.contains(key)) schema_fail(path + "." + key, "missing required key");
  return j.at(key);
}

double as_number(const json& j, const std::string& path) {
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "inf") return kInf;
    if (s == "-inf") return -kInf;
  }
  if (!j.is_number()) schema_fail(path, "expected a number");
  return j.get<double>();
}

double number_or(const json& j, const std::string& path, const std::string& key,
                 double fallback) {
  if (!j.contains(key)) return fallback;
  return as_number(j.at(key), path + "." + key);
}

Vector as_vector(const json& j, const std::string& path) {
  if (!j.is_array()) schema_fail(path, "expected an array of numbers");
  Vector v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v[i] = as_number(j[i], path + "[" + std::to_string(i) + "]");
  return v;
}

Matrix as_matrix(const json& j, const std::string& path) {
  if (!j.is_array()) schema_fail(path, "expected an array of rows");
  const size_t rows = j.size();
  if (rows == 0) return Matrix(0, 0);
  size_t cols = 0;
  for (size_t i = 0; i < rows; ++i) {
    if (!j[i].is_array()) schema_fail(path, "expected nested arrays");
    if (i == 0) {
      cols = j[i].size();
    } else if (j[i].size() != cols) {
      schema_fail(path, "ragged matrix rows");
    }
  }
  Matrix m(rows, cols);
  for (size_t i = 0; i < rows; ++i) {
    for (size_t k = 0; k < cols; ++k) {
      m(i, k) = as_number(j[i][k], path + "[" + std::to_string(i) + "]");
    }
  }
  return m;
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

Matrix quadratic_from_json(const json& j, const std::string& path, int dim) {
  if (j.is_object()) {
    check_keys(j, path, {"diag"});
    const Vector d = as_vector(require_key(j, path, "diag"), path + ".diag");
    if (d.size() != dim) schema_fail(path + ".diag", "wrong length");
    return Matrix(d.asDiagonal());
  }
  const Matrix m = as_matrix(j, path);
  if (m.rows() != dim || m.cols() != dim) schema_fail(path, "quadratic must be dim x dim");
  return m;
}

ConvexFunction convex_from_json(const json& j, const std::string& path) {
  check_keys(j, path, {"dim", "quadratic", "linear", "residual", "sector"});
  const int dim = static_cast<int>(as_number(require_key(j, path, "dim"), path + ".dim"));
  if (dim < 0) schema_fail(path + ".dim", "dim must be nonnegative");
  Matrix Q = Matrix::Zero(dim, dim);
  if (j.contains("quadratic")) Q = quadratic_from_json(j.at("quadratic"), path + ".quadratic", dim);
  Vector linear = Vector::Zero(dim);
  if (j.contains("linear")) {
    linear = as_vector(j.at("linear"), path + ".linear");
    if (linear.size() != dim) schema_fail(path + ".linear", "wrong length");
  }

  std::string kind = "none";
  json residual = json::object();
  if (j.contains("residual")) {
    residual = j.at("residual");
    kind = require_key(residual, path + ".residual", "kind").get<std::string>();
  }

  std::optional<Sector> declared;
  if (j.contains("sector")) {
    const json& sj = j.at("sector");
    check_keys(sj, path + ".sector", {"m", "L"});
    Sector s;
    s.m = number_or(sj, path + ".sector", "m", 0.0);
    s.L = number_or(sj, path + ".sector", "L", kInf);
    declared = s;
  }

  if (kind == "none") {
    check_keys(residual, path + ".residual", {"kind"});
    return ConvexFunction::quadratic(Q, linear);
  }
  if (kind == "log_barrier") {
    check_keys(residual, path + ".residual", {"kind", "lo", "hi", "weight"});
    const Vector lo = as_vector(require_key(residual, path + ".residual", "lo"),
                                path + ".residual.lo");
    const Vector hi = as_vector(require_key(residual, path + ".residual", "hi"),
                                path + ".residual.hi");
    if (lo.size() != dim || hi.size() != dim) {
      schema_fail(path + ".residual", "lo/hi must have length dim");
    }
    const json& wj = require_key(residual, path + ".residual", "weight");
    Vector weights;
    if (wj.is_number()) {
      weights = Vector::Constant(dim, wj.get<double>());
    } else {
      weights = as_vector(wj, path + ".residual.weight");
      if (weights.size() != dim) schema_fail(path + ".residual.weight", "wrong length");
    }
    const Sector s = declared ? *declared : log_barrier_sector(lo, hi, weights);
    return ConvexFunction::with_log_barrier(Q, linear, lo, hi, weights, s);
  }
  if (kind == "softmax_penalty") {
    check_keys(residual, path + ".residual", {"kind", "lo", "hi", "weight"});
    const Vector lo = as_vector(require_key(residual, path + ".residual", "lo"),
                                path + ".residual.lo");
    const Vector hi = as_vector(require_key(residual, path + ".residual", "hi"),
                                path + ".residual.hi");
    if (lo.size() != dim || hi.size() != dim) {
      schema_fail(path + ".residual", "lo/hi must have length dim");
    }
    const double weight = as_number(require_key(residual, path + ".residual", "weight"),
                                    path + ".residual.weight");
    const Sector s = declared ? *declared : softmax_penalty_sector(weight);
    return ConvexFunction::with_softmax_penalty(Q, linear, lo, hi, weight, s);
  }
  schema_fail(path + ".residual.kind", "unknown residual kind '" + kind + "'");
}

struct PlantParse {
  Plant plant;
  json resolved;  // explicit representation for hashing
  std::optional<FrequencyModel> freq;
};

PlantParse plant_from_json(const json& j, const std::string& path, const CliOverrides& ov) {
  const std::string kind = require_key(j, path, "kind").get<std::string>();
  PlantParse out;
  if (kind == "explicit") {
    check_keys(j, path, {"kind", "A", "B", "Bw", "C", "D", "Dw"});
    const Matrix A = as_matrix(require_key(j, path, "A"), path + ".A");
    const Matrix B = as_matrix(require_key(j, path, "B"), path + ".B");
    const int n = static_cast<int>(A.rows());
    Matrix Bw = j.contains("Bw") ? as_matrix(j.at("Bw"), path + ".Bw") : Matrix::Zero(n, 0);
    const Matrix C = as_matrix(require_key(j, path, "C"), path + ".C");
    const int r = static_cast<int>(C.rows());
    Matrix D = j.contains("D") ? as_matrix(j.at("D"), path + ".D")
                               : Matrix::Zero(r, B.cols());
    Matrix Dw = j.contains("Dw") ? as_matrix(j.at("Dw"), path + ".Dw")
                                 : Matrix::Zero(r, Bw.cols());
    out.plant = make_plant(A, B, Bw, C, D, Dw);
  } else if (kind == "generated") {
    check_keys(j, path,
               {"kind", "seed", "n", "m", "r", "nw", "stability_margin",
                "require_gu_full_column_rank", "gu_min_singular_value",
                "gu_authority_rows", "c_row_scales", "zero_disturbance_channels"});
    const auto seed = ov.seed ? *ov.seed
                              : static_cast<std::uint64_t>(
                                    as_number(require_key(j, path, "seed"), path + ".seed"));
    const int n = static_cast<int>(as_number(require_key(j, path, "n"), path + ".n"));
    const int m = static_cast<int>(as_number(require_key(j, path, "m"), path + ".m"));
    const int r = static_cast<int>(as_number(require_key(j, path, "r"), path + ".r"));
    const int nw = static_cast<int>(as_number(require_key(j, path, "nw"), path + ".nw"));
    PlantGenOptions options;
    options.stability_margin = number_or(j, path, "stability_margin", 0.2);
    options.gu_min_singular_value = number_or(j, path, "gu_min_singular_value", 0.0);
    options.gu_authority_rows =
        static_cast<int>(number_or(j, path, "gu_authority_rows", 0));
    if (j.contains("c_row_scales")) {
      options.c_row_scales = as_vector(j.at("c_row_scales"), path + ".c_row_scales");
    }
    if (j.contains("require_gu_full_column_rank")) {
      options.require_gu_full_column_rank = j.at("require_gu_full_column_rank").get<bool>();
    }
    if (j.contains("zero_disturbance_channels")) {
      options.zero_disturbance_channels = j.at("zero_disturbance_channels").get<bool>();
    }
    out.plant = generate_stable_plant(seed, n, m, r, nw, options);
  } else if (kind == "frequency") {
    check_keys(j, path, {"kind", "beta", "m", "edges", "costs", "filter_time_constant"});
    const double beta = as_number(require_key(j, path, "beta"), path + ".beta");
    const int m = static_cast<int>(as_number(require_key(j, path, "m"), path + ".m"));
    std::vector<WeightedEdge> edges;
    if (j.contains("edges")) {
      for (size_t i = 0; i < j.at("edges").size(); ++i) {
        const json& e = j.at("edges")[i];
        const std::string epath = path + ".edges[" + std::to_string(i) + "]";
        if (!e.is_array() || e.size() != 3) schema_fail(epath, "edge must be [a, b, weight]");
        edges.push_back({static_cast<int>(as_number(e[0], epath)),
                         static_cast<int>(as_number(e[1], epath)),
                         as_number(e[2], epath)});
      }
    } else {
      edges = ring_edges(m);
    }
    std::vector<ConvexFunction> costs;
    const json& cj = require_key(j, path, "costs");
    if (!cj.is_array() || static_cast<int>(cj.size()) != m) {
      schema_fail(path + ".costs", "need one cost per bus");
    }
    for (size_t i = 0; i < cj.size(); ++i) {
      const std::string cpath = path + ".costs[" + std::to_string(i) + "]";
      check_keys(cj[i], cpath, {"a", "box", "barrier_weight"});
      const double a = as_number(require_key(cj[i], cpath, "a"), cpath + ".a");
      if (cj[i].contains("box")) {
        const Vector box = as_vector(cj[i].at("box"), cpath + ".box");
        if (box.size() != 2) schema_fail(cpath + ".box", "box must be [lo, hi]");
        const double weight = number_or(cj[i], cpath, "barrier_weight", 0.01);
        const Vector lo = Vector::Constant(1, box[0]);
        const Vector hi = Vector::Constant(1, box[1]);
        const Vector wv = Vector::Constant(1, weight);
        costs.push_back(ConvexFunction::with_log_barrier(
            Matrix::Constant(1, 1, a), Vector::Zero(1), lo, hi, wv,
            log_barrier_sector(lo, hi, wv)));
      } else {
        costs.push_back(quadratic_bus_cost(a));
      }
    }
    const double tf = number_or(j, path, "filter_time_constant", 0.1);
    out.freq = make_frequency_model(beta, m, std::move(edges), std::move(costs), tf);
    out.plant = realize_frequency_plant(*out.freq);
  } else {
    schema_fail(path + ".kind", "unknown plant kind '" + kind + "'");
  }

  out.resolved = json{{"kind", "explicit"},
                      {"A", matrix_to_json(out.plant.A)},
                      {"B", matrix_to_json(out.plant.B)},
                      {"Bw", matrix_to_json(out.plant.Bw)},
                      {"C", matrix_to_json(out.plant.C)},
                      {"D", matrix_to_json(out.plant.D)},
                      {"Dw", matrix_to_json(out.plant.Dw)}};
  return out;
}

Controller controller_from_json(const json& j, const std::string& path,
                                const OssProblem& prob, const ConstraintGains& cg,
                                const std::optional<FeasibleSubspace>& fs,
                                const std::optional<FrequencyModel>& freq,
                                json* resolved) {
  const std::string kind = require_key(j, path, "kind").get<std::string>();
  *resolved = j;
  if (kind == "primal_dual") {
    check_keys(j, path, {"kind", "tau_p", "tau_d"});
    PrimalDualController c;
    c.tau_p = as_number(require_key(j, path, "tau_p"), path + ".tau_p");
    c.tau_d = as_number(require_key(j, path, "tau_d"), path + ".tau_d");
    return c;
  }
  if (kind == "inversion") {
    check_keys(j, path, {"kind", "tau"});
    InversionController c;
    c.tau = as_number(require_key(j, path, "tau"), path + ".tau");
    return c;
  }
  if (kind == "two_loop") {
    check_keys(j, path, {"kind", "tau1", "tau2", "P", "K2"});
    if (!fs) schema_fail(path, "two_loop controller needs a feasible subspace");
    const double tau1 = as_number(require_key(j, path, "tau1"), path + ".tau1");
    const double tau2 = as_number(require_key(j, path, "tau2"), path + ".tau2");
    Matrix P = Matrix::Identity(fs->q, fs->q);
    if (j.contains("P")) P = as_matrix(j.at("P"), path + ".P");
    std::optional<Matrix> K2;
    if (j.contains("K2")) K2 = as_matrix(j.at("K2"), path + ".K2");
    TwoLoopController c = two_loop_gains(*fs, cg, P, K2, tau1, tau2);
    (*resolved)["P"] = matrix_to_json(c.P);
    (*resolved)["K2"] = matrix_to_json(c.K2);
    return c;
  }
  if (kind == "two_loop_distributed") {
    check_keys(j, path, {"kind", "tau1", "tau2"});
    if (!freq) schema_fail(path, "two_loop_distributed requires a frequency plant");
    const double tau1 = as_number(require_key(j, path, "tau1"), path + ".tau1");
    const double tau2 = as_number(require_key(j, path, "tau2"), path + ".tau2");
    return distributed_controller(*freq, tau1, tau2);
  }
  if (kind == "synthesized" || kind == "static_gain") {
    Matrix K;
    double tau = 1.0;
    if (kind == "synthesized") {
      check_keys(j, path, {"kind", "tau", "gains_file"});
      tau = as_number(require_key(j, path, "tau"), path + ".tau");
      const std::string file =
          require_key(j, path, "gains_file").get<std::string>();
      std::ifstream in(file);
      if (!in) schema_fail(path + ".gains_file", "cannot open gains file '" + file + "'");
      json gj;
      try {
        in >> gj;
      } catch (const json::parse_error& e) {
        schema_fail(path + ".gains_file", std::string("gains file parse error: ") + e.what());
      }
      K = as_matrix(require_key(gj, "gains", "K"), "gains.K");
    } else {
      check_keys(j, path, {"kind", "tau", "K"});
      tau = as_number(require_key(j, path, "tau"), path + ".tau");
      K = as_matrix(require_key(j, path, "K"), path + ".K");
    }
    if (!fs) schema_fail(path, "static gain controller needs a feasible subspace");
    if (K.rows() != prob.m || K.cols() != fs->q + prob.nc) {
      schema_fail(path, "gain K must be m x (q + nc)");
    }
    StaticGainController c;
    c.K = K;
    c.tau = tau;
    (*resolved) = json{{"kind", "static_gain"}, {"tau", tau}, {"K", matrix_to_json(K)}};
    return c;
  }
  schema_fail(path + ".kind", "unknown controller kind '" + kind + "'");
}

}  // namespace

std::string content_digest(const json& doc) {
  const std::string dump = doc.dump();
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : dump) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return std::string(buf);
}

ResolvedScenario resolve_scenario_json(const json& doc, const CliOverrides& ov) {
  check_keys(doc, "$",
             {"plant", "problem", "subspace", "controller", "simulation", "synthesis",
              "tolerances", "outputs"});

  PlantParse plant = plant_from_json(require_key(doc, "$", "plant"), "$.plant", ov);

  OssProblem problem;
  if (plant.freq) {
    if (doc.contains("problem")) {
      schema_fail("$.problem", "frequency scenarios define their own problem");
    }
    FrequencyParts parts = build_frequency_problem(*plant.freq);
    problem = std::move(parts.problem);
  } else {
    const json& pj = require_key(doc, "$", "problem");
    check_keys(pj, "$.problem", {"f0", "g0", "constraints", "disturbance_box"});
    ConvexFunction f0 = convex_from_json(require_key(pj, "$.problem", "f0"), "$.problem.f0");
    ConvexFunction g0 = convex_from_json(require_key(pj, "$.problem", "g0"), "$.problem.g0");
    Matrix Hz(0, f0.dim()), Hu(0, f0.dim()), Hw(0, 0);
    if (pj.contains("constraints")) {
      const json& cj = pj.at("constraints");
      check_keys(cj, "$.problem.constraints", {"Hz", "Hu", "Hw"});
      Hz = as_matrix(require_key(cj, "$.problem.constraints", "Hz"),
                     "$.problem.constraints.Hz");
      Hu = as_matrix(require_key(cj, "$.problem.constraints", "Hu"),
                     "$.problem.constraints.Hu");
      Hw = as_matrix(require_key(cj, "$.problem.constraints", "Hw"),
                     "$.problem.constraints.Hw");
    } else {
      Hz = Matrix::Zero(0, g0.dim());
      Hu = Matrix::Zero(0, f0.dim());
      Hw = Matrix::Zero(0, plant.plant.nw);
    }
    std::optional<BoxBounds> wbox;
    if (pj.contains("disturbance_box")) {
      const json& bj = pj.at("disturbance_box");
      check_keys(bj, "$.problem.disturbance_box", {"lo", "hi"});
      wbox = BoxBounds{as_vector(require_key(bj, "$.problem.disturbance_box", "lo"),
                                 "$.problem.disturbance_box.lo"),
                       as_vector(require_key(bj, "$.problem.disturbance_box", "hi"),
                                 "$.problem.disturbance_box.hi")};
    }
    problem = make_oss_problem(std::move(f0), std::move(g0), Hz, Hu, Hw, std::move(wbox));
  }

  const DcGains gains = dc_gains(plant.plant);

  // Subspace: canonical SVD basis unless the scenario asks for the
  // Laplacian basis of the frequency construction.
  std::string basis = plant.freq ? "laplacian" : "canonical";
  if (doc.contains("subspace")) {
    const json& sj = doc.at("subspace");
    check_keys(sj, "$.subspace", {"basis", "Tz", "Tu"});
    basis = require_key(sj, "$.subspace", "basis").get<std::string>();
  }
  std::optional<FeasibleSubspace> fs;
  if (basis == "canonical") {
    try {
      fs = build_subspace(gains, problem);
    } catch (const InfeasibleError&) {
      fs = std::nullopt;  // fully determined program; only mu-based designs apply
    }
  } else if (basis == "laplacian") {
    if (!plant.freq) schema_fail("$.subspace.basis", "laplacian basis needs a frequency plant");
    FrequencyParts parts = build_frequency_problem(*plant.freq);
    fs = std::move(parts.subspace);
  } else if (basis == "custom") {
    const json& sj = doc.at("subspace");
    const Matrix Tz = as_matrix(require_key(sj, "$.subspace", "Tz"), "$.subspace.Tz");
    const Matrix Tu = as_matrix(require_key(sj, "$.subspace", "Tu"), "$.subspace.Tu");
    fs = make_subspace_with_basis(gains, problem, Tz, Tu);
  } else {
    schema_fail("$.subspace.basis", "unknown basis '" + basis + "'");
  }

  const json& sim = require_key(doc, "$", "simulation");
  check_keys(sim, "$.simulation", {"horizon", "dt", "schedule"});
  const double horizon = as_number(require_key(sim, "$.simulation", "horizon"),
                                   "$.simulation.horizon");
  double dt = as_number(require_key(sim, "$.simulation", "dt"), "$.simulation.dt");
  if (ov.dt) dt = *ov.dt;
  DisturbanceSchedule schedule;
  const json& sched = require_key(sim, "$.simulation", "schedule");
  if (!sched.is_array() || sched.empty()) {
    schema_fail("$.simulation.schedule", "expected a non-empty array");
  }
  for (size_t i = 0; i < sched.size(); ++i) {
    const std::string spath = "$.simulation.schedule[" + std::to_string(i) + "]";
    check_keys(sched[i], spath, {"t", "w"});
    schedule.steps.emplace_back(as_number(require_key(sched[i], spath, "t"), spath + ".t"),
                                as_vector(require_key(sched[i], spath, "w"), spath + ".w"));
  }

  SimTolerances tol;
  if (doc.contains("tolerances")) {
    const json& tj = doc.at("tolerances");
    check_keys(tj, "$.tolerances",
               {"final_u", "kkt", "settle_u", "settle_consecutive", "divergence_norm"});
    tol.final_u = number_or(tj, "$.tolerances", "final_u", tol.final_u);
    tol.kkt = number_or(tj, "$.tolerances", "kkt", tol.kkt);
    tol.settle_u = number_or(tj, "$.tolerances", "settle_u", tol.settle_u);
    tol.settle_consecutive = static_cast<int>(
        number_or(tj, "$.tolerances", "settle_consecutive", tol.settle_consecutive));
    tol.divergence_norm =
        number_or(tj, "$.tolerances", "divergence_norm", tol.divergence_norm);
  }

  const ConstraintGains cg = constraint_gains(problem, gains);
  json controller_resolved;
  Controller controller = controller_from_json(require_key(doc, "$", "controller"),
                                               "$.controller", problem, cg, fs,
                                               plant.freq, &controller_resolved);

  ResolvedScenario out;
  out.frequency_model = plant.freq;
  out.scenario = make_scenario(std::move(plant.plant), std::move(problem),
                               std::move(controller), std::move(schedule), horizon, dt,
                               std::move(fs), tol);

  if (doc.contains("synthesis")) {
    const json& yj = doc.at("synthesis");
    check_keys(yj, "$.synthesis", {"rho", "gamma", "required_margin", "decay_alpha"});
    SynthesisDecl decl;
    decl.rho = as_number(require_key(yj, "$.synthesis", "rho"), "$.synthesis.rho");
    if (yj.contains("gamma")) {
      decl.gamma = as_number(yj.at("gamma"), "$.synthesis.gamma");
    }
    decl.required_margin = number_or(yj, "$.synthesis", "required_margin", 1e-6);
    decl.decay_alpha = number_or(yj, "$.synthesis", "decay_alpha", 0.0);
    out.synthesis = decl;
  }

  if (doc.contains("outputs")) {
    const json& oj = doc.at("outputs");
    check_keys(oj, "$.outputs", {"trace_csv", "report"});
    if (oj.contains("trace_csv")) out.trace_csv = oj.at("trace_csv").get<std::string>();
    if (oj.contains("report")) out.report_json = oj.at("report").get<std::string>();
  }
  if (out.trace_csv.empty()) out.trace_csv = "trace.csv";
  if (out.report_json.empty()) out.report_json = "report.json";

  // Canonical resolved document: explicit plant, resolved controller, final
  // dt; its digest identifies the run.
  json resolved = doc;
  resolved["plant"] = plant.resolved;
  resolved["controller"] = controller_resolved;
  resolved["simulation"]["dt"] = dt;
  resolved.erase("outputs");
  out.resolved = resolved;
  out.scenario_hash = content_digest(resolved);
  return out;
}

ResolvedScenario resolve_scenario_file(const std::string& path, const CliOverrides& ov) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open scenario file '" + path + "'", "$");
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("parse error: ") + e.what(), "$");
  }
  return resolve_scenario_json(doc, ov);
}

namespace {

json interval_to_json(const IntervalReport& ir) {
  json out;
  out["start"] = ir.start;
  out["end"] = ir.end;
  if (std::isfinite(ir.settle_time)) {
    out["settle_time"] = ir.settle_time;
  } else {
    out["settle_time"] = nullptr;
  }
  out["eng_violation_max"] = ir.eng_violation_max;
  out["u_box_violation_max"] = ir.u_box_violation_max;
  out["z_box_violation_max"] = ir.z_box_violation_max;
  return out;
}

json report_to_json(const ResolvedScenario& rs, const Trace& trace,
                    const ConvergenceReport& rep) {
  json out;
  out["tool_version"] = kToolVersion;
  out["scenario_hash"] = rs.scenario_hash;
  out["success"] = rep.success;
  out["diverged"] = rep.diverged;
  if (rep.diverged) out["divergence_time"] = trace.divergence_time;
  out["final_stationarity"] = rep.final_stationarity;
  out["final_feasibility"] = rep.final_feasibility;
  out["final_u_error"] = rep.final_u_error;
  json intervals = json::array();
  for (const auto& ir : rep.intervals) intervals.push_back(interval_to_json(ir));
  out["intervals"] = intervals;
  if (rs.frequency_model && !trace.u.empty()) {
    const auto& model = *rs.frequency_model;
    const double w_final = rs.scenario.schedule.steps.back().second[0];
    out["frequency"] = json{
        {"marginal_cost_spread", marginal_cost_spread(model, trace.u.back())},
        {"power_balance_error", power_balance_error(model, trace.u.back(), w_final)},
        {"final_frequency_deviation", trace.z.back()[model.m - 1]}};
  }
  return out;
}

void write_json_file(const json& doc, const std::string& path) {
  std::ofstream outf(path);
  if (!outf) throw Error("cannot open output file: " + path);
  outf << doc.dump(2) << "\n";
}

int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const SchemaError& e) {
    std::cerr << "schema error: " << e.what() << "\n";
    return 2;
  } catch (const InvalidInputError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int cmd_run(const std::string& scenario_path, const std::string& output_dir,
            const CliOverrides& ov) {
  return guarded([&]() -> int {
    const ResolvedScenario rs = resolve_scenario_file(scenario_path, ov);
    std::filesystem::create_directories(output_dir);
    const std::vector<KktPoint> oracles = interval_oracles(rs.scenario);
    const Trace trace = run(rs.scenario);
    const ConvergenceReport rep = evaluate(rs.scenario, trace, oracles);

    const auto trace_path = std::filesystem::path(output_dir) / rs.trace_csv;
    const auto report_path = std::filesystem::path(output_dir) / rs.report_json;
    write_trace_csv(trace, trace_path.string());
    write_json_file(report_to_json(rs, trace, rep), report_path.string());

    if (!ov.quiet) {
      std::printf("scenario %s  hash %s\n", scenario_path.c_str(), rs.scenario_hash.c_str());
      std::printf("final |u - u*| = %.3e  kkt = (%.3e, %.3e)  success = %s\n",
                  rep.final_u_error, rep.final_stationarity, rep.final_feasibility,
                  rep.success ? "yes" : "no");
      if (rep.diverged) std::printf("diverged at t = %.6g\n", trace.divergence_time);
    }
    return rep.success ? 0 : 3;
  });
}

int cmd_synthesize(const std::string& scenario_path, const std::string& gains_path,
                   std::optional<double> gamma_override, const CliOverrides& ov) {
  return guarded([&]() -> int {
    const ResolvedScenario rs = resolve_scenario_file(scenario_path, ov);
    if (!rs.synthesis) {
      throw SchemaError("scenario has no synthesis section", "$.synthesis");
    }
    if (!rs.scenario.fs) {
      throw SchemaError("synthesis needs a nontrivial feasible subspace", "$.subspace");
    }
    const Scenario& s = rs.scenario;
    const LfrSystem lfr = assemble_lfr(*s.fs, s.problem, s.gains, s.cg, rs.synthesis->rho);
    SectorMultiplier th1, th2;
    if (lfr.p1_dim > 0) {
      th1 = sector_matrix(classify_sector(s.problem.f0.sector()), s.problem.f0.sector().m,
                          s.problem.f0.sector().L, lfr.p1_dim);
    }
    if (lfr.p2_dim > 0) {
      th2 = sector_matrix(classify_sector(s.problem.g0.sector()), s.problem.g0.sector().m,
                          s.problem.g0.sector().L, lfr.p2_dim);
    }
    SynthesisOptions options;
    options.required_margin = rs.synthesis->required_margin;
    options.decay_alpha = rs.synthesis->decay_alpha;
    std::optional<double> gamma = gamma_override ? gamma_override : rs.synthesis->gamma;
    if (gamma) {
      options.mode = SynthesisMode::fixed_gamma;
      options.gamma = *gamma;
    } else {
      options.mode = SynthesisMode::minimize_gamma;
    }
    const SynthesisResult result = synthesize(lfr, th1, th2, options);
    if (!result.feasible) {
      if (!ov.quiet) std::printf("synthesis infeasible\n");
      return 4;
    }
    json gj;
    gj["K"] = matrix_to_json(result.K);
    gj["gamma"] = result.gamma;
    gj["certificate_margin"] = result.certificate_margin;
    gj["margin_t"] = result.margin_t;
    gj["theta1"] = result.theta1;
    gj["theta2"] = result.theta2;
    gj["rho"] = rs.synthesis->rho;
    gj["source_scenario_hash"] = rs.scenario_hash;
    write_json_file(gj, gains_path);
    if (!ov.quiet) {
      std::printf("gamma = %.6g  certificate margin = %.3e  -> %s\n", result.gamma,
                  result.certificate_margin, gains_path.c_str());
    }
    return 0;
  });
}

int cmd_sweep(const std::string& scenario_path, const std::string& parameter,
              const std::vector<double>& grid, const std::string& output_csv,
              const CliOverrides& ov) {
  return guarded([&]() -> int {
    if (parameter != "tau") {
      throw SchemaError("unknown sweep parameter '" + parameter + "' (only 'tau')",
                        "$.sweep");
    }
    if (grid.empty()) throw SchemaError("empty sweep grid", "$.sweep");
    const ResolvedScenario rs = resolve_scenario_file(scenario_path, ov);
    const std::vector<SweepRow> rows = tau_sweep(rs.scenario, grid);

    std::FILE* f = std::fopen(output_csv.c_str(), "w");
    if (!f) throw Error("cannot open sweep output: " + output_csv);
    std::fprintf(f, "tau,success,diverged,settle_time\n");
    for (const auto& row : rows) {
      std::fprintf(f, "%.17g,%d,%d,%.17g\n", row.tau, row.success ? 1 : 0,
                   row.diverged ? 1 : 0, row.settle_time);
    }
    std::fclose(f);

    const auto [lo, hi] = largest_contiguous_success(rows);
    if (!ov.quiet) {
      if (lo >= 0) {
        std::printf("success region: tau in [%.6g, %.6g] (%d of %zu grid points)\n",
                    rows[lo].tau, rows[hi].tau, hi - lo + 1, rows.size());
      } else {
        std::printf("no successful grid point\n");
      }
    }
    return 0;
  });
}

int cmd_check(const std::string& scenario_path, const CliOverrides& ov) {
  return guarded([&]() -> int {
    const ResolvedScenario rs = resolve_scenario_file(scenario_path, ov);
    const Scenario& s = rs.scenario;
    const auto spectrum = max_eig_real(s.plant.A);
    std::vector<Vector> w_samples;
    bool schedule_in_box = true;
    for (const auto& [t, w] : s.schedule.steps) {
      w_samples.push_back(w);
      if (s.problem.disturbance_box) {
        for (int i = 0; i < w.size(); ++i) {
          schedule_in_box = schedule_in_box &&
                            w[i] >= s.problem.disturbance_box->lo[i] &&
                            w[i] <= s.problem.disturbance_box->hi[i];
        }
      }
    }
    const DataAssumptionReport data = verify_problem_data(s.problem, s.gains, w_samples);

    if (!ov.quiet) {
      std::printf("plant: n=%d m=%d r=%d nw=%d  max Re(eig A) = %.6g  cond(A) = %.3g\n",
                  s.plant.n, s.plant.m, s.plant.r, s.plant.nw, spectrum.max_real_part,
                  s.gains.cond_A);
      std::printf("rank Gu = %d (m = %d), rank N = %d (nc = %d)\n", rank(s.gains.Gu),
                  s.plant.m, rank(s.cg.N), s.problem.nc);
      std::printf("sector check minima: f0 = %.3e, g0 = %.3e\n", data.f0_sector_min,
                  data.g0_sector_min);
      for (size_t k = 0; k < w_samples.size(); ++k) {
        std::printf("strictly feasible at schedule step %zu: %s\n", k,
                    data.strictly_feasible[k] ? "yes" : "no");
      }
      if (s.problem.disturbance_box) {
        std::printf("schedule inside declared disturbance set: %s\n",
                    schedule_in_box ? "yes" : "no");
      }
      if (s.fs) {
        const Lemma1Report lem = lemma1_report(*s.fs, s.gains);
        std::printf("subspace: q = %d\n", s.fs->q);
        std::printf("lemma 1: (i) Tu full col rank: %s  (ii) Tz full col rank: %s, "
                    "range condition: %s\n",
                    lem.tu_full_column_rank ? "yes" : "no",
                    lem.tz_full_column_rank ? "yes" : "no",
                    lem.range_tu_in_range_gut ? "yes" : "no");
        std::printf("lemma 1: Gu full col rank: %s, full row rank: %s\n",
                    lem.gu_full_column_rank ? "yes" : "no",
                    lem.gu_full_row_rank ? "yes" : "no");
        if (lem.gu_full_row_rank) {
          std::printf("lemma 1 (iv): candidate %s (cols = %d, residual = %.3e)\n",
                      lem.item_iv_candidate_exists ? "exists" : "absent",
                      lem.item_iv_candidate_cols, lem.item_iv_defining_residual);
        }
      } else {
        std::printf("subspace: trivial (no design freedom)\n");
      }
      std::printf("scenario hash: %s\n", rs.scenario_hash.c_str());
    }
    return (data.all_ok && schedule_in_box) ? 0 : 3;
  });
}

}  // namespace oss
