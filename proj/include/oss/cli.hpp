#pragma once

#include <json.hpp>
#include <optional>
#include <string>

#include "oss/frequency.hpp"
#include "oss/simulate.hpp"
#include "oss/synthesis.hpp"

namespace oss {

inline constexpr const char* kToolVersion = "0.1.0";

/// Command-line overrides applied during scenario resolution.
struct CliOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<double> dt;
  bool quiet = false;
};

/// Synthesis declarations attached to a scenario.
struct SynthesisDecl {
  double rho = 1.0;
  std::optional<double> gamma;  // empty = minimize
  double required_margin = 1e-6;
  double decay_alpha = 0.0;
};

/// A scenario file after validation and plant generation. The resolved
/// document has explicit plant matrices; its digest identifies the run.
struct ResolvedScenario {
  Scenario scenario;
  nlohmann::json resolved;
  std::string scenario_hash;
  std::optional<SynthesisDecl> synthesis;
  std::optional<FrequencyModel> frequency_model;
  std::string trace_csv;  // output file names (may be empty)
  std::string report_json;
};

/// Strict schema validation: unknown keys are rejected with a field path.
ResolvedScenario resolve_scenario_file(const std::string& path, const CliOverrides& ov);
ResolvedScenario resolve_scenario_json(const nlohmann::json& doc, const CliOverrides& ov);

/// FNV-1a 64-bit digest of the canonical dump, as fixed-width hex.
std::string content_digest(const nlohmann::json& doc);

/// Exit codes: 0 success, 2 schema/input error, 3 numeric failure or
/// unsuccessful run, 4 synthesis infeasible, 1 unexpected error.
int cmd_run(const std::string& scenario_path, const std::string& output_dir,
            const CliOverrides& ov);
int cmd_synthesize(const std::string& scenario_path, const std::string& gains_path,
                   std::optional<double> gamma_override, const CliOverrides& ov);
int cmd_sweep(const std::string& scenario_path, const std::string& parameter,
              const std::vector<double>& grid, const std::string& output_csv,
              const CliOverrides& ov);
int cmd_check(const std::string& scenario_path, const CliOverrides& ov);

}  // namespace oss
