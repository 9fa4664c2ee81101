#include <CLI11.hpp>

#include "oss/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Optimal steady-state control toolkit"};
  app.require_subcommand(1);

  oss::CliOverrides ov;
  std::optional<std::uint64_t> seed_override;
  std::optional<double> dt_override;
  bool quiet = false;
  app.add_flag("--quiet", quiet, "suppress progress output");

  std::string scenario;
  std::string output_dir = ".";
  auto* run = app.add_subcommand("run", "simulate a scenario and write trace + report");
  run->add_option("scenario", scenario, "scenario file")->required();
  run->add_option("--output", output_dir, "output directory");
  run->add_option("--seed-override", seed_override, "replace the generator seed");
  run->add_option("--dt", dt_override, "replace the integration step");

  std::string gains_path = "gains.json";
  std::optional<double> gamma;
  auto* synth = app.add_subcommand("synthesize", "solve the gain synthesis LMI");
  synth->add_option("scenario", scenario, "scenario file")->required();
  synth->add_option("--output", gains_path, "gains output file");
  synth->add_option("--gamma", gamma, "fix gamma instead of minimizing it");
  synth->add_option("--seed-override", seed_override, "replace the generator seed");

  std::string parameter = "tau";
  std::vector<double> grid;
  std::string sweep_csv = "sweep.csv";
  auto* sweep = app.add_subcommand("sweep", "run a time-constant sweep");
  sweep->add_option("scenario", scenario, "scenario file")->required();
  sweep->add_option("--parameter", parameter, "swept parameter (tau)");
  sweep->add_option("--grid", grid, "grid values, ascending")->required();
  sweep->add_option("--output", sweep_csv, "sweep table output file");
  sweep->add_option("--seed-override", seed_override, "replace the generator seed");
  sweep->add_option("--dt", dt_override, "replace the integration step");

  auto* check = app.add_subcommand("check", "validate a scenario and print rank reports");
  check->add_option("scenario", scenario, "scenario file")->required();
  check->add_option("--seed-override", seed_override, "replace the generator seed");

  CLI11_PARSE(app, argc, argv);
  ov.seed = seed_override;
  ov.dt = dt_override;
  ov.quiet = quiet;

  if (run->parsed()) return oss::cmd_run(scenario, output_dir, ov);
  if (synth->parsed()) return oss::cmd_synthesize(scenario, gains_path, gamma, ov);
  if (sweep->parsed()) return oss::cmd_sweep(scenario, parameter, grid, sweep_csv, ov);
  if (check->parsed()) return oss::cmd_check(scenario, ov);
  return 1;
}
