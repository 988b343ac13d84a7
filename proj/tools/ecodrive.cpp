// Command-line front end: ecodrive <command> [--scenario FILE] [--out DIR] ...

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ecodrive/commands.hpp"

int main(int argc, char** argv) {
  using ecodrive::ExitCode;
  CLI::App app{"Minimum-fuel speed profiles: grid HJB solver, optimality checks and receding-horizon control"};
  ecodrive::CommandOptions options;
  std::string scenario;
  std::string grid;
  std::string trajectory;
  double update_interval = 0.0;
  std::uint64_t seed = 0;
  std::size_t stages = 0;

  app.add_option("command", options.command, "solve | baseline | verify | simulate | compare | oracle")
      ->required()
      ->check(CLI::IsMember(ecodrive::kCommands));
  auto* scenario_opt = app.add_option("--scenario", scenario, "scenario JSON file (defaults when omitted)");
  app.add_option("--out", options.out_dir, "output directory")->capture_default_str();
  auto* grid_opt = app.add_option("--grid", grid, "grid resolution NX,NV,NT");
  auto* interval_opt = app.add_option("--update-interval", update_interval, "re-planning interval, s");
  auto* seed_opt = app.add_option("--seed", seed, "measurement-noise seed");
  auto* stages_opt = app.add_option("--stages", stages, "oracle stage count");
  auto* trajectory_opt = app.add_option("--trajectory", trajectory, "trajectory CSV to verify");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::argument);
  }

  if (*scenario_opt) options.scenario_path = scenario;
  if (*grid_opt) {
    options.grid = ecodrive::parse_grid_flag(grid);
    if (!options.grid) {
      std::cerr << "error: --grid expects NX,NV,NT with every value >= 3; got '" << grid << "'\n";
      return static_cast<int>(ExitCode::argument);
    }
  }
  if (*interval_opt) options.update_interval = update_interval;
  if (*seed_opt) options.seed = seed;
  if (*stages_opt) options.stages = stages;
  if (*trajectory_opt) options.trajectory_path = trajectory;
  return static_cast<int>(ecodrive::run_command(options, std::cout, std::cerr));
}
