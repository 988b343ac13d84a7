#pragma once

// Command dispatch behind the ecodrive executable. Every command writes its
// CSV files and a report.json into the output directory.

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "ecodrive/hjb.hpp"

namespace ecodrive {

enum class ExitCode : int {
  ok = 0,
  parse = 1,          // malformed scenario or trajectory text
  infeasible = 2,     // no admissible plan (baseline tuning, penalty calibration)
  configuration = 3,  // numerical configuration refused (foot-point bound)
  internal = 4,
  missing_file = 5,
  unknown_key = 6,
  invalid_value = 7,  // scenario value breaks a domain invariant
  argument = 8,       // bad command-line argument
};

inline const std::vector<std::string> kCommands{"solve", "baseline", "verify", "simulate", "compare", "oracle"};

struct GridOverride {
  std::size_t nx = 0;
  std::size_t nv = 0;
  std::size_t nt = 0;
};

struct CommandOptions {
  std::string command;
  std::optional<std::string> scenario_path;  // built-in defaults when absent
  std::string out_dir = ".";
  std::optional<GridOverride> grid;
  std::optional<double> update_interval;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> stages;
  std::optional<std::string> trajectory_path;  // verify
};

/// "NX,NV,NT" with every component an integer >= 3.
std::optional<GridOverride> parse_grid_flag(std::string_view text);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes);

/// Runs one command; messages go to `log`, errors to `err`.
ExitCode run_command(const CommandOptions& options, std::ostream& log, std::ostream& err);

}  // namespace ecodrive
