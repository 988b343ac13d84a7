#pragma once

// Plain-text output shared by the command-line tool: trajectory and value
// CSVs (comma separated, '.' decimals, LF line endings) and number formatting
// that round-trips exactly.

#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ecodrive/hjb.hpp"
#include "ecodrive/model.hpp"
#include "ecodrive/sequential.hpp"

namespace ecodrive {

/// Shortest decimal text that parses back to the same double.
std::string format_number(double value);

inline const std::vector<std::string> kTrajectoryColumns{"t_s", "x_m", "v_mps", "u", "fuel_rate", "cum_fuel",
                                                         "speed_limit_mps", "grade_mps2"};

/// One row per sample. Limit and grade columns come from the environment in
/// force at each sample time; cum_fuel is the trapezoidal running total.
void write_trajectory_csv(std::ostream& out, const Trajectory& traj, const ProblemSpec& initial,
                          const std::vector<ScenarioEvent>& events = {});

class CsvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reads t_s, x_m, v_mps and u by header name; other columns are ignored.
Trajectory read_trajectory_csv(std::istream& in);

/// Value matrix of one stored level: header "x_m\v_mps" followed by the v
/// nodes, then one row per x node.
void write_value_slice_csv(std::ostream& out, const ValueField& field, std::size_t level);

}  // namespace ecodrive
