#pragma once

// Scenario files: one JSON document holding the problem, the solver grid, the
// event list and per-command options. Parsing is strict; every key that is
// not part of the schema is rejected with its full path.

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ecodrive/hjb.hpp"
#include "ecodrive/model.hpp"
#include "ecodrive/sequential.hpp"

namespace ecodrive {

struct OracleOptions {
  std::size_t stages = 12;
  std::size_t nx = 801;  // the time axis has stages + 1 levels
  std::size_t nv = 801;

  bool operator==(const OracleOptions&) const = default;
};

struct VerifyOptions {
  double pmp_tolerance = 1e-3;  // relative to the local Hamiltonian scale
  double kkt_tolerance = 1e-2;

  bool operator==(const VerifyOptions&) const = default;
};

struct ScenarioFile {
  ProblemSpec problem;
  GridResolution grid;
  std::vector<ScenarioEvent> events;
  double update_interval = 10.0;  // s
  NoiseOptions noise;
  OracleOptions oracle;
  VerifyOptions verify;
  std::vector<double> value_slice_times{0.0};  // s, solve writes one value CSV per entry

  void validate() const;
  RecedingOptions receding() const { return {update_interval, grid, noise}; }
  bool operator==(const ScenarioFile&) const = default;
};

class ScenarioError : public std::runtime_error {
 public:
  enum class Kind { missing_file, syntax, unknown_key, invalid_value };

  ScenarioError(Kind kind, std::string field, const std::string& message)
      : std::runtime_error(message), kind_(kind), field_(std::move(field)) {}

  Kind kind() const { return kind_; }
  const std::string& field() const { return field_; }

 private:
  Kind kind_;
  std::string field_;
};

ScenarioFile parse_scenario_text(std::string_view text);
ScenarioFile parse_scenario(const std::string& path);

/// Complete document with every default written out; parses back to an equal ScenarioFile.
std::string serialize_scenario(const ScenarioFile& scenario);

}  // namespace ecodrive
