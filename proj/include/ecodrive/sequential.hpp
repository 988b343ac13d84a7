#pragma once

// Receding-horizon control under a changing environment. At every update
// time the controller freezes the environment it knows about, re-solves the
// remaining horizon on the grid and applies the resulting policy until the
// next update.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "ecodrive/hjb.hpp"
#include "ecodrive/model.hpp"

namespace ecodrive {

enum class EventKind { speed_limit, grade, davis, target_speed };

const char* to_string(EventKind kind);

struct ScenarioEvent {
  double timestamp = 0.0;  // s
  EventKind kind = EventKind::speed_limit;
  std::size_t segment = 0;            // speed_limit / grade: index of the segment
  double value = 0.0;                 // new limit M_j, grade value, or target speed v2
  std::optional<double> segment_end;  // speed_limit: optional new end X_j
  DavisCoefficients davis;            // davis: replacement coefficients

  bool operator==(const ScenarioEvent&) const = default;
};

/// Copy of `env` with the event applied; the result is validated.
ProblemSpec apply_event(const ProblemSpec& env, const ScenarioEvent& ev);

/// `initial` with every event of timestamp <= now applied in order.
ProblemSpec environment_at(const ProblemSpec& initial, const std::vector<ScenarioEvent>& events, double now);

/// Throws ArgumentError unless timestamps are sorted and lie in [0, T].
void validate_events(const std::vector<ScenarioEvent>& events, const ProblemSpec& initial);

struct HamiltonianEstimate {
  ProblemSpec snapshot;
  double begin = 0.0;
  double end = 0.0;
};

/// Freezes `env` over [now, min(now + window, T)].
HamiltonianEstimate estimate_hamiltonian(const ProblemSpec& env, double now, double window);

struct NoiseOptions {
  double position_std = 0.0;  // m
  double speed_std = 0.0;     // m/s
  std::uint64_t seed = 0;

  bool enabled() const { return position_std > 0.0 || speed_std > 0.0; }
  bool operator==(const NoiseOptions&) const = default;
};

struct RecedingOptions {
  double update_interval = 10.0;  // s
  GridResolution resolution;
  NoiseOptions noise;  // perturbs the state the controller observes
};

struct RecedingRun {
  Trajectory trajectory;
  std::vector<HamiltonianEstimate> estimates;
};

/// Axes come from `initial`; each re-solve keeps the time step and covers the
/// remaining horizon. The vehicle always moves in the true environment.
RecedingRun run_receding_horizon(const ProblemSpec& initial, const std::vector<ScenarioEvent>& events,
                                 const RecedingOptions& options = {});

struct ArmSummary {
  double fuel = 0.0;
  double worst_violation = 0.0;  // max(0, v - M(x)) under the limits in force at each sample
  double terminal_miss = 0.0;    // |x - L| / L + |v - v2| / V_max at T
};

struct ComparisonReport {
  ArmSummary apriori;
  ArmSummary sequential;
  Trajectory apriori_trajectory;
  Trajectory sequential_trajectory;
  std::vector<HamiltonianEstimate> estimates;
};

/// Open-loop replay of the t = 0 plan against the true environment versus the
/// receding-horizon controller.
ComparisonReport compare(const ProblemSpec& initial, const std::vector<ScenarioEvent>& events,
                         const RecedingOptions& options = {});

ArmSummary summarize(const Trajectory& traj, const ProblemSpec& initial, const std::vector<ScenarioEvent>& events);

}  // namespace ecodrive
