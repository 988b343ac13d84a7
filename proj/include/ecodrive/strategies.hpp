#pragma once

// Reference driving strategies: the classical four-phase plan and its tuner,
// coast-power speed holding, and the exhaustive control-sequence oracle.

#include <cstddef>
#include <vector>

#include "ecodrive/model.hpp"

namespace ecodrive {

/// Full power to the hold speed, hold, coast, then full brake to rest.
struct FourPhasePlan {
  double hold_speed = 0.0;   // V, m/s
  double coast_start = 0.0;  // m
  double brake_start = 0.0;  // m

  void validate(const ProblemSpec& problem) const;
};

struct FourPhaseRun {
  Trajectory trajectory;
  double fuel = 0.0;
  bool reaches_target = false;  // |x_end - L| <= 1% L and v_end <= 0.1 m/s
};

FourPhaseRun four_phase_rollout(const FourPhasePlan& plan, const ProblemSpec& problem);

struct TunedPlan {
  FourPhasePlan plan;
  double fuel = 0.0;
  FourPhaseRun run;
};

/// Least-fuel four-phase plan arriving at rest at L no later than T.
/// Throws InfeasibleError when no hold speed admits such a plan.
TunedPlan tune_four_phase(const ProblemSpec& problem);

/// Copy of `problem` with kappa = 10 x the tuned four-phase fuel.
ProblemSpec calibrate_terminal_penalty(const ProblemSpec& problem);

struct HoldingConfig {
  double target_speed = 10.0;     // m/s
  std::size_t pairs = 1;          // s_j, coast-power pairs over the interval
  double band_half_width = 5.0;   // m/s, cap on the switching band
  bool equilibrium = false;       // hold with the exact equilibrium control instead
  double dt = 0.01;               // s, integrator step of the holding analysis

  void validate() const;
};

struct HoldingRun {
  Trajectory trajectory;
  double amplitude = 0.0;     // max |v - V| after the first pair
  double switch_band = 0.0;   // half-width actually used for switching
  std::size_t pairs_completed = 0;
};

/// Alternates u = +1 / u = 0 with a speed band sized so the interval holds
/// about `pairs` coast-power pairs. The interval starts at the target speed.
HoldingRun coast_power_holding(const HoldingConfig& config, double interval_length, const ProblemSpec& problem);

inline constexpr std::size_t kMaxOracleStages = 14;

struct OracleResult {
  std::vector<double> sequence;  // one setting per stage
  double value = 0.0;            // running cost + terminal penalty
  double stage_duration = 0.0;
};

/// Exhaustive minimum over all piecewise-constant sequences of `controls`
/// (default {-1, 0, +1}) on `stages` equal stages of [0, T].
OracleResult brute_force_optimal(const ProblemSpec& problem, std::size_t stages);
OracleResult brute_force_optimal(const ProblemSpec& problem, std::size_t stages, const ControlSet& controls);

/// Value of one stage sequence, integrated with the same sub-stepping as the oracle.
double score_sequence(const ProblemSpec& problem, const std::vector<double>& sequence);

/// Trajectory of a stage sequence sampled at the oracle's sub-steps.
Trajectory simulate_sequence(const ProblemSpec& problem, const std::vector<double>& sequence);

}  // namespace ecodrive
