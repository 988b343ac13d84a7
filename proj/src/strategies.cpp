#include "ecodrive/strategies.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>

#include "ecodrive/errors.hpp"

namespace ecodrive {

namespace {

enum class Phase { accelerate = 0, hold = 1, coast = 2, brake = 3 };

double target_tolerance(const TripSpec& trip) { return 0.01 * (trip.length > 0.0 ? trip.length : 1.0); }

bool at_target(const TrajectorySample& end, const TripSpec& trip) {
  return std::abs(end.x - trip.length) <= target_tolerance(trip) && end.v <= 0.1;
}

struct StageGrid {
  std::size_t substeps;
  double h;
};

StageGrid stage_grid(const ProblemSpec& problem, double stage_duration) {
  const auto n = static_cast<std::size_t>(std::max(1.0, std::ceil(stage_duration / problem.integrator_dt - 1e-9)));
  return {n, stage_duration / static_cast<double>(n)};
}

}  // namespace

void FourPhasePlan::validate(const ProblemSpec& problem) const {
  if (!(hold_speed > 0.0) || hold_speed > problem.trip.min_speed_limit()) {
    throw ArgumentError("four-phase hold speed must lie in (0, min speed limit]");
  }
  if (!(coast_start >= 0.0) || coast_start > brake_start || brake_start > problem.trip.length) {
    throw ArgumentError("four-phase plan needs 0 <= coast_start <= brake_start <= L");
  }
}

FourPhaseRun four_phase_rollout(const FourPhasePlan& plan, const ProblemSpec& problem) {
  problem.validate();
  plan.validate(problem);
  const auto& trip = problem.trip;
  const auto& vehicle = problem.vehicle;
  const auto steps =
      static_cast<std::size_t>(std::max(1.0, std::ceil(trip.horizon / problem.integrator_dt - 1e-9)));
  const double h = trip.horizon / static_cast<double>(steps);

  auto control_for = [&](Phase phase, double x) {
    switch (phase) {
      case Phase::accelerate:
        return 1.0;
      case Phase::hold: {
        const double u = net_deceleration(x, plan.hold_speed, vehicle) / vehicle.max_traction;
        if (u < 0.0 || u > 1.0) {
          std::ostringstream os;
          os << "hold at " << plan.hold_speed << " m/s needs u = " << u << " outside [0, 1]";
          throw InfeasibleError(os.str());
        }
        return u;
      }
      case Phase::coast:
        return 0.0;
      case Phase::brake:
        return -1.0;
    }
    return 0.0;
  };

  FourPhaseRun run;
  auto& samples = run.trajectory.samples;
  State s{0.0, trip.v_start, 0.0};
  Phase phase = Phase::accelerate;
  bool stopped = false;
  for (std::size_t k = 0; k < steps; ++k) {
    Phase wanted = phase;
    if (s.x >= plan.brake_start) {
      wanted = Phase::brake;
    } else if (s.x >= plan.coast_start) {
      wanted = Phase::coast;
    } else if (phase == Phase::accelerate && s.v >= plan.hold_speed) {
      wanted = Phase::hold;
    }
    phase = std::max(phase, wanted);
    const double u = control_for(phase, s.x);
    samples.push_back({s.t, s.x, s.v, u});
    if (phase == Phase::brake && s.v == 0.0) {
      stopped = true;
      break;
    }
    s = step(s, u, h, vehicle);
    s.t = static_cast<double>(k + 1) * h;
  }
  if (!stopped) samples.push_back({s.t, s.x, s.v, control_for(phase, s.x)});
  run.trajectory.refresh_switching_times();
  run.fuel = trip_fuel(run.trajectory);
  run.reaches_target = at_target(run.trajectory.back(), trip);
  return run;
}

TunedPlan tune_four_phase(const ProblemSpec& problem) {
  problem.validate();
  const auto& trip = problem.trip;
  if (!(trip.length > 0.0) || !(trip.horizon > 0.0)) throw InfeasibleError("four-phase tuning needs L > 0 and T > 0");

  const double L = trip.length;
  const std::size_t speed_count = 41;
  const double v_top = trip.min_speed_limit();

  auto arrives_in_time = [&](const FourPhaseRun& run) {
    return run.trajectory.back().v == 0.0 && run.trajectory.back().t <= trip.horizon + 1e-9;
  };

  // Brake start in [coast_start, L] that puts the stopping point at L. With
  // `tie` the coast phase is skipped (coast_start moves with brake_start).
  auto fit_brake = [&](const FourPhasePlan& base, bool tie) {
    FourPhasePlan plan = base;
    auto run_at = [&](double brake) {
      plan.brake_start = brake;
      if (tie) plan.coast_start = brake;
      return std::pair{plan, four_phase_rollout(plan, problem)};
    };
    double lo = tie ? 0.0 : base.coast_start;
    double hi = L;
    auto lo_run = run_at(lo);
    if (lo_run.second.trajectory.back().x >= L) return lo_run;
    while (hi - lo > 1e-3) {
      const double mid = 0.5 * (lo + hi);
      if (run_at(mid).second.trajectory.back().x < L) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    auto a = run_at(lo);
    auto b = run_at(hi);
    if (std::abs(a.second.trajectory.back().x - L) <= std::abs(b.second.trajectory.back().x - L)) return a;
    return b;
  };

  auto acceptable = [&](const FourPhaseRun& run) { return arrives_in_time(run) && run.reaches_target; };

  std::optional<TunedPlan> best;
  for (std::size_t i = 1; i <= speed_count; ++i) {
    FourPhasePlan plan;
    plan.hold_speed = v_top * static_cast<double>(i) / static_cast<double>(speed_count);
    try {
      // Fastest variant: hold until braking, no coast.
      auto fastest = fit_brake(plan, true);
      if (!acceptable(fastest.second)) continue;
      // Smallest coast start that still arrives at rest at L by T.
      double lo = 0.0;
      double hi = fastest.first.coast_start;
      auto chosen = fastest;
      while (hi - lo > 1e-2) {
        plan.coast_start = 0.5 * (lo + hi);
        auto candidate = fit_brake(plan, false);
        if (acceptable(candidate.second)) {
          hi = plan.coast_start;
          chosen = candidate;
        } else {
          lo = plan.coast_start;
        }
      }
      if (!best || chosen.second.fuel < best->fuel) {
        best = TunedPlan{chosen.first, chosen.second.fuel, chosen.second};
      }
    } catch (const InfeasibleError&) {
      continue;  // hold speed not sustainable
    }
  }
  if (!best) {
    std::ostringstream os;
    os << "no four-phase plan covers L = " << L << " m within T = " << trip.horizon << " s";
    throw InfeasibleError(os.str());
  }
  return *best;
}

ProblemSpec calibrate_terminal_penalty(const ProblemSpec& problem) {
  ProblemSpec calibrated = problem;
  calibrated.penalties.terminal_kappa = 10.0 * tune_four_phase(problem).fuel;
  return calibrated;
}

void HoldingConfig::validate() const {
  if (!(target_speed > 0.0)) throw ArgumentError("holding target speed must be > 0");
  if (pairs < 1) throw ArgumentError("holding needs at least one coast-power pair");
  if (!(band_half_width > 0.0)) throw ArgumentError("holding band half-width must be > 0");
  if (!(dt > 0.0)) throw ArgumentError("holding dt must be > 0");
}

HoldingRun coast_power_holding(const HoldingConfig& config, double interval_length, const ProblemSpec& problem) {
  config.validate();
  problem.validate();
  if (!(interval_length > 0.0)) throw ArgumentError("holding interval length must be > 0");
  const auto& vehicle = problem.vehicle;
  const double V = config.target_speed;
  const double A = vehicle.max_traction;
  const double drag = net_deceleration(0.0, V, vehicle);
  if (drag > A || drag <= 0.0) {
    std::ostringstream os;
    os << "hold speed " << V << " m/s is not sustainable by coast-power pairs (net resistance " << drag << ")";
    throw InfeasibleError(os.str());
  }

  HoldingRun run;
  auto& samples = run.trajectory.samples;
  State s{0.0, V, 0.0};
  if (config.equilibrium) {
    const double u = drag / A;
    std::size_t k = 0;
    while (s.x < interval_length) {
      samples.push_back({s.t, s.x, s.v, u});
      s = step(s, u, config.dt, vehicle);
      s.t = static_cast<double>(++k) * config.dt;
    }
    samples.push_back({s.t, s.x, s.v, u});
    for (const auto& p : samples) run.amplitude = std::max(run.amplitude, std::abs(p.v - V));
    run.pairs_completed = 0;
    run.trajectory.refresh_switching_times();
    return run;
  }

  // A full cycle V - d -> V + d -> V - d covers about 2 d V (1/(A - r) + 1/r).
  const double pair_length = interval_length / static_cast<double>(config.pairs);
  const double band = std::min(config.band_half_width, pair_length / (2.0 * V * (1.0 / (A - drag) + 1.0 / drag)));
  run.switch_band = band;

  double u = 1.0;
  bool first_pair_done = false;
  std::size_t k = 0;
  while (s.x < interval_length) {
    if (u == 1.0 && s.v >= V + band) {
      u = 0.0;
    } else if (u == 0.0 && s.v <= V - band) {
      u = 1.0;
      ++run.pairs_completed;
      first_pair_done = true;
    }
    samples.push_back({s.t, s.x, s.v, u});
    if (first_pair_done) run.amplitude = std::max(run.amplitude, std::abs(s.v - V));
    s = step(s, u, config.dt, vehicle);
    s.t = static_cast<double>(++k) * config.dt;
  }
  samples.push_back({s.t, s.x, s.v, u});
  if (first_pair_done) run.amplitude = std::max(run.amplitude, std::abs(s.v - V));
  run.trajectory.refresh_switching_times();
  return run;
}

OracleResult brute_force_optimal(const ProblemSpec& problem, std::size_t stages) {
  return brute_force_optimal(problem, stages, ControlSet::three_level());
}

OracleResult brute_force_optimal(const ProblemSpec& problem, std::size_t stages, const ControlSet& controls) {
  problem.validate();
  if (stages < 1 || stages > kMaxOracleStages) {
    std::ostringstream os;
    os << "oracle stages must lie in [1, " << kMaxOracleStages << "]; got " << stages;
    throw ArgumentError(os.str());
  }
  const auto& trip = problem.trip;
  if (!(trip.horizon > 0.0)) throw ArgumentError("oracle needs T > 0");
  const double stage_duration = trip.horizon / static_cast<double>(stages);
  const StageGrid sg = stage_grid(problem, stage_duration);

  // Settings in tie-break order: smaller |u| first, then smaller u. Depth-first
  // enumeration in this order with strict improvement keeps the
  // lexicographically first optimal sequence.
  std::vector<double> order = controls.settings();
  std::stable_sort(order.begin(), order.end(), [](double a, double b) {
    if (std::abs(a) != std::abs(b)) return std::abs(a) < std::abs(b);
    return a < b;
  });

  OracleResult best;
  best.stage_duration = stage_duration;
  best.value = std::numeric_limits<double>::infinity();
  std::vector<double> current(stages);

  auto recurse = [&](auto&& self, std::size_t stage, State s, double cost) -> void {
    if (stage == stages) {
      const double total = cost + terminal_penalty(s.x, s.v, problem);
      if (best.sequence.empty() || total < best.value - 1e-12 * std::max(1.0, std::abs(best.value))) {
        best.value = total;
        best.sequence = current;
      }
      return;
    }
    for (double u : order) {
      current[stage] = u;
      State next = s;
      double c = cost;
      for (std::size_t k = 0; k < sg.substeps; ++k) {
        c += running_cost(next.x, next.v, u, problem) * sg.h;
        next = step(next, u, sg.h, problem.vehicle);
      }
      self(self, stage + 1, next, c);
    }
  };
  recurse(recurse, 0, State{0.0, trip.v_start, 0.0}, 0.0);
  return best;
}

double score_sequence(const ProblemSpec& problem, const std::vector<double>& sequence) {
  if (sequence.empty()) throw ArgumentError("sequence must not be empty");
  const double stage_duration = problem.trip.horizon / static_cast<double>(sequence.size());
  const StageGrid sg = stage_grid(problem, stage_duration);
  State s{0.0, problem.trip.v_start, 0.0};
  double cost = 0.0;
  for (double u : sequence) {
    for (std::size_t k = 0; k < sg.substeps; ++k) {
      cost += running_cost(s.x, s.v, u, problem) * sg.h;
      s = step(s, u, sg.h, problem.vehicle);
    }
  }
  return cost + terminal_penalty(s.x, s.v, problem);
}

Trajectory simulate_sequence(const ProblemSpec& problem, const std::vector<double>& sequence) {
  if (sequence.empty()) throw ArgumentError("sequence must not be empty");
  const double stage_duration = problem.trip.horizon / static_cast<double>(sequence.size());
  const StageGrid sg = stage_grid(problem, stage_duration);
  Trajectory traj;
  State s{0.0, problem.trip.v_start, 0.0};
  std::size_t k = 0;
  for (double u : sequence) {
    for (std::size_t j = 0; j < sg.substeps; ++j, ++k) {
      s.t = static_cast<double>(k) * sg.h;
      traj.samples.push_back({s.t, s.x, s.v, u});
      s = step(s, u, sg.h, problem.vehicle);
    }
  }
  s.t = problem.trip.horizon;
  traj.samples.push_back({s.t, s.x, s.v, sequence.back()});
  traj.refresh_switching_times();
  return traj;
}

}  // namespace ecodrive
