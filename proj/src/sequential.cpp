#include "ecodrive/sequential.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "ecodrive/errors.hpp"

namespace ecodrive {

namespace {

std::size_t levels_per_update(const Grid& grid, double interval) {
  if (grid.t.count < 2) return 1;
  const double n = std::round(interval / grid.dt());
  if (n < 1.0) return 1;
  return std::min(static_cast<std::size_t>(n), grid.t.count - 1);
}

std::size_t integrator_steps(const Grid& grid, const ProblemSpec& problem) {
  return static_cast<std::size_t>(std::max(1.0, std::ceil(grid.dt() / problem.integrator_dt - 1e-9)));
}

State clamp_to(const Grid& grid, State s) {
  s.x = std::clamp(s.x, grid.x.start, grid.x.end());
  s.v = std::clamp(s.v, grid.v.start, grid.v.end());
  return s;
}

}  // namespace

const char* to_string(EventKind kind) {
  switch (kind) {
    case EventKind::speed_limit: return "speed_limit";
    case EventKind::grade: return "grade";
    case EventKind::davis: return "davis";
    case EventKind::target_speed: return "target_speed";
  }
  return "?";
}

ProblemSpec apply_event(const ProblemSpec& env, const ScenarioEvent& ev) {
  ProblemSpec out = env;
  switch (ev.kind) {
    case EventKind::speed_limit: {
      auto& limits = out.trip.speed_limits;
      if (ev.segment >= limits.size()) throw ArgumentError("speed-limit event names a missing segment");
      limits[ev.segment].limit = ev.value;
      if (ev.segment_end) limits[ev.segment].end = *ev.segment_end;
      break;
    }
    case EventKind::grade: {
      auto bps = out.vehicle.grade.breakpoints();
      if (ev.segment >= bps.size()) throw ArgumentError("grade event names a missing segment");
      bps[ev.segment].accel = ev.value;
      out.vehicle.grade = GradeProfile(std::move(bps));
      break;
    }
    case EventKind::davis:
      out.vehicle.davis = ev.davis;
      break;
    case EventKind::target_speed:
      out.trip.v_end = ev.value;
      break;
  }
  out.validate();
  return out;
}

ProblemSpec environment_at(const ProblemSpec& initial, const std::vector<ScenarioEvent>& events, double now) {
  ProblemSpec env = initial;
  for (const auto& ev : events) {
    if (ev.timestamp <= now) env = apply_event(env, ev);
  }
  return env;
}

void validate_events(const std::vector<ScenarioEvent>& events, const ProblemSpec& initial) {
  double prev = 0.0;
  for (const auto& ev : events) {
    if (!(ev.timestamp >= 0.0) || ev.timestamp > initial.trip.horizon) {
      std::ostringstream os;
      os << "event timestamp " << ev.timestamp << " lies outside [0, T]";
      throw ArgumentError(os.str());
    }
    if (ev.timestamp < prev) throw ArgumentError("events must be sorted by timestamp");
    prev = ev.timestamp;
  }
  // Applying the whole list checks every payload.
  environment_at(initial, events, initial.trip.horizon);
}

HamiltonianEstimate estimate_hamiltonian(const ProblemSpec& env, double now, double window) {
  const double horizon = env.trip.horizon;
  if (!(now >= 0.0) || now > horizon) throw ArgumentError("estimate time must lie in [0, T]");
  if (!(window >= 0.0)) throw ArgumentError("estimate window must be >= 0");
  return {env, now, std::min(now + window, horizon)};
}

RecedingRun run_receding_horizon(const ProblemSpec& initial, const std::vector<ScenarioEvent>& events,
                                 const RecedingOptions& options) {
  if (!(options.update_interval > 0.0)) throw ArgumentError("update interval must be > 0");
  initial.validate();
  validate_events(events, initial);

  const Grid full = build_grid(initial, options.resolution);
  const std::size_t last = full.t.count - 1;
  const std::size_t stride = levels_per_update(full, options.update_interval);
  const std::size_t per_level = integrator_steps(full, initial);
  const double h = full.dt() / static_cast<double>(per_level);

  std::mt19937_64 rng(options.noise.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto observe = [&](const State& s) {
    State m = s;
    if (options.noise.enabled()) {
      m.x += options.noise.position_std * normal(rng);
      m.v += options.noise.speed_std * normal(rng);
    }
    return clamp_to(full, m);
  };

  RecedingRun run;
  State state{0.0, initial.trip.v_start, full.t.start};
  std::size_t level = 0;
  while (true) {
    const double t_k = full.t.at(level);
    const ProblemSpec env = environment_at(initial, events, t_k);
    const std::size_t end_level = std::min(level + stride, last);
    HamiltonianEstimate est = estimate_hamiltonian(env, t_k, options.update_interval);
    est.end = full.t.at(end_level);
    run.estimates.push_back(est);

    const Grid grid = tail_grid(full, level);
    const ValueField field = solve(env, grid, {false, end_level - level + 1});
    if (level == last) {
      state.t = t_k;
      run.trajectory.samples.push_back({state.t, state.x, state.v, optimal_control(observe(state), field, env).u});
      break;
    }
    for (std::size_t lv = level; lv < end_level; ++lv) {
      state.t = full.t.at(lv);
      const double u = optimal_control(observe(state), field, env).u;
      for (std::size_t k = 0; k < per_level; ++k) {
        state.t = full.t.at(lv) + static_cast<double>(k) * h;
        run.trajectory.samples.push_back({state.t, state.x, state.v, u});
        // The vehicle moves in the true environment, which may already
        // contain events the controller has not seen yet.
        const ProblemSpec truth = environment_at(initial, events, state.t);
        state = step(state, u, h, truth.vehicle);
      }
    }
    level = end_level;
    if (level == last) {
      // The final sample carries the terminal minimizer; no further solve is
      // needed when the last window already stored the terminal level.
      state.t = full.t.at(last);
      State clamped = clamp_to(full, state);
      run.trajectory.samples.push_back(
          {state.t, state.x, state.v, optimal_control(observe(clamped), field, env).u});
      break;
    }
  }
  run.trajectory.refresh_switching_times();
  return run;
}

ArmSummary summarize(const Trajectory& traj, const ProblemSpec& initial, const std::vector<ScenarioEvent>& events) {
  if (traj.empty()) throw ArgumentError("cannot summarize an empty trajectory");
  ArmSummary s;
  s.fuel = trip_fuel(traj);
  for (const auto& p : traj.samples) {
    const ProblemSpec env = environment_at(initial, events, p.t);
    s.worst_violation = std::max(s.worst_violation, p.v - env.trip.speed_limit_at(p.x));
  }
  const ProblemSpec final_env = environment_at(initial, events, traj.back().t);
  const auto& trip = final_env.trip;
  const double scale = trip.length > 0.0 ? trip.length : 1.0;
  s.terminal_miss =
      std::abs(traj.back().x - trip.length) / scale + std::abs(traj.back().v - trip.v_end) / velocity_ceiling(trip);
  return s;
}

ComparisonReport compare(const ProblemSpec& initial, const std::vector<ScenarioEvent>& events,
                         const RecedingOptions& options) {
  initial.validate();
  validate_events(events, initial);
  ComparisonReport report;
  {
    const Grid grid = build_grid(initial, options.resolution);
    const ValueField field = solve(initial, grid);
    const Trajectory plan = rollout(field, {0.0, initial.trip.v_start, grid.t.start}, initial);
    // Replay the planned controls open loop in the true environment.
    // Same step as the rollout, so an unchanged environment reproduces it exactly.
    const double h = grid.t.count > 1 ? grid.dt() / static_cast<double>(integrator_steps(grid, initial)) : 0.0;
    Trajectory& replay = report.apriori_trajectory;
    State state{0.0, initial.trip.v_start, plan.samples.front().t};
    for (std::size_t i = 0; i < plan.size(); ++i) {
      const auto& p = plan.samples[i];
      replay.samples.push_back({p.t, state.x, state.v, p.u});
      if (i + 1 < plan.size()) {
        const ProblemSpec truth = environment_at(initial, events, p.t);
        state = step(state, p.u, h, truth.vehicle);
      }
    }
    replay.refresh_switching_times();
  }
  RecedingRun run = run_receding_horizon(initial, events, options);
  report.sequential_trajectory = std::move(run.trajectory);
  report.estimates = std::move(run.estimates);
  report.apriori = summarize(report.apriori_trajectory, initial, events);
  report.sequential = summarize(report.sequential_trajectory, initial, events);
  return report;
}

}  // namespace ecodrive
