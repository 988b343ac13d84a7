#include "ecodrive/commands.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ecodrive/errors.hpp"
#include "ecodrive/io.hpp"
#include "ecodrive/kkt.hpp"
#include "ecodrive/pmp.hpp"
#include "ecodrive/scenario.hpp"
#include "ecodrive/sequential.hpp"
#include "ecodrive/strategies.hpp"

namespace ecodrive {

namespace {

using ordered_json = nlohmann::ordered_json;
namespace fs = std::filesystem;

// Pass thresholds applied by verify.
constexpr double kPmpPassFraction = 0.95;
constexpr double kLinkMedian = 0.10;
constexpr double kKktPassFraction = 0.90;

class CommandContext {
 public:
  CommandContext(const CommandOptions& options, ScenarioFile scenario, std::string digest_input)
      : options_(options), scenario_(std::move(scenario)) {
    std::ostringstream hex;
    hex << std::hex;
    hex.width(16);
    hex.fill('0');
    hex << fnv1a(digest_input);
    report_["command"] = options.command;
    report_["input_digest"] = hex.str();
  }

  const CommandOptions& options() const { return options_; }
  ScenarioFile& scenario() { return scenario_; }
  ordered_json& report() { return report_; }

  fs::path path(const std::string& name) const { return fs::path(options_.out_dir) / name; }

  void write_text(const std::string& name, const std::string& content) {
    std::ofstream out(path(name), std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path(name).string() + "'");
    out << content;
    files_.push_back(name);
  }

  void write_trajectory(const std::string& name, const Trajectory& traj, const std::vector<ScenarioEvent>& events) {
    std::ostringstream os;
    write_trajectory_csv(os, traj, scenario_.problem, events);
    write_text(name, os.str());
  }

  void finish(double seconds) {
    report_["outputs"] = files_;
    report_["timing_s"] = seconds;
    std::ofstream out(path("report.json"), std::ios::binary);
    out << report_.dump(2) << '\n';
  }

 private:
  const CommandOptions& options_;
  ScenarioFile scenario_;
  ordered_json report_;
  std::vector<std::string> files_;
};

ordered_json state_json(double x, double v) { return {{"x_m", x}, {"v_mps", v}}; }

double terminal_miss(const TrajectorySample& end, const TripSpec& trip) {
  const double scale = trip.length > 0.0 ? trip.length : 1.0;
  return std::abs(end.x - trip.length) / scale + std::abs(end.v - trip.v_end) / velocity_ceiling(trip);
}

bool reaches_target(const TrajectorySample& end, const TripSpec& trip) {
  const KktTolerances tol;
  return std::abs(end.x - trip.length) <= tol.position_fraction * trip.length &&
         std::abs(end.v - trip.v_end) <= tol.speed;
}

ordered_json grid_json(const Grid& grid) {
  return {{"nx", grid.x.count}, {"nv", grid.v.count}, {"nt", grid.t.count}, {"substeps", grid.substeps}};
}

void ensure_kappa(ScenarioFile& scenario, ordered_json& report) {
  const bool calibrated = !scenario.problem.penalties.terminal_kappa.has_value();
  if (calibrated) scenario.problem = calibrate_terminal_penalty(scenario.problem);
  report["terminal_kappa"] = *scenario.problem.penalties.terminal_kappa;
  report["terminal_kappa_calibrated"] = calibrated;
}

void cmd_solve(CommandContext& ctx, std::ostream& log) {
  auto& sc = ctx.scenario();
  ensure_kappa(sc, ctx.report());
  const ProblemSpec& p = sc.problem;
  const Grid grid = build_grid(p, sc.grid);
  const ValueField field = solve(p, grid);
  const Trajectory traj = rollout(field, {0.0, p.trip.v_start, 0.0}, p);
  ctx.write_trajectory("trajectory.csv", traj, {});

  ordered_json slices = ordered_json::array();
  for (double t : sc.value_slice_times) {
    const std::size_t level = field.level_for_time(t);
    const std::string name = "value_t" + format_number(grid.t.at(level)) + "s.csv";
    std::ostringstream os;
    write_value_slice_csv(os, field, level);
    ctx.write_text(name, os.str());
    slices.push_back({{"time_s", grid.t.at(level)}, {"level", level}, {"file", name}});
  }

  auto& r = ctx.report();
  const double j0 = value_at(field, {0.0, p.trip.v_start, 0.0});
  r["grid"] = grid_json(grid);
  r["value_at_start"] = j0;
  r["fuel"] = trip_fuel(traj);
  r["terminal_state"] = state_json(traj.back().x, traj.back().v);
  r["terminal_miss"] = terminal_miss(traj.back(), p.trip);
  r["reaches_target"] = reaches_target(traj.back(), p.trip);
  r["worst_speed_violation_mps"] = worst_speed_violation(traj, p.trip);
  r["switching_times"] = traj.switching_times.size();
  r["dp_consistency"] = dp_consistency(field, traj, p);
  r["value_slices"] = slices;
  log << "solve: J*(start) = " << format_number(j0) << ", rollout fuel = " << format_number(trip_fuel(traj)) << '\n';
}

void cmd_baseline(CommandContext& ctx, std::ostream& log) {
  auto& sc = ctx.scenario();
  const TunedPlan tuned = tune_four_phase(sc.problem);
  ctx.write_trajectory("trajectory.csv", tuned.run.trajectory, {});
  auto& r = ctx.report();
  r["plan"] = {{"hold_speed_mps", tuned.plan.hold_speed},
               {"coast_start_m", tuned.plan.coast_start},
               {"brake_start_m", tuned.plan.brake_start}};
  r["fuel"] = tuned.fuel;
  r["terminal_state"] = state_json(tuned.run.trajectory.back().x, tuned.run.trajectory.back().v);
  r["reaches_target"] = tuned.run.reaches_target;
  log << "baseline: hold speed " << format_number(tuned.plan.hold_speed) << " m/s, fuel "
      << format_number(tuned.fuel) << '\n';
}

ordered_json pmp_json(const PmpReport& rep, double tolerance) {
  ordered_json spans = ordered_json::array();
  for (const auto& s : rep.failing_spans) spans.push_back({s.begin, s.end});
  return {{"relative_tolerance", tolerance},
          {"pass_fraction", rep.pass_fraction},
          {"worst_gap", rep.worst_gap},
          {"pass", rep.pass_fraction >= kPmpPassFraction},
          {"failing_spans_s", spans}};
}

void cmd_verify(CommandContext& ctx, const Trajectory& traj, std::ostream& log) {
  auto& sc = ctx.scenario();
  ensure_kappa(sc, ctx.report());
  const ProblemSpec& p = sc.problem;
  const Grid grid = build_grid(p, sc.grid);
  const ValueField field = solve(p, grid);
  auto& r = ctx.report();
  r["grid"] = grid_json(grid);
  r["samples"] = traj.size();

  bool all_pass = true;
  ordered_json pmp;
  try {
    const AdjointPath free_end = integrate_adjoint(traj, p);
    pmp["zero_terminal_costate"] = pmp_json(check_maximum_principle(traj, free_end, p, sc.verify.pmp_tolerance),
                                            sc.verify.pmp_tolerance);
    const double horizon = traj.back().t - traj.samples.front().t;
    const double begin = traj.samples.front().t + 0.1 * horizon;
    const double end = traj.samples.front().t + 0.9 * horizon;
    const auto costate = fit_terminal_costate(traj, field, p, 1.0, begin, end);
    const AdjointPath fitted = integrate_adjoint(traj, p, 1.0, costate);
    const PmpReport rep = check_maximum_principle(traj, fitted, p, sc.verify.pmp_tolerance);
    pmp["fitted_terminal_costate"] = pmp_json(rep, sc.verify.pmp_tolerance);
    pmp["fitted_terminal_costate"]["psi_T"] = {costate.first, costate.second};
    all_pass = all_pass && rep.pass_fraction >= kPmpPassFraction;
    try {
      const LinkReport link = verify_adjoint_value_link(field, fitted, traj, p);
      r["adjoint_value_link"] = {{"median", link.median},
                                 {"max", link.max},
                                 {"compared", link.compared},
                                 {"excluded", link.excluded},
                                 {"pass", link.compared > 0 && link.median <= kLinkMedian}};
      all_pass = all_pass && link.compared > 0 && link.median <= kLinkMedian;
    } catch (const ExtrapolationError& e) {
      r["adjoint_value_link"] = {{"error", e.what()}, {"pass", false}};
      all_pass = false;
    }
  } catch (const std::invalid_argument& e) {
    // Inadmissible input (v < 0, |u| > 1, ...) is a verification result.
    pmp["error"] = e.what();
    pmp["pass"] = false;
    r["adjoint_value_link"] = {{"error", e.what()}, {"pass", false}};
    all_pass = false;
  }
  r["pmp"] = pmp;

  KktTolerances tol;
  tol.relative = sc.verify.kkt_tolerance;
  const Multipliers mult = fit_multipliers(traj, field, p);
  const KktResiduals kkt = kkt_residuals(traj, field, mult, p, tol);
  const bool kkt_pass = kkt.stationarity_pass_fraction >= kKktPassFraction && kkt.primal_ok &&
                        kkt.complementarity == 0.0 && kkt.dual == 0.0 && !kkt.g4_flagged && !kkt.g5_flagged;
  r["kkt"] = {{"relative_tolerance", tol.relative},
              {"stationarity_pass_fraction", kkt.stationarity_pass_fraction},
              {"primal_violation", kkt.primal_violation},
              {"primal_ok", kkt.primal_ok},
              {"complementarity", kkt.complementarity},
              {"dual", kkt.dual},
              {"relaxation", kkt.relaxation},
              {"g4_m", kkt.g4},
              {"g5_mps", kkt.g5},
              {"g4_flagged", kkt.g4_flagged},
              {"g5_flagged", kkt.g5_flagged},
              {"degenerate_multipliers", mult.degenerate},
              {"pass", kkt_pass}};
  all_pass = all_pass && kkt_pass;
  r["fuel"] = trip_fuel(traj);
  r["all_pass"] = all_pass;
  log << "verify: " << (all_pass ? "all checks pass" : "some checks fail") << '\n';
}

ordered_json arm_json(const ArmSummary& arm) {
  return {{"fuel", arm.fuel}, {"worst_speed_violation_mps", arm.worst_violation}, {"terminal_miss", arm.terminal_miss}};
}

ordered_json estimates_json(const std::vector<HamiltonianEstimate>& estimates, const std::vector<ScenarioEvent>& events) {
  ordered_json out = ordered_json::array();
  for (const auto& e : estimates) {
    std::size_t seen = 0;
    for (const auto& ev : events) seen += ev.timestamp <= e.begin ? 1 : 0;
    out.push_back({{"begin_s", e.begin}, {"end_s", e.end}, {"events_seen", seen}});
  }
  return out;
}

void cmd_simulate(CommandContext& ctx, std::ostream& log) {
  auto& sc = ctx.scenario();
  ensure_kappa(sc, ctx.report());
  const RecedingRun run = run_receding_horizon(sc.problem, sc.events, sc.receding());
  ctx.write_trajectory("trajectory.csv", run.trajectory, sc.events);
  const ArmSummary summary = summarize(run.trajectory, sc.problem, sc.events);
  auto& r = ctx.report();
  r["update_interval_s"] = sc.update_interval;
  r["noise"] = {{"position_std", sc.noise.position_std}, {"speed_std", sc.noise.speed_std}, {"seed", sc.noise.seed}};
  r["sequential"] = arm_json(summary);
  r["estimates"] = estimates_json(run.estimates, sc.events);
  log << "simulate: " << run.estimates.size() << " re-plans, fuel " << format_number(summary.fuel) << '\n';
}

void cmd_compare(CommandContext& ctx, std::ostream& log) {
  auto& sc = ctx.scenario();
  ensure_kappa(sc, ctx.report());
  const ComparisonReport rep = compare(sc.problem, sc.events, sc.receding());
  ctx.write_trajectory("apriori.csv", rep.apriori_trajectory, sc.events);
  ctx.write_trajectory("sequential.csv", rep.sequential_trajectory, sc.events);
  auto& r = ctx.report();
  r["update_interval_s"] = sc.update_interval;
  r["apriori"] = arm_json(rep.apriori);
  r["sequential"] = arm_json(rep.sequential);
  r["estimates"] = estimates_json(rep.estimates, sc.events);
  log << "compare: worst violation a-priori " << format_number(rep.apriori.worst_violation) << " m/s, sequential "
      << format_number(rep.sequential.worst_violation) << " m/s\n";
}

void cmd_oracle(CommandContext& ctx, std::ostream& log) {
  auto& sc = ctx.scenario();
  const std::size_t stages = sc.oracle.stages;
  if (stages < 1 || stages > kMaxOracleStages) {
    throw ArgumentError("oracle stages must lie in [1, " + std::to_string(kMaxOracleStages) + "]; got " +
                        std::to_string(stages));
  }
  ensure_kappa(sc, ctx.report());
  ProblemSpec p = sc.problem;
  p.controls = ControlSet::three_level();
  const OracleResult best = brute_force_optimal(p, stages);
  const Grid grid = build_grid(p, {sc.oracle.nx, sc.oracle.nv, stages + 1, 0});
  const ValueField field = solve(p, grid, {false, 1});
  const double j_hjb = value_at(field, {0.0, p.trip.v_start, 0.0});
  const Trajectory traj = simulate_sequence(p, best.sequence);
  ctx.write_trajectory("oracle.csv", traj, {});
  auto& r = ctx.report();
  const double rel = std::abs(j_hjb - best.value) / std::max(std::abs(best.value), 1e-12);
  r["stages"] = stages;
  r["stage_duration_s"] = best.stage_duration;
  r["sequence"] = best.sequence;
  r["value_bruteforce"] = best.value;
  r["grid"] = grid_json(grid);
  r["value_hjb"] = j_hjb;
  r["relative_difference"] = rel;
  log << "oracle: brute force " << format_number(best.value) << ", HJB " << format_number(j_hjb) << '\n';
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ScenarioError(ScenarioError::Kind::missing_file, path, "cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

ExitCode dispatch(const CommandOptions& options, std::ostream& log) {
  const auto start = std::chrono::steady_clock::now();
  ScenarioFile scenario = options.scenario_path ? parse_scenario(*options.scenario_path) : ScenarioFile{};
  if (options.grid) {
    scenario.grid.nx = options.grid->nx;
    scenario.grid.nv = options.grid->nv;
    scenario.grid.nt = options.grid->nt;
  }
  if (options.update_interval) scenario.update_interval = *options.update_interval;
  if (options.seed) scenario.noise.seed = *options.seed;
  if (options.stages) scenario.oracle.stages = *options.stages;
  scenario.validate();

  std::string digest_input = options.command + "\n" + serialize_scenario(scenario);
  Trajectory input;
  if (options.command == "verify") {
    if (!options.trajectory_path) throw ArgumentError("verify needs --trajectory <csv>");
    const std::string text = read_file(*options.trajectory_path);
    digest_input += text;
    std::istringstream in(text);
    input = read_trajectory_csv(in);
  }

  fs::create_directories(options.out_dir);
  CommandContext ctx(options, std::move(scenario), digest_input);
  const std::string& c = options.command;
  if (c == "solve") {
    cmd_solve(ctx, log);
  } else if (c == "baseline") {
    cmd_baseline(ctx, log);
  } else if (c == "verify") {
    cmd_verify(ctx, input, log);
  } else if (c == "simulate") {
    cmd_simulate(ctx, log);
  } else if (c == "compare") {
    cmd_compare(ctx, log);
  } else if (c == "oracle") {
    cmd_oracle(ctx, log);
  } else {
    throw ArgumentError("unknown command '" + c + "'");
  }
  ctx.finish(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  return ExitCode::ok;
}

}  // namespace

std::optional<GridOverride> parse_grid_flag(std::string_view text) {
  std::size_t values[3];
  const char* p = text.data();
  const char* end = text.data() + text.size();
  for (int k = 0; k < 3; ++k) {
    const auto res = std::from_chars(p, end, values[k]);
    if (res.ec != std::errc() || values[k] < 3) return std::nullopt;
    p = res.ptr;
    if (k < 2) {
      if (p == end || *p != ',') return std::nullopt;
      ++p;
    }
  }
  if (p != end) return std::nullopt;
  return GridOverride{values[0], values[1], values[2]};
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

ExitCode run_command(const CommandOptions& options, std::ostream& log, std::ostream& err) {
  try {
    return dispatch(options, log);
  } catch (const ScenarioError& e) {
    err << "error: " << e.what() << '\n';
    switch (e.kind()) {
      case ScenarioError::Kind::missing_file: return ExitCode::missing_file;
      case ScenarioError::Kind::syntax: return ExitCode::parse;
      case ScenarioError::Kind::unknown_key: return ExitCode::unknown_key;
      case ScenarioError::Kind::invalid_value: return ExitCode::invalid_value;
    }
    return ExitCode::internal;
  } catch (const CsvError& e) {
    err << "error: trajectory CSV: " << e.what() << '\n';
    return ExitCode::parse;
  } catch (const InfeasibleError& e) {
    err << "error: infeasible: " << e.what() << '\n';
    return ExitCode::infeasible;
  } catch (const ConfigurationError& e) {
    err << "error: numerical configuration: " << e.what() << '\n';
    return ExitCode::configuration;
  } catch (const ArgumentError& e) {
    err << "error: " << e.what() << '\n';
    return ExitCode::argument;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return ExitCode::internal;
  }
}

}  // namespace ecodrive
