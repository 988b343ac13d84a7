// Acceptance suite: one pass/fail line per criterion.
//
//   acceptance            run every criterion
//   acceptance 4 9        run the listed criteria only
//
// Exit status is 0 only when every selected criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ecodrive/hjb.hpp"
#include "ecodrive/kkt.hpp"
#include "ecodrive/pmp.hpp"
#include "ecodrive/scenario.hpp"
#include "ecodrive/sequential.hpp"
#include "ecodrive/strategies.hpp"

using namespace ecodrive;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

const ProblemSpec& calibrated_default() {
  static const ProblemSpec p = calibrate_terminal_penalty(ProblemSpec{});
  return p;
}

struct Solved {
  ValueField field;
  Trajectory rollout;
};

const Solved& default_solution() {
  static const Solved s = [] {
    const auto& p = calibrated_default();
    ValueField f = solve(p, build_grid(p, GridResolution{}));
    Trajectory t = rollout(f, {0.0, 0.0, 0.0}, p);
    return Solved{std::move(f), std::move(t)};
  }();
  return s;
}

// ---------------------------------------------------------------------------

Outcome oracle_equivalence() {
  ProblemSpec p = calibrated_default();
  p.controls = ControlSet::three_level();
  const OracleOptions o;
  const Grid grid = build_grid(p, {o.nx, o.nv, o.stages + 1, 0});
  const double j_hjb = value_at(solve(p, grid, {false, 1}), {0.0, 0.0, 0.0});
  const OracleResult best = brute_force_optimal(p, o.stages);
  const double rel = std::abs(j_hjb - best.value) / best.value;
  return {rel <= 0.02, fmt("J_hjb %.4f, J_bruteforce %.4f, relative %.4f (<= 0.02)", j_hjb, best.value, rel)};
}

Outcome baseline_dominance() {
  const double hjb = trip_fuel(default_solution().rollout);
  const double baseline = tune_four_phase(calibrated_default()).fuel;
  return {hjb <= 1.02 * baseline, fmt("HJB fuel %.4f, four-phase %.4f, ratio %.4f (<= 1.02)", hjb, baseline,
                                      hjb / baseline)};
}

Outcome dp_identity() {
  const auto& s = default_solution();
  const double worst = dp_consistency(s.field, s.rollout, calibrated_default());
  return {worst <= 0.05, fmt("worst relative drift %.4f (<= 0.05)", worst)};
}

Outcome maximum_principle() {
  const auto& p = calibrated_default();
  const auto& s = default_solution();
  const PmpReport zero = check_maximum_principle(s.rollout, integrate_adjoint(s.rollout, p), p, 1e-3);
  const auto term = fit_terminal_costate(s.rollout, s.field, p, 1.0, 0.1 * p.trip.horizon, 0.9 * p.trip.horizon);
  const AdjointPath adj = integrate_adjoint(s.rollout, p, 1.0, term);
  const PmpReport fitted = check_maximum_principle(s.rollout, adj, p, 1e-3);

  // Braking flipped to full power; the adjoint is re-integrated along the
  // corrupted pair from the same terminal costate.
  Trajectory corrupted = s.rollout;
  for (auto& sample : corrupted.samples) {
    if (sample.u < 0.0) sample.u = 1.0;
  }
  const PmpReport mutated = check_maximum_principle(corrupted, integrate_adjoint(corrupted, p, 1.0, term), p, 1e-3);

  const double best = std::max(zero.pass_fraction, fitted.pass_fraction);
  const bool pass = best >= 0.95 && mutated.pass_fraction < 0.95;
  std::string spans;
  for (std::size_t i = 0; i < fitted.failing_spans.size() && i < 6; ++i) {
    spans += fmt(" [%.1f, %.1f]", fitted.failing_spans[i].begin, fitted.failing_spans[i].end);
  }
  if (fitted.failing_spans.size() > 6) spans += " ...";
  return {pass, fmt("pass fraction %.4f with psi(T) = 0, %.4f with fitted psi(T) = (%.3f, %.3f) (>= 0.95); "
                    "mutated %.4f (< 0.95); failing spans (s):%s",
                    zero.pass_fraction, fitted.pass_fraction, term.first, term.second, mutated.pass_fraction,
                    spans.c_str())};
}

Outcome adjoint_value_link() {
  const auto& p = calibrated_default();
  const auto& s = default_solution();
  const auto term = fit_terminal_costate(s.rollout, s.field, p, 1.0, 0.1 * p.trip.horizon, 0.9 * p.trip.horizon);
  const LinkReport r = verify_adjoint_value_link(s.field, integrate_adjoint(s.rollout, p, 1.0, term), s.rollout, p);
  return {r.compared > 0 && r.median <= 0.10,
          fmt("median %.4f (<= 0.10) over %zu samples, %zu excluded", r.median, r.compared, r.excluded)};
}

Outcome five_case_consistency() {
  ProblemSpec p;
  p.vehicle.davis = {0.0, 0.0, 0.0};
  p.vehicle.max_traction = 1.0;
  p.penalties.terminal_kappa = 1.0;
  std::mt19937_64 rng(20240601);
  std::uniform_real_distribution<double> psi(-30.0, 30.0), speed(0.0, 25.0);
  std::size_t compared = 0;
  std::size_t agreed = 0;
  for (int i = 0; i < 20000; ++i) {
    const double p2 = psi(rng);
    const double v = speed(rng);
    const auto implied = implied_setting(classify_control(p2, v));
    if (!implied) continue;
    double best_u = 0.0;
    double best_h = -1e300;
    for (double u : {-1.0, 0.0, 1.0}) {
      const double h = local_hamiltonian({0.0, v, 0.0}, u, {0.0, p2}, 1.0, p);
      if (h > best_h) {
        best_h = h;
        best_u = u;
      }
    }
    ++compared;
    if (best_u == *implied) ++agreed;
  }
  return {compared >= 10000 && agreed == compared,
          fmt("%zu of %zu non-singular samples agree", agreed, compared)};
}

Outcome kkt_suite() {
  const auto& p = calibrated_default();
  const auto& s = default_solution();
  const Multipliers m = fit_multipliers(s.rollout, s.field, p);
  const KktResiduals r = kkt_residuals(s.rollout, s.field, m, p);

  bool exact = true;
  double worst_error = 0.0;
  for (double injected : {0.01, 0.5, 2.0}) {
    Trajectory t = s.rollout;
    t.samples[t.size() / 3].v = -injected;
    const KktResiduals bad = kkt_residuals(t, s.field, Multipliers::zeros(t.size()), p);
    exact = exact && bad.primal_violation == injected;
    worst_error = std::max(worst_error, std::abs(bad.primal_violation - injected));
  }
  const bool pass = r.complementarity == 0.0 && r.dual == 0.0 && r.stationarity_pass_fraction >= 0.90 && exact;
  return {pass, fmt("complementarity %g, dual %g, stationarity pass %.4f (>= 0.90), injected g3 error %g",
                    r.complementarity, r.dual, r.stationarity_pass_fraction, worst_error)};
}

Outcome holding_trend() {
  const auto& p = calibrated_default();
  std::vector<double> amp;
  for (std::size_t pairs : {1, 2, 4, 8, 16}) {
    HoldingConfig cfg;
    cfg.pairs = pairs;
    amp.push_back(coast_power_holding(cfg, p.trip.length, p).amplitude);
  }
  bool pass = true;
  double worst_ratio = 1e300;
  for (std::size_t i = 1; i < amp.size(); ++i) {
    const double ratio = amp[i - 1] / amp[i];
    worst_ratio = std::min(worst_ratio, ratio);
    pass = pass && amp[i] < amp[i - 1] && ratio >= 1.5;
  }
  return {pass, fmt("amplitudes %.4f %.4f %.4f %.4f %.4f m/s, smallest ratio %.3f (>= 1.5)", amp[0], amp[1], amp[2],
                    amp[3], amp[4], worst_ratio)};
}

Outcome sequential_headline() {
  ScenarioFile drop = parse_scenario(std::string(ECODRIVE_FIXTURE_DIR) + "/limit_drop.json");
  drop.problem = calibrate_terminal_penalty(drop.problem);
  const ComparisonReport r = compare(drop.problem, drop.events, drop.receding());
  const ComparisonReport same = compare(calibrated_default(), {});
  const double gap = std::abs(same.apriori.fuel - same.sequential.fuel) / same.apriori.fuel;
  const bool pass = r.sequential.worst_violation <= 0.5 && r.apriori.worst_violation > 2.0 && gap <= 0.02;
  return {pass, fmt("limit drop: sequential %.3f m/s (<= 0.5), a-priori %.3f m/s (> 2); no events: fuel gap %.4f "
                    "(<= 0.02)",
                    r.sequential.worst_violation, r.apriori.worst_violation, gap)};
}

Outcome grid_convergence() {
  const auto& p = calibrated_default();
  const GridResolution base;
  const GridResolution fine{2 * (base.nx - 1) + 1, 2 * (base.nv - 1) + 1, 2 * (base.nt - 1) + 1, 0};
  const double j = value_at(solve(p, build_grid(p, base), {false, 1}), {0.0, 0.0, 0.0});
  const double j2 = value_at(solve(p, build_grid(p, fine), {false, 1}), {0.0, 0.0, 0.0});
  const double rel = std::abs(j2 - j) / j2;
  return {rel <= 0.01, fmt("J (%zu,%zu,%zu) %.4f, J (%zu,%zu,%zu) %.4f, relative %.4f (<= 0.01)", base.nx, base.nv,
                           base.nt, j, fine.nx, fine.nv, fine.nt, j2, rel)};
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

Outcome cli_determinism() {
  const fs::path root = fs::temp_directory_path() / "ecodrive_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string cli = ECODRIVE_CLI_PATH;
  const std::string scenario = std::string(ECODRIVE_FIXTURE_DIR) + "/limit_drop.json";

  auto run = [&](const std::string& args, const fs::path& out) {
    const std::string cmd = "\"" + cli + "\" " + args + " --out \"" + out.string() + "\" > \"" +
                            (out.string() + ".log") + "\" 2>&1";
    return std::system(cmd.c_str());
  };

  std::vector<std::string> commands{"solve", "baseline", "simulate", "compare", "oracle"};
  std::size_t files = 0;
  std::string problems;
  for (const auto& c : commands) {
    for (int k = 0; k < 2; ++k) {
      if (run(c + " --scenario \"" + scenario + "\"", root / (c + std::to_string(k))) != 0) {
        problems += " " + c + " exited nonzero;";
      }
    }
  }
  // verify consumes the solve output.
  const std::string traj = (root / "solve0" / "trajectory.csv").string();
  for (int k = 0; k < 2; ++k) {
    if (run("verify --scenario \"" + scenario + "\" --trajectory \"" + traj + "\"", root / ("verify" + std::to_string(k))) !=
        0) {
      problems += " verify exited nonzero;";
    }
  }
  commands.push_back("verify");

  for (const auto& c : commands) {
    const fs::path a = root / (c + "0");
    const fs::path b = root / (c + "1");
    if (!fs::exists(a)) continue;
    std::size_t csvs = 0;
    for (const auto& entry : fs::directory_iterator(a)) {
      const fs::path name = entry.path().filename();
      if (name.extension() == ".csv") {
        ++csvs;
        ++files;
        if (slurp(entry.path()) != slurp(b / name)) problems += " " + c + "/" + name.string() + " differs;";
      }
    }
    // Reports match once the wall-clock timing is removed.
    auto ra = nlohmann::json::parse(slurp(a / "report.json"));
    auto rb = nlohmann::json::parse(slurp(b / "report.json"));
    ra.erase("timing_s");
    rb.erase("timing_s");
    if (ra != rb) problems += " " + c + "/report.json differs;";
    if (c != "verify" && csvs == 0) problems += " " + c + " wrote no CSV;";
  }
  const bool pass = problems.empty();
  return {pass, pass ? fmt("%zu CSV files byte-identical across two runs of 6 commands", files)
                     : "problems:" + problems};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "oracle equivalence", oracle_equivalence},
      {2, "baseline dominance", baseline_dominance},
      {3, "dynamic-programming consistency", dp_identity},
      {4, "maximum principle", maximum_principle},
      {5, "adjoint-value link", adjoint_value_link},
      {6, "five-case consistency", five_case_consistency},
      {7, "KKT suite", kkt_suite},
      {8, "speed-holding trend", holding_trend},
      {9, "sequential controller", sequential_headline},
      {10, "grid self-convergence", grid_convergence},
      {11, "CLI determinism", cli_determinism},
  };
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), c.id) == selected.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("[%s] %2d %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), seconds);
    std::fflush(stdout);
    if (!o.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
