#include "ecodrive/pmp.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

#include "ecodrive/errors.hpp"

namespace ecodrive {

namespace {

void check_trajectory(const Trajectory& traj) {
  if (traj.empty()) throw ArgumentError("trajectory has no samples");
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const auto& s = traj.samples[i];
    if (!std::isfinite(s.t) || !std::isfinite(s.x) || !std::isfinite(s.v)) {
      throw ArgumentError("trajectory sample is not finite");
    }
    if (!(s.v >= 0.0)) throw ArgumentError("trajectory has a negative speed sample");
    if (!(std::abs(s.u) <= 1.0)) throw ArgumentError("trajectory control outside [-1, 1]");
    if (i > 0 && !(s.t > traj.samples[i - 1].t)) throw ArgumentError("trajectory times must increase");
  }
}

void check_aligned(const Trajectory& traj, const AdjointPath& adj) {
  if (adj.size() != traj.size()) throw ArgumentError("adjoint and trajectory differ in length");
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const double t = traj.samples[i].t;
    if (std::abs(adj.samples[i].t - t) > 1e-9 * std::max(1.0, std::abs(t))) {
      throw ArgumentError("adjoint sample times do not match the trajectory");
    }
  }
  if (!(adj.a0 > 0.0)) throw ArgumentError("a0 must be > 0");
}

// d psi2 / dt; psi1 is constant because no term of f depends on x1 inside
// a grade segment.
double psi2_rate(double v, double u, double psi1, double psi2, double a0, const DavisCoefficients& d) {
  const double positive = std::max(0.0, u);
  return a0 * positive - psi1 + psi2 * (d.b + 2.0 * d.c * v);
}

std::vector<double> switch_times(const Trajectory& traj) {
  std::vector<double> out;
  for (std::size_t i = 1; i < traj.size(); ++i) {
    if (traj.samples[i].u != traj.samples[i - 1].u) out.push_back(traj.samples[i].t);
  }
  return out;
}

}  // namespace

const char* to_string(ControlCase c) {
  switch (c) {
    case ControlCase::full_power: return "FULL_POWER";
    case ControlCase::hold_singular: return "HOLD_SINGULAR";
    case ControlCase::coast: return "COAST";
    case ControlCase::partial_brake_singular: return "PARTIAL_BRAKE_SINGULAR";
    case ControlCase::full_brake: return "FULL_BRAKE";
  }
  return "?";
}

double singular_tolerance(double v) { return 1e-6 * std::max(1.0, v); }

AdjointPath integrate_adjoint(const Trajectory& traj, const ProblemSpec& problem, double a0) {
  return integrate_adjoint(traj, problem, a0, {0.0, 0.0});
}

AdjointPath integrate_adjoint(const Trajectory& traj, const ProblemSpec& problem, double a0,
                              std::pair<double, double> terminal_costate) {
  if (!(a0 > 0.0)) throw ArgumentError("a0 must be > 0");
  check_trajectory(traj);
  const auto& davis = problem.vehicle.davis;
  const std::size_t n = traj.size();

  AdjointPath adj;
  adj.a0 = a0;
  adj.samples.resize(n);
  const double psi1 = terminal_costate.first;
  double psi2 = terminal_costate.second;
  adj.samples[n - 1] = {traj.samples[n - 1].t, psi1, psi2};

  for (std::size_t i = n - 1; i-- > 0;) {
    const auto& p = traj.samples[i];
    const auto& q = traj.samples[i + 1];
    const double h = q.t - p.t;
    const double v_mid = 0.5 * (p.v + q.v);
    // Backward in time: s = t_{i+1} - t, speed linear across the interval.
    auto rate = [&](double v, double y) { return -psi2_rate(v, p.u, psi1, y, a0, davis); };
    const double k1 = rate(q.v, psi2);
    const double k2 = rate(v_mid, psi2 + 0.5 * h * k1);
    const double k3 = rate(v_mid, psi2 + 0.5 * h * k2);
    const double k4 = rate(p.v, psi2 + h * k3);
    psi2 += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    adj.samples[i] = {p.t, psi1, psi2};
  }
  return adj;
}

std::pair<double, double> fit_terminal_costate(const Trajectory& traj, const ValueField& field,
                                               const ProblemSpec& problem, double a0, double window_begin,
                                               double window_end) {
  // The adjoint is affine in the terminal costate, so three integrations give
  // psi(t) = p(t) + psi1(T) q1(t) + psi2(T) q2(t).
  const AdjointPath base = integrate_adjoint(traj, problem, a0, {0.0, 0.0});
  const AdjointPath unit1 = integrate_adjoint(traj, problem, a0, {1.0, 0.0});
  const AdjointPath unit2 = integrate_adjoint(traj, problem, a0, {0.0, 1.0});

  // Normal equations of min sum (psi1 - t1)^2 + (psi2 - t2)^2.
  std::array<double, 3> m{0.0, 0.0, 0.0};  // [11, 12, 22]
  std::array<double, 2> rhs{0.0, 0.0};
  std::size_t used = 0;
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const auto& s = traj.samples[i];
    if (s.t < window_begin || s.t > window_end) continue;
    const auto [jx, jv] = field.gradient(field.level_for_time(s.t), s.x, s.v);
    const double target1 = -a0 * jx;
    const double target2 = -a0 * jv;
    const double p2 = base.samples[i].psi2;
    const double q1 = unit1.samples[i].psi2 - p2;
    const double q2 = unit2.samples[i].psi2 - p2;
    // psi1 row: [1, 0]; psi2 row: [q1, q2].
    m[0] += 1.0 + q1 * q1;
    m[1] += q1 * q2;
    m[2] += q2 * q2;
    rhs[0] += target1 + q1 * (target2 - p2);
    rhs[1] += q2 * (target2 - p2);
    ++used;
  }
  if (used < 2) throw ArgumentError("terminal costate fit needs at least two samples in the window");
  const double det = m[0] * m[2] - m[1] * m[1];
  if (!(std::abs(det) > 1e-12 * std::max(1.0, m[0] * m[2]))) {
    throw ArgumentError("terminal costate fit is singular");
  }
  return {(rhs[0] * m[2] - m[1] * rhs[1]) / det, (m[0] * rhs[1] - m[1] * rhs[0]) / det};
}

double local_hamiltonian(const State& state, double u, std::pair<double, double> psi, double a0,
                         const ProblemSpec& problem) {
  // f2 = s - r, except at rest where the clamp removes any deceleration.
  const StateDerivative f = dynamics(state, u, problem.vehicle);
  return -a0 * fuel_rate(u, state.v) + psi.first * f.dx + psi.second * f.dv;
}

double hamiltonian_scale(const State& state, std::pair<double, double> psi, double a0, const ProblemSpec& problem) {
  const double r = net_deceleration(state.x, state.v, problem.vehicle);
  return a0 * state.v + std::abs(psi.first) * state.v +
         std::abs(psi.second) * (problem.vehicle.max_traction + std::abs(r));
}

ControlCase classify_control(double psi2, double v) {
  const double eps = singular_tolerance(v);
  if (psi2 > v + eps) return ControlCase::full_power;
  if (std::abs(psi2 - v) <= eps) return ControlCase::hold_singular;
  if (std::abs(psi2) <= eps) return ControlCase::partial_brake_singular;
  if (psi2 > 0.0) return ControlCase::coast;
  return ControlCase::full_brake;
}

std::optional<double> implied_setting(ControlCase c) {
  switch (c) {
    case ControlCase::full_power: return 1.0;
    case ControlCase::coast: return 0.0;
    case ControlCase::full_brake: return -1.0;
    default: return std::nullopt;
  }
}

PmpReport check_maximum_principle(const Trajectory& traj, const AdjointPath& adj, const ProblemSpec& problem,
                                  double relative_tol) {
  check_aligned(traj, adj);
  if (!(relative_tol >= 0.0)) throw ArgumentError("relative tolerance must be >= 0");

  // Candidate order for ties: smallest |u|, then smaller u.
  std::vector<double> order = problem.controls.settings();
  std::stable_sort(order.begin(), order.end(), [](double a, double b) {
    if (std::abs(a) != std::abs(b)) return std::abs(a) < std::abs(b);
    return a < b;
  });

  PmpReport report;
  report.samples.reserve(traj.size());
  std::size_t passed = 0;
  bool in_span = false;
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const auto& s = traj.samples[i];
    const State state{s.x, s.v, s.t};
    const std::pair<double, double> psi{adj.samples[i].psi1, adj.samples[i].psi2};
    double best_u = order.front();
    double best_h = local_hamiltonian(state, best_u, psi, adj.a0, problem);
    for (std::size_t k = 1; k < order.size(); ++k) {
      const double h = local_hamiltonian(state, order[k], psi, adj.a0, problem);
      if (h > best_h) {
        best_h = h;
        best_u = order[k];
      }
    }
    PmpSample ps;
    ps.t = s.t;
    ps.applied = s.u;
    ps.maximizer = best_u;
    ps.gap = std::max(0.0, best_h - local_hamiltonian(state, s.u, psi, adj.a0, problem));
    ps.tolerance = relative_tol * hamiltonian_scale(state, psi, adj.a0, problem);
    ps.pass = ps.gap <= ps.tolerance;
    report.worst_gap = std::max(report.worst_gap, ps.gap);
    if (ps.pass) {
      ++passed;
      in_span = false;
    } else if (in_span) {
      report.failing_spans.back().end = s.t;
    } else {
      report.failing_spans.push_back({s.t, s.t});
      in_span = true;
    }
    report.samples.push_back(ps);
  }
  report.pass_fraction = static_cast<double>(passed) / static_cast<double>(traj.size());
  return report;
}

double global_hamiltonian(const Trajectory& traj, const AdjointPath& adj, double h0, const ProblemSpec& problem) {
  check_aligned(traj, adj);
  double total = h0;
  for (std::size_t i = 1; i < traj.size(); ++i) {
    const auto& p = traj.samples[i - 1];
    const auto& q = traj.samples[i];
    const auto& ap = adj.samples[i - 1];
    const auto& aq = adj.samples[i];
    // The control on [p.t, q.t) is p.u at both ends.
    const double hp = local_hamiltonian({p.x, p.v, p.t}, p.u, {ap.psi1, ap.psi2}, adj.a0, problem);
    const double hq = local_hamiltonian({q.x, q.v, q.t}, p.u, {aq.psi1, aq.psi2}, adj.a0, problem);
    total += 0.5 * (q.t - p.t) * (hp + hq);
  }
  return total;
}

LinkReport verify_adjoint_value_link(const ValueField& field, const AdjointPath& adj, const Trajectory& traj,
                                     const ProblemSpec& problem, const LinkOptions& options) {
  check_aligned(traj, adj);
  const Grid& grid = field.grid();
  const double t0 = traj.samples.front().t;
  const double span = traj.back().t - t0;
  const double w_begin = t0 + options.window_begin * span;
  const double w_end = t0 + options.window_end * span;
  const double mx = static_cast<double>(options.boundary_cells);
  const double mb = static_cast<double>(options.breakpoint_cells) * grid.x.step;

  // Interior profile breakpoints: grade changes and speed-limit changes.
  std::vector<double> breakpoints;
  for (const auto& bp : problem.vehicle.grade.breakpoints()) {
    if (bp.position > 0.0) breakpoints.push_back(bp.position);
  }
  for (std::size_t j = 0; j + 1 < problem.trip.speed_limits.size(); ++j) {
    breakpoints.push_back(problem.trip.speed_limits[j].end);
  }
  const std::vector<double> switches = switch_times(traj);

  std::vector<double> rel;
  LinkReport report;
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const auto& s = traj.samples[i];
    // Gradient reads throw if the trajectory leaves the grid.
    const auto [jx, jv] = field.gradient(field.level_for_time(s.t), s.x, s.v);
    (void)jx;
    bool skip = s.t < w_begin || s.t > w_end;
    skip = skip || s.x < grid.x.start + mx * grid.x.step || s.x > grid.x.end() - mx * grid.x.step;
    skip = skip || s.v < grid.v.start + mx * grid.v.step || s.v > grid.v.end() - mx * grid.v.step;
    for (double b : breakpoints) skip = skip || std::abs(s.x - b) < mb;
    for (double sw : switches) skip = skip || std::abs(s.t - sw) < options.switch_guard;
    if (skip) {
      ++report.excluded;
      continue;
    }
    const double reference = -adj.a0 * jv;
    const double d = std::abs(adj.samples[i].psi2 - reference) / std::max(std::abs(reference), options.floor);
    rel.push_back(d);
    report.max = std::max(report.max, d);
  }
  report.compared = rel.size();
  if (!rel.empty()) {
    const auto mid = rel.begin() + static_cast<std::ptrdiff_t>(rel.size() / 2);
    std::nth_element(rel.begin(), mid, rel.end());
    report.median = *mid;
    if (rel.size() % 2 == 0) {
      report.median = 0.5 * (report.median + *std::max_element(rel.begin(), mid));
    }
  }
  return report;
}

}  // namespace ecodrive
