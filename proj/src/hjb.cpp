#include "ecodrive/hjb.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "ecodrive/errors.hpp"

namespace ecodrive {

namespace {

constexpr double kExtentSlack = 1e-9;

bool within(double value, double lo, double hi) {
  const double slack = kExtentSlack * std::max(1.0, std::abs(hi - lo));
  return value >= lo - slack && value <= hi + slack;
}

// Control indices in tie-break order: smallest |u| first, then smaller u.
std::vector<std::size_t> tie_break_order(const ControlSet& controls) {
  std::vector<std::size_t> order(controls.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double ua = controls[a];
    const double ub = controls[b];
    if (std::abs(ua) != std::abs(ub)) return std::abs(ua) < std::abs(ub);
    return ua < ub;
  });
  return order;
}

bool strictly_better(double candidate, double incumbent) {
  if (std::isinf(incumbent)) return candidate < incumbent;
  return candidate < incumbent - 1e-12 * std::max(1.0, std::abs(incumbent));
}

struct Cell {
  std::size_t i;
  double w;
};

Cell locate(const Axis& axis, double value) {
  const double f = (value - axis.start) / axis.step;
  if (f <= 0.0) return {0, 0.0};
  const auto last = axis.count - 2;
  auto i = static_cast<std::size_t>(f);
  if (i > last) i = last;
  return {i, std::min(1.0, f - static_cast<double>(i))};
}

// Bilinear read of a row-major (x, v) block, with the terminal-penalty slope
// extension beyond the upper ends of either axis.
double bilinear_extended(const double* data, const Grid& grid, double x, double v, double slope_x,
                         double slope_v) {
  double extra = 0.0;
  const double x_end = grid.x.end();
  const double v_end = grid.v.end();
  if (x > x_end) {
    extra += slope_x * (x - x_end);
    x = x_end;
  }
  if (v > v_end) {
    extra += slope_v * (v - v_end);
    v = v_end;
  }
  const Cell cx = locate(grid.x, x);
  const Cell cv = locate(grid.v, v);
  const std::size_t nv = grid.v.count;
  const double* row0 = data + cx.i * nv + cv.i;
  const double* row1 = row0 + nv;
  const double lo = row0[0] + cv.w * (row0[1] - row0[0]);
  const double hi = row1[0] + cv.w * (row1[1] - row1[0]);
  return lo + cx.w * (hi - lo) + extra;
}

VehicleParams with_constant_grade(const VehicleParams& params, double grade) {
  VehicleParams p = params;
  p.grade = GradeProfile({{0.0, grade}});
  return p;
}

struct FootDisplacement {
  double dx;
  double dv;
};

// Foot-point displacement per (grade segment, velocity node, control) over one
// sub-step. The state equations depend on position only through the grade,
// which is frozen at the node's segment for the sub-step.
std::vector<FootDisplacement> foot_table(const Grid& grid, const ProblemSpec& problem) {
  const auto& breakpoints = problem.vehicle.grade.breakpoints();
  const std::size_t nu = problem.controls.size();
  const std::size_t nv = grid.v.count;
  const double h = grid.substep_dt();
  std::vector<FootDisplacement> table(breakpoints.size() * nv * nu);
  for (std::size_t g = 0; g < breakpoints.size(); ++g) {
    const VehicleParams params = with_constant_grade(problem.vehicle, breakpoints[g].accel);
    for (std::size_t iv = 0; iv < nv; ++iv) {
      const State s{0.0, grid.v.at(iv), 0.0};
      for (std::size_t iu = 0; iu < nu; ++iu) {
        const State next = step(s, problem.controls[iu], h, params);
        table[(g * nv + iv) * nu + iu] = {next.x - s.x, next.v - s.v};
      }
    }
  }
  return table;
}


double foot_ratio(const Grid& grid, const ProblemSpec& problem) {
  double worst_x = 0.0;
  double worst_v = 0.0;
  for (const auto& d : foot_table(grid, problem)) {
    worst_x = std::max(worst_x, std::abs(d.dx));
    worst_v = std::max(worst_v, std::abs(d.dv));
  }
  return std::max(worst_x / grid.x.step, worst_v / grid.v.step);
}

// Fewest sub-steps that are no longer than the integrator step and keep every
// foot point within one cell.
std::size_t automatic_substeps(Grid grid, const ProblemSpec& problem) {
  if (grid.t.count < 2) return 1;
  grid.substeps = static_cast<std::size_t>(std::max(1.0, std::ceil(grid.dt() / problem.integrator_dt - 1e-9)));
  constexpr std::size_t kLimit = 1000000;
  while (grid.substeps <= kLimit) {
    const double ratio = foot_ratio(grid, problem);
    if (ratio <= 1.0) return grid.substeps;
    grid.substeps = std::max(grid.substeps + 1, static_cast<std::size_t>(std::ceil(grid.substeps * ratio)));
  }
  throw ConfigurationError("no sub-step count up to 10^6 satisfies the foot-point bound");
}
}  // namespace

Grid build_grid(const ProblemSpec& problem, GridResolution resolution, double t_start) {
  problem.validate();
  if (resolution.nx < 3 || resolution.nv < 3 || resolution.nt < 3) {
    throw ArgumentError("grid resolution components must be >= 3");
  }
  const auto& trip = problem.trip;
  if (!(t_start >= 0.0) || t_start > trip.horizon) {
    throw ArgumentError("grid start time must lie in [0, T]");
  }
  const double x_span = trip.length > 0.0 ? 1.05 * trip.length : 1.0;
  const double v_max = velocity_ceiling(trip);
  if (!(v_max > 0.0) || !(x_span > 0.0)) throw ArgumentError("degenerate trip: empty state space");
  if (trip.v_start > v_max) throw ArgumentError("v_start exceeds the velocity axis (1.2 x max limit)");

  Grid grid;
  grid.x = {0.0, x_span / static_cast<double>(resolution.nx - 1), resolution.nx};
  grid.v = {0.0, v_max / static_cast<double>(resolution.nv - 1), resolution.nv};
  const double duration = trip.horizon - t_start;
  if (duration > 0.0) {
    grid.t = {t_start, duration / static_cast<double>(resolution.nt - 1), resolution.nt};
  } else {
    grid.t = {t_start, 0.0, 1};
  }
  grid.substeps = resolution.substeps;
  if (grid.substeps == 0) grid.substeps = automatic_substeps(grid, problem);
  return grid;
}

Grid tail_grid(const Grid& grid, std::size_t first_level) {
  if (first_level >= grid.t.count) throw ArgumentError("tail grid start level is past the time axis");
  Grid tail = grid;
  tail.t = {grid.t.at(first_level), grid.t.step, grid.t.count - first_level};
  if (tail.t.count == 1) tail.t.step = 0.0;
  return tail;
}

void check_foot_point_bound(const Grid& grid, const ProblemSpec& problem) {
  if (grid.t.count < 2) return;
  const auto table = foot_table(grid, problem);
  const double tol = 1.0 + 1e-9;
  double worst_x = 0.0;
  double worst_v = 0.0;
  for (const auto& d : table) {
    worst_x = std::max(worst_x, std::abs(d.dx));
    worst_v = std::max(worst_v, std::abs(d.dv));
  }
  if (worst_x > grid.x.step * tol || worst_v > grid.v.step * tol) {
    std::ostringstream os;
    os << "foot-point bound violated for dt_grid = " << grid.dt() << " s (sub-step " << grid.substep_dt()
       << " s): max displacement (" << worst_x << " m, " << worst_v << " m/s) exceeds one cell ("
       << grid.x.step << " m, " << grid.v.step << " m/s)";
    throw ConfigurationError(os.str());
  }
}

ValueField::ValueField(Grid grid, std::size_t first_level, std::size_t last_level)
    : grid_(grid), first_level_(first_level), last_level_(last_level) {
  if (last_level < first_level || last_level >= grid_.t.count) throw ArgumentError("invalid stored level range");
  const std::size_t n = (last_level - first_level + 1) * grid_.nodes_per_level();
  values_.assign(n, 0.0);
  policy_.assign(n, 0);
}

std::size_t ValueField::level_for_time(double t) const {
  if (grid_.t.count == 1) return 0;
  const double f = std::round((t - grid_.t.start) / grid_.t.step);
  if (f <= 0.0) return 0;
  return std::min(static_cast<std::size_t>(f), grid_.t.count - 1);
}

double ValueField::interpolate(std::size_t level, double x, double v) const {
  if (!has_level(level)) throw ExtrapolationError("value level is not stored");
  if (!within(x, grid_.x.start, grid_.x.end()) || !within(v, grid_.v.start, grid_.v.end())) {
    std::ostringstream os;
    os << "state (x = " << x << ", v = " << v << ") lies outside the value grid";
    throw ExtrapolationError(os.str());
  }
  return bilinear_extended(level_data(level), grid_, std::clamp(x, grid_.x.start, grid_.x.end()),
                           std::clamp(v, grid_.v.start, grid_.v.end()), 0.0, 0.0);
}

double ValueField::interpolate_extended(std::size_t level, double x, double v, const ProblemSpec& problem) const {
  if (!has_level(level)) throw ExtrapolationError("value level is not stored");
  const auto [sx, sv] = terminal_penalty_slopes(problem);
  return bilinear_extended(level_data(level), grid_, std::max(x, grid_.x.start), std::max(v, grid_.v.start), sx,
                           sv);
}

std::pair<double, double> ValueField::gradient(std::size_t level, double x, double v) const {
  auto diff = [&](const Axis& axis, double at, auto&& eval) {
    double lo = at - axis.step;
    double hi = at + axis.step;
    if (lo < axis.start) lo = axis.start;
    if (hi > axis.end()) hi = axis.end();
    return (eval(hi) - eval(lo)) / (hi - lo);
  };
  const double gx = diff(grid_.x, x, [&](double xs) { return interpolate(level, xs, v); });
  const double gv = diff(grid_.v, v, [&](double vs) { return interpolate(level, x, vs); });
  return {gx, gv};
}

ValueField solve(const ProblemSpec& problem, const Grid& grid, SolveOptions options) {
  problem.validate();
  if (grid.x.count < 3 || grid.v.count < 3) throw ArgumentError("grid axes need at least 3 points");
  if (problem.controls.size() > 255) throw ArgumentError("at most 255 control settings are supported");
  check_foot_point_bound(grid, problem);

  const std::size_t nt = grid.t.count;
  const std::size_t nx = grid.x.count;
  const std::size_t nv = grid.v.count;
  const std::size_t nodes = nx * nv;
  const std::size_t last = nt - 1;

  if (!options.keep_all_levels && options.leading_levels < 1) throw ArgumentError("leading_levels must be >= 1");
  ValueField field(grid, 0, options.keep_all_levels ? last : std::min(last, options.leading_levels - 1));

  // Terminal level.
  std::vector<double> terminal(nodes);
  for (std::size_t ix = 0; ix < nx; ++ix) {
    for (std::size_t iv = 0; iv < nv; ++iv) {
      terminal[ix * nv + iv] = terminal_penalty(grid.x.at(ix), grid.v.at(iv), problem);
    }
  }
  if (nt == 1) {
    std::copy(terminal.begin(), terminal.end(), field.level_data(0));
    const auto zero = problem.controls.index_of(0.0);
    for (std::size_t ix = 0; ix < nx; ++ix) {
      for (std::size_t iv = 0; iv < nv; ++iv) field.policy(0, ix, iv) = static_cast<std::uint8_t>(*zero);
    }
    return field;
  }

  const std::size_t nu = problem.controls.size();
  const double h = grid.substep_dt();
  const auto [slope_x, slope_v] = terminal_penalty_slopes(problem);
  const auto feet = foot_table(grid, problem);
  const auto order = tie_break_order(problem.controls);

  std::vector<std::size_t> segment(nx);
  for (std::size_t ix = 0; ix < nx; ++ix) segment[ix] = problem.vehicle.grade.segment_index(grid.x.at(ix));

  std::vector<double> fuel(nv * nu);
  for (std::size_t iv = 0; iv < nv; ++iv) {
    for (std::size_t iu = 0; iu < nu; ++iu) fuel[iv * nu + iu] = fuel_rate(problem.controls[iu], grid.v.at(iv)) * h;
  }
  std::vector<double> penalty(nodes);
  for (std::size_t ix = 0; ix < nx; ++ix) {
    for (std::size_t iv = 0; iv < nv; ++iv) {
      penalty[ix * nv + iv] = speed_limit_penalty(grid.x.at(ix), grid.v.at(iv), problem) * h;
    }
  }

  // On a uniform grid the foot displacement depends only on (segment, v node,
  // control), so its cell offset and weights are shared by every x node.
  struct Stencil {
    std::ptrdiff_t di;
    double wx;
    std::size_t jv;
    double wv;
    bool v_inside;
  };
  std::vector<Stencil> stencils(feet.size());
  for (std::size_t k = 0; k < feet.size(); ++k) {
    const std::size_t iv = (k / nu) % nv;
    const double fx = feet[k].dx / grid.x.step;
    const double fv = std::max(0.0, (grid.v.at(iv) + feet[k].dv - grid.v.start) / grid.v.step);
    const double jv = std::floor(fv);
    Stencil& st = stencils[k];
    st.di = static_cast<std::ptrdiff_t>(std::floor(fx));
    st.wx = fx - static_cast<double>(st.di);
    st.v_inside = jv + 1.0 < static_cast<double>(nv);
    st.jv = st.v_inside ? static_cast<std::size_t>(jv) : 0;
    st.wv = fv - jv;
  }
  const auto nx_signed = static_cast<std::ptrdiff_t>(nx);

  // One sub-step of W_out = running * h + W_in(foot) for a fixed control.
  auto substep = [&](const double* in, double* out, std::size_t iu) {
    for (std::size_t ix = 0; ix < nx; ++ix) {
      const double x = grid.x.at(ix);
      const std::size_t base = segment[ix] * nv * nu;
      for (std::size_t iv = 0; iv < nv; ++iv) {
        const Stencil& st = stencils[base + iv * nu + iu];
        const std::ptrdiff_t i0 = static_cast<std::ptrdiff_t>(ix) + st.di;
        double w;
        if (st.v_inside && i0 >= 0 && i0 + 1 < nx_signed) {
          const double* p = in + static_cast<std::size_t>(i0) * nv + st.jv;
          const double lo = p[0] + st.wv * (p[1] - p[0]);
          const double hi = p[nv] + st.wv * (p[nv + 1] - p[nv]);
          w = lo + st.wx * (hi - lo);
        } else {
          const FootDisplacement& d = feet[base + iv * nu + iu];
          w = bilinear_extended(in, grid, x + d.dx, grid.v.at(iv) + d.dv, slope_x, slope_v);
        }
        out[ix * nv + iv] = fuel[iv * nu + iu] + penalty[ix * nv + iv] + w;
      }
    }
  };

  // With several sub-steps the control is held over the whole level: the
  // characteristic is integrated through all of them and the value is read
  // once at its end, exactly as optimal_control evaluates it. A path that
  // stays inside one grade segment and one limit segment depends on the start
  // only through v, so those are cached per (segments, v node, control).
  struct Path {
    double dx = 0.0;
    double dv = 0.0;
    double cost = 0.0;
  };
  const auto& limits = problem.trip.speed_limits;
  const std::size_t n_limits = limits.size();
  std::vector<std::size_t> limit_segment(nx);
  for (std::size_t ix = 0; ix < nx; ++ix) limit_segment[ix] = problem.trip.limit_segment_index(grid.x.at(ix));
  std::vector<Path> paths;
  std::vector<char> path_ready;
  auto trace = [&](State s, double u, const ProblemSpec& local) {
    const double x0 = s.x;
    const double v0 = s.v;
    double cost = 0.0;
    for (std::size_t k = 0; k < grid.substeps; ++k) {
      cost += running_cost(s.x, s.v, u, local) * h;
      s = step(s, u, h, local.vehicle);
    }
    return Path{s.x - x0, s.v - v0, cost};
  };
  if (grid.substeps > 1) {
    paths.resize(problem.vehicle.grade.breakpoints().size() * n_limits * nv * nu);
    path_ready.assign(problem.vehicle.grade.breakpoints().size() * n_limits, 0);
    for (std::size_t ix = 0; ix < nx; ++ix) {
      const std::size_t pair = segment[ix] * n_limits + limit_segment[ix];
      if (path_ready[pair]) continue;
      path_ready[pair] = 1;
      ProblemSpec local = problem;
      local.vehicle = with_constant_grade(problem.vehicle, problem.vehicle.grade.breakpoints()[segment[ix]].accel);
      local.trip.speed_limits = {{std::numeric_limits<double>::infinity(), limits[limit_segment[ix]].limit}};
      for (std::size_t iv = 0; iv < nv; ++iv) {
        for (std::size_t iu = 0; iu < nu; ++iu) {
          paths[(pair * nv + iv) * nu + iu] = trace({0.0, grid.v.at(iv), 0.0}, problem.controls[iu], local);
        }
      }
    }
  }
  std::vector<Path> crossing;
  if (grid.substeps > 1) crossing.assign(nodes * nu, Path{0.0, 0.0, std::numeric_limits<double>::quiet_NaN()});
  auto traced = [&](const double* in, double* out, std::size_t iu) {
    for (std::size_t ix = 0; ix < nx; ++ix) {
      const double x = grid.x.at(ix);
      const std::size_t pair = segment[ix] * n_limits + limit_segment[ix];
      for (std::size_t iv = 0; iv < nv; ++iv) {
        Path path = paths[(pair * nv + iv) * nu + iu];
        // x never decreases along a path, so equal segments at both ends
        // mean the path never left them.
        const double x_end = x + path.dx;
        if (problem.vehicle.grade.segment_index(x_end) != segment[ix] ||
            problem.trip.limit_segment_index(x_end) != limit_segment[ix]) {
          // Costs do not depend on t, so a crossing path is the same on every level.
          Path& cached = crossing[(ix * nv + iv) * nu + iu];
          if (std::isnan(cached.cost)) cached = trace({x, grid.v.at(iv), 0.0}, problem.controls[iu], problem);
          path = cached;
        }
        out[ix * nv + iv] = path.cost + bilinear_extended(in, grid, std::max(x + path.dx, grid.x.start),
                                                          std::max(grid.v.at(iv) + path.dv, grid.v.start),
                                                          slope_x, slope_v);
      }
    }
  };

  std::vector<double> next = terminal;
  std::vector<double> current(nodes);
  std::vector<std::uint8_t> current_policy(nodes);
  std::vector<double> work_a(nodes);

  if (field.has_level(last)) {
    std::copy(terminal.begin(), terminal.end(), field.level_data(last));
    const auto zero = *problem.controls.index_of(0.0);
    for (std::size_t ix = 0; ix < nx; ++ix) {
      for (std::size_t iv = 0; iv < nv; ++iv) field.policy(last, ix, iv) = static_cast<std::uint8_t>(zero);
    }
  }

  for (std::size_t level = last; level-- > 0;) {
    std::fill(current.begin(), current.end(), std::numeric_limits<double>::infinity());
    for (std::size_t iu : order) {
      const double* in = work_a.data();
      if (grid.substeps == 1) {
        substep(next.data(), work_a.data(), iu);
      } else {
        traced(next.data(), work_a.data(), iu);
      }
      for (std::size_t n = 0; n < nodes; ++n) {
        if (strictly_better(in[n], current[n])) {
          current[n] = in[n];
          current_policy[n] = static_cast<std::uint8_t>(iu);
        }
      }
    }
    if (field.has_level(level)) {
      std::copy(current.begin(), current.end(), field.level_data(level));
      for (std::size_t ix = 0; ix < nx; ++ix) {
        for (std::size_t iv = 0; iv < nv; ++iv) field.policy(level, ix, iv) = current_policy[ix * nv + iv];
      }
    }
    std::swap(next, current);
  }
  return field;
}

double hamiltonian(const State& state, double u, std::pair<double, double> grad_j, const ProblemSpec& problem) {
  const StateDerivative f = dynamics(state, u, problem.vehicle);
  return fuel_rate(u, state.v) + grad_j.first * f.dx + grad_j.second * f.dv;
}

namespace {

void require_in_extent(const Grid& grid, const State& state) {
  if (!within(state.x, grid.x.start, grid.x.end()) || !within(state.v, grid.v.start, grid.v.end()) ||
      !within(state.t, grid.t.start, grid.t.end())) {
    std::ostringstream os;
    os << "state (x = " << state.x << ", v = " << state.v << ", t = " << state.t
       << ") lies outside the value grid";
    throw ExtrapolationError(os.str());
  }
}

}  // namespace

ControlChoice optimal_control(const State& state, const ValueField& field, const ProblemSpec& problem) {
  const Grid& grid = field.grid();
  require_in_extent(grid, state);
  const std::size_t level = field.level_for_time(state.t);
  const bool terminal = level + 1 >= grid.t.count;
  const double step_dt = grid.t.count > 1 ? grid.dt() : problem.integrator_dt;
  const double h = step_dt / static_cast<double>(grid.substeps);

  auto continuation = [&](double x, double v) {
    if (terminal) return terminal_penalty(x, v, problem);
    return field.interpolate_extended(level + 1, x, v, problem);
  };

  const auto order = tie_break_order(problem.controls);
  ControlChoice best;
  best.cost = std::numeric_limits<double>::infinity();
  for (std::size_t iu : order) {
    const double u = problem.controls[iu];
    State s = state;
    double cost = 0.0;
    for (std::size_t k = 0; k < grid.substeps; ++k) {
      cost += running_cost(s.x, s.v, u, problem) * h;
      s = step(s, u, h, problem.vehicle);
    }
    cost += continuation(s.x, s.v);
    if (strictly_better(cost, best.cost)) {
      best.u = u;
      best.index = iu;
      best.cost = cost;
    }
  }
  best.hamiltonian = (best.cost - continuation(state.x, state.v)) / step_dt;
  return best;
}

double value_at(const ValueField& field, const State& state) {
  require_in_extent(field.grid(), state);
  return field.interpolate(field.level_for_time(state.t), state.x, state.v);
}

Trajectory rollout(const ValueField& field, const State& start, const ProblemSpec& problem) {
  const Grid& grid = field.grid();
  require_in_extent(grid, start);
  Trajectory traj;
  State state = start;
  const std::size_t first = field.level_for_time(start.t);
  const std::size_t last = grid.t.count - 1;
  if (first < last) {
    const auto per_level =
        static_cast<std::size_t>(std::max(1.0, std::ceil(grid.dt() / problem.integrator_dt - 1e-9)));
    const double h = grid.dt() / static_cast<double>(per_level);
    for (std::size_t level = first; level < last; ++level) {
      state.t = grid.t.at(level);
      const double u = optimal_control(state, field, problem).u;
      for (std::size_t k = 0; k < per_level; ++k) {
        state.t = grid.t.at(level) + static_cast<double>(k) * h;
        traj.samples.push_back({state.t, state.x, state.v, u});
        state = step(state, u, h, problem.vehicle);
      }
    }
    state.t = grid.t.at(last);
    // The last sample may have left the extent through the upper x / v ends;
    // its control is the terminal minimizer evaluated on the clamped state.
    State clamped = state;
    clamped.x = std::min(clamped.x, grid.x.end());
    clamped.v = std::min(clamped.v, grid.v.end());
    traj.samples.push_back({state.t, state.x, state.v, optimal_control(clamped, field, problem).u});
  } else {
    state.t = grid.t.at(last);
    traj.samples.push_back({state.t, state.x, state.v, optimal_control(state, field, problem).u});
  }
  traj.refresh_switching_times();
  return traj;
}

double dp_consistency(const ValueField& field, const Trajectory& traj, const ProblemSpec& problem) {
  if (traj.empty()) throw ArgumentError("trajectory has no samples");
  const auto& first = traj.samples.front();
  const double j0 = value_at(field, {first.x, first.v, first.t});
  const double scale = std::max(std::abs(j0), 1e-12);
  double accumulated = 0.0;
  double worst = 0.0;
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const auto& s = traj.samples[i];
    const double j = value_at(field, {s.x, s.v, s.t});
    worst = std::max(worst, std::abs(j + accumulated - j0) / scale);
    if (i + 1 < traj.size()) accumulated += running_cost(s.x, s.v, s.u, problem) * (traj.samples[i + 1].t - s.t);
  }
  return worst;
}

BellmanResidualStats bellman_residuals(const ValueField& field, const ProblemSpec& problem, std::size_t level_stride) {
  const Grid& grid = field.grid();
  if (level_stride == 0) throw ArgumentError("level_stride must be >= 1");
  std::vector<double> normalized;
  const std::size_t nx = grid.x.count;
  const std::size_t nv = grid.v.count;
  for (std::size_t level = field.first_stored_level(); level + 1 <= field.last_stored_level();
       level += level_stride) {
    for (std::size_t ix = 1; ix + 1 < nx; ++ix) {
      for (std::size_t iv = 1; iv + 1 < nv; ++iv) {
        const State s{grid.x.at(ix), grid.v.at(iv), grid.t.at(level)};
        const double dj_dt = (field.value(level + 1, ix, iv) - field.value(level, ix, iv)) / grid.dt();
        const std::pair<double, double> grad{
            (field.value(level + 1, ix + 1, iv) - field.value(level + 1, ix - 1, iv)) / (2.0 * grid.x.step),
            (field.value(level + 1, ix, iv + 1) - field.value(level + 1, ix, iv - 1)) / (2.0 * grid.v.step)};
        double h_min = std::numeric_limits<double>::infinity();
        double scale = 0.0;
        const double pen = speed_limit_penalty(s.x, s.v, problem);
        for (double u : problem.controls.settings()) {
          const StateDerivative f = dynamics(s, u, problem.vehicle);
          const double f0 = fuel_rate(u, s.v) + pen;
          const double transport = grad.first * f.dx + grad.second * f.dv;
          h_min = std::min(h_min, f0 + transport);
          scale = std::max(scale, std::abs(f0) + std::abs(transport));
        }
        if (scale < 1e-9) continue;
        normalized.push_back(std::abs(dj_dt + h_min) / scale);
      }
    }
  }
  BellmanResidualStats stats;
  stats.samples = normalized.size();
  if (normalized.empty()) return stats;
  auto quantile = [&](double q) {
    auto k = static_cast<std::size_t>(q * static_cast<double>(normalized.size() - 1));
    std::nth_element(normalized.begin(), normalized.begin() + static_cast<std::ptrdiff_t>(k), normalized.end());
    return normalized[k];
  };
  stats.median = quantile(0.5);
  stats.p90 = quantile(0.9);
  return stats;
}

}  // namespace ecodrive
