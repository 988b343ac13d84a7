#pragma once

// Semi-Lagrangian dynamic programming for the minimum-cost function J*(x, v, t).
//
// The backward sweep evaluates, at every node and time level,
//
//   J(x, t) = min_u { running(x, u) * dt + J(foot(x, u), t + dt) }
//
// where foot(x, u) is the RK4 foot point of the characteristic and J at the
// foot point is read by bilinear interpolation. Values at t = T are the
// terminal penalty.

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "ecodrive/model.hpp"

namespace ecodrive {

/// Uniform axis start + i * step, i in [0, count).
struct Axis {
  double start = 0.0;
  double step = 0.0;
  std::size_t count = 0;

  double at(std::size_t i) const { return start + static_cast<double>(i) * step; }
  double end() const { return at(count - 1); }
};

struct GridResolution {
  std::size_t nx = 401;
  std::size_t nv = 101;
  std::size_t nt = 241;
  std::size_t substeps = 0;  // per time level; 0 picks the fewest that meet the foot-point bound

  bool operator==(const GridResolution&) const = default;
};

struct Grid {
  Axis x;
  Axis v;
  Axis t;
  // Integration sub-steps per time level. The control is held across a
  // level. With one sub-step the foot point is read directly; with more the
  // characteristic is traced through all of them and read once at its end.
  std::size_t substeps = 1;

  double dt() const { return t.step; }
  double substep_dt() const { return t.step / static_cast<double>(substeps); }
  std::size_t nodes_per_level() const { return x.count * v.count; }
};

/// Uniform axes over [0, 1.05 L] x [0, 1.2 max(M_j)] x [t_start, T].
/// A zero-length horizon yields a single time level.
Grid build_grid(const ProblemSpec& problem, GridResolution resolution, double t_start = 0.0);

/// Same axes and time step as `grid`, restricted to levels [first_level, end].
Grid tail_grid(const Grid& grid, std::size_t first_level);

/// Throws ConfigurationError when a sub-step moves a foot point more than one
/// cell along either axis.
void check_foot_point_bound(const Grid& grid, const ProblemSpec& problem);

class ValueField {
 public:
  /// Holds time levels [first_level, last_level].
  ValueField(Grid grid, std::size_t first_level, std::size_t last_level);

  const Grid& grid() const { return grid_; }

  std::size_t first_stored_level() const { return first_level_; }
  std::size_t last_stored_level() const { return last_level_; }
  bool has_level(std::size_t level) const { return level >= first_level_ && level <= last_level_; }

  /// Row-major (x, v) block of one stored level.
  const double* level_data(std::size_t level) const { return values_.data() + offset(level, 0, 0); }
  double* level_data(std::size_t level) { return values_.data() + offset(level, 0, 0); }

  double value(std::size_t level, std::size_t ix, std::size_t iv) const { return values_[offset(level, ix, iv)]; }
  double& value(std::size_t level, std::size_t ix, std::size_t iv) { return values_[offset(level, ix, iv)]; }
  std::uint8_t policy(std::size_t level, std::size_t ix, std::size_t iv) const {
    return policy_[offset(level, ix, iv)];
  }
  std::uint8_t& policy(std::size_t level, std::size_t ix, std::size_t iv) {
    return policy_[offset(level, ix, iv)];
  }

  /// Nearest time level for t (clamped to the axis).
  std::size_t level_for_time(double t) const;

  /// Bilinear interpolation at a stored level; points must lie in the extent.
  double interpolate(std::size_t level, double x, double v) const;

  /// Bilinear interpolation that clamps points beyond the upper x / v ends
  /// and adds the terminal-penalty slope times the excess.
  double interpolate_extended(std::size_t level, double x, double v, const ProblemSpec& problem) const;

  /// Central-difference gradient (dJ/dx, dJ/dv) at a stored level, one-sided
  /// at the axis ends.
  std::pair<double, double> gradient(std::size_t level, double x, double v) const;

 private:
  std::size_t offset(std::size_t level, std::size_t ix, std::size_t iv) const {
    return ((level - first_level_) * grid_.x.count + ix) * grid_.v.count + iv;
  }

  Grid grid_;
  std::size_t first_level_ = 0;
  std::size_t last_level_ = 0;
  std::vector<double> values_;
  std::vector<std::uint8_t> policy_;
};

struct SolveOptions {
  // false keeps only the first `leading_levels` levels in memory; one level
  // is enough for J*(start) queries.
  bool keep_all_levels = true;
  std::size_t leading_levels = 1;
};

/// Backward sweep from the terminal penalty.
ValueField solve(const ProblemSpec& problem, const Grid& grid, SolveOptions options = {});

/// f0 + gradJ . f with f0 = [u]_+ v (minimization convention).
double hamiltonian(const State& state, double u, std::pair<double, double> grad_j, const ProblemSpec& problem);

struct ControlChoice {
  double u = 0.0;
  std::size_t index = 0;
  double cost = 0.0;         // minimized one-step Bellman cost
  double hamiltonian = 0.0;  // (cost - J(x, t + dt)) / dt, discrete min_u H
};

/// Minimizer of the one-step semi-Lagrangian cost at an arbitrary state.
/// Ties go to the smallest |u|, then to the smaller u.
ControlChoice optimal_control(const State& state, const ValueField& field, const ProblemSpec& problem);

/// Bilinear in (x, v) at the nearest stored time level.
double value_at(const ValueField& field, const State& state);

/// Closed-loop simulation of the feedback policy from `start` to the end of the
/// grid's time axis with the problem's integrator step.
Trajectory rollout(const ValueField& field, const State& start, const ProblemSpec& problem);

/// Worst |J(x(t), t) + running cost accumulated up to t - J(x0, 0)| / J(x0, 0)
/// over the samples of a rollout of `field`.
double dp_consistency(const ValueField& field, const Trajectory& traj, const ProblemSpec& problem);

struct BellmanResidualStats {
  double median = 0.0;  // median of |residual| / local scale
  double p90 = 0.0;
  std::size_t samples = 0;
};

/// Residual of dJ/dt + min_u H(x, u, grad J) over interior nodes, forward
/// difference in time, normalized by the local Hamiltonian term magnitude.
BellmanResidualStats bellman_residuals(const ValueField& field, const ProblemSpec& problem,
                                       std::size_t level_stride = 10);

}  // namespace ecodrive
