#pragma once

// Longitudinal vehicle model: resistance, traction, dynamics, fuel, and the
// full problem instance shared by every solver and checker.

#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace ecodrive {

/// Quadratic running resistance r0(v) = a + b v + c v^2 (per unit mass).
struct DavisCoefficients {
  double a = 0.05;    // m/s^2
  double b = 0.005;   // 1/s
  double c = 0.0005;  // 1/m

  void validate() const;
  bool operator==(const DavisCoefficients&) const = default;
};

struct GradeBreakpoint {
  double position = 0.0;  // m
  double accel = 0.0;     // gravitational component along the track, m/s^2
  bool operator==(const GradeBreakpoint&) const = default;
};

/// Piecewise-constant grade g(x). Breakpoint i covers [position_i, position_{i+1}).
/// Positions before the first or after the last breakpoint use the nearest segment.
class GradeProfile {
 public:
  GradeProfile();  // flat
  explicit GradeProfile(std::vector<GradeBreakpoint> breakpoints);

  double at(double x) const;
  std::size_t segment_index(double x) const;
  const std::vector<GradeBreakpoint>& breakpoints() const { return breakpoints_; }
  bool is_flat() const;

  bool operator==(const GradeProfile&) const = default;

 private:
  std::vector<GradeBreakpoint> breakpoints_;
};

enum class TractionModel { affine };

struct VehicleParams {
  DavisCoefficients davis;
  GradeProfile grade;
  double max_traction = 1.0;  // A, m/s^2; s = u * A
  TractionModel traction_model = TractionModel::affine;

  void validate() const;
  bool operator==(const VehicleParams&) const = default;
};

/// Finite set of control settings -1 = u^1 < ... < u^n = 1 containing 0.
class ControlSet {
 public:
  ControlSet();  // {-1, -0.5, 0, 0.5, 1}
  explicit ControlSet(std::vector<double> settings);

  static ControlSet three_level() { return ControlSet({-1.0, 0.0, 1.0}); }
  static ControlSet uniform(std::size_t count);

  std::size_t size() const { return settings_.size(); }
  double operator[](std::size_t i) const { return settings_[i]; }
  const std::vector<double>& settings() const { return settings_; }
  std::optional<std::size_t> index_of(double u) const;

  bool operator==(const ControlSet&) const = default;

 private:
  std::vector<double> settings_;
};

struct SpeedLimitSegment {
  double end = 0.0;    // X_j, m; the segment starts at the previous end (or 0)
  double limit = 0.0;  // M_j, m/s
  bool operator==(const SpeedLimitSegment&) const = default;
};

struct TripSpec {
  double length = 1000.0;  // L, m
  double horizon = 120.0;  // T, s
  double v_start = 0.0;    // v1
  double v_end = 0.0;      // v2
  std::vector<SpeedLimitSegment> speed_limits{{1000.0, 20.0}};

  void validate() const;
  double speed_limit_at(double x) const;
  std::size_t limit_segment_index(double x) const;
  double max_speed_limit() const;
  double min_speed_limit() const;
  bool operator==(const TripSpec&) const = default;
};

struct State {
  double x = 0.0;  // position, m
  double v = 0.0;  // velocity, m/s
  double t = 0.0;  // time, s
};

struct TrajectorySample {
  double t = 0.0;
  double x = 0.0;
  double v = 0.0;
  double u = 0.0;  // control applied on [t, t + dt)
  bool operator==(const TrajectorySample&) const = default;
};

struct Trajectory {
  std::vector<TrajectorySample> samples;
  std::vector<double> switching_times;

  bool empty() const { return samples.empty(); }
  std::size_t size() const { return samples.size(); }
  const TrajectorySample& back() const { return samples.back(); }

  /// Recomputes switching_times from the sample controls.
  void refresh_switching_times();
  bool operator==(const Trajectory&) const = default;
};

enum class Objective { fuel };

struct PenaltyWeights {
  std::optional<double> terminal_kappa;  // unset until calibrated
  double speed_rho = 1.0;

  double kappa() const;  // throws ArgumentError when uncalibrated
  bool operator==(const PenaltyWeights&) const = default;
};

struct ProblemSpec {
  VehicleParams vehicle;
  TripSpec trip;
  ControlSet controls;
  Objective objective = Objective::fuel;
  PenaltyWeights penalties;
  double integrator_dt = 0.1;  // s

  void validate() const;
  bool operator==(const ProblemSpec&) const = default;
};

struct StateDerivative {
  double dx = 0.0;
  double dv = 0.0;
};

double davis_resistance(double v, const DavisCoefficients& coeffs);
double net_deceleration(double x, double v, const VehicleParams& params);
double traction(double x, double v, double u, const VehicleParams& params);
StateDerivative dynamics(const State& state, double u, const VehicleParams& params);

/// Classical RK4 with the rest clamp applied at every stage.
State step(const State& state, double u, double dt, const VehicleParams& params);

/// [u]_+ * v
double fuel_rate(double u, double v);

/// Trapezoidal quadrature of fuel_rate over the samples.
double trip_fuel(const Trajectory& traj);

/// sum_i rates[i] * durations[i]
double discrete_trip_fuel(std::span<const double> rates, std::span<const double> durations);

/// Upper end of the velocity axis used by the grid solvers: 1.2 x max limit.
double velocity_ceiling(const TripSpec& trip);

/// kappa * (|x - L| / L + |v - v2| / V_max)
double terminal_penalty(double x, double v, const ProblemSpec& problem);

/// (d phi / d|x - L|, d phi / d|v - v2|) of the terminal penalty.
std::pair<double, double> terminal_penalty_slopes(const ProblemSpec& problem);

/// rho * max(0, v - M(x))^2
double speed_limit_penalty(double x, double v, const ProblemSpec& problem);

/// fuel_rate + speed_limit_penalty; integrand of the value function.
double running_cost(double x, double v, double u, const ProblemSpec& problem);

/// Largest excess of v over the local limit across the trajectory (>= 0).
double worst_speed_violation(const Trajectory& traj, const TripSpec& trip);

}  // namespace ecodrive
