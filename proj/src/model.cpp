#include "ecodrive/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include "ecodrive/errors.hpp"

namespace ecodrive {

namespace {

std::string fmt_value(const char* name, double value) {
  std::ostringstream os;
  os << name << " " << value;
  return os.str();
}

// Position normalization of the terminal penalty; a zero-length trip keeps
// a nominal 1 m scale.
double position_scale(const TripSpec& trip) { return trip.length > 0.0 ? trip.length : 1.0; }

}  // namespace

void DavisCoefficients::validate() const {
  if (!(a >= 0.0) || !(b >= 0.0) || !(c >= 0.0)) {
    throw ArgumentError("Davis coefficients must be nonnegative (a, b, c)");
  }
}

GradeProfile::GradeProfile() : breakpoints_{{0.0, 0.0}} {}

GradeProfile::GradeProfile(std::vector<GradeBreakpoint> breakpoints)
    : breakpoints_(std::move(breakpoints)) {
  if (breakpoints_.empty()) throw ArgumentError("grade profile needs at least one breakpoint");
  if (breakpoints_.front().position != 0.0) {
    throw ArgumentError("grade profile must start at position 0");
  }
  for (std::size_t i = 1; i < breakpoints_.size(); ++i) {
    if (!(breakpoints_[i].position > breakpoints_[i - 1].position)) {
      throw ArgumentError("grade breakpoint positions must be strictly increasing");
    }
  }
  for (const auto& bp : breakpoints_) {
    if (!std::isfinite(bp.accel)) throw ArgumentError("grade value must be finite");
  }
}

std::size_t GradeProfile::segment_index(double x) const {
  auto it = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), x,
                             [](double pos, const GradeBreakpoint& bp) { return pos < bp.position; });
  if (it == breakpoints_.begin()) return 0;
  return static_cast<std::size_t>(std::distance(breakpoints_.begin(), it)) - 1;
}

double GradeProfile::at(double x) const { return breakpoints_[segment_index(x)].accel; }

bool GradeProfile::is_flat() const {
  return std::all_of(breakpoints_.begin(), breakpoints_.end(),
                     [](const GradeBreakpoint& bp) { return bp.accel == 0.0; });
}

void VehicleParams::validate() const {
  davis.validate();
  if (!(max_traction > 0.0)) throw ArgumentError(fmt_value("max_traction must be > 0; got", max_traction));
}

ControlSet::ControlSet() : ControlSet({-1.0, -0.5, 0.0, 0.5, 1.0}) {}

ControlSet::ControlSet(std::vector<double> settings) : settings_(std::move(settings)) {
  if (settings_.size() < 2) throw ArgumentError("control set needs at least two settings");
  for (std::size_t i = 1; i < settings_.size(); ++i) {
    if (!(settings_[i] > settings_[i - 1])) {
      throw ArgumentError("control settings must be strictly increasing");
    }
  }
  if (settings_.front() != -1.0 || settings_.back() != 1.0) {
    throw ArgumentError("control settings must start at -1 and end at +1");
  }
  if (!index_of(0.0)) throw ArgumentError("control settings must contain 0 (coast)");
}

ControlSet ControlSet::uniform(std::size_t count) {
  if (count < 3 || count % 2 == 0) throw ArgumentError("uniform control set needs an odd count >= 3");
  std::vector<double> s(count);
  const auto half = static_cast<double>(count / 2);
  for (std::size_t i = 0; i < count; ++i) s[i] = (static_cast<double>(i) - half) / half;
  return ControlSet(std::move(s));
}

std::optional<std::size_t> ControlSet::index_of(double u) const {
  for (std::size_t i = 0; i < settings_.size(); ++i) {
    if (settings_[i] == u) return i;
  }
  return std::nullopt;
}

void TripSpec::validate() const {
  if (!(length >= 0.0)) throw ArgumentError(fmt_value("trip length must be >= 0; got", length));
  if (!(horizon >= 0.0)) throw ArgumentError(fmt_value("trip horizon must be >= 0; got", horizon));
  if (!(v_start >= 0.0)) throw ArgumentError(fmt_value("v_start must be >= 0; got", v_start));
  if (!(v_end >= 0.0)) throw ArgumentError(fmt_value("v_end must be >= 0; got", v_end));
  if (speed_limits.empty()) throw ArgumentError("speed-limit profile must not be empty");
  double prev = 0.0;
  for (std::size_t j = 0; j < speed_limits.size(); ++j) {
    const auto& seg = speed_limits[j];
    if (!(seg.limit > 0.0)) throw ArgumentError(fmt_value("speed limit must be > 0; got", seg.limit));
    const bool degenerate_ok = length == 0.0 && speed_limits.size() == 1 && seg.end == 0.0;
    if (!degenerate_ok && !(seg.end > prev)) {
      throw ArgumentError("speed-limit segment ends must be strictly increasing from 0");
    }
    prev = seg.end;
  }
  if (speed_limits.back().end != length) {
    throw ArgumentError("last speed-limit segment must end at the trip length");
  }
}

std::size_t TripSpec::limit_segment_index(double x) const {
  for (std::size_t j = 0; j < speed_limits.size(); ++j) {
    if (x < speed_limits[j].end) return j;
  }
  return speed_limits.size() - 1;
}

double TripSpec::speed_limit_at(double x) const { return speed_limits[limit_segment_index(x)].limit; }

double TripSpec::max_speed_limit() const {
  double m = 0.0;
  for (const auto& s : speed_limits) m = std::max(m, s.limit);
  return m;
}

double TripSpec::min_speed_limit() const {
  double m = speed_limits.front().limit;
  for (const auto& s : speed_limits) m = std::min(m, s.limit);
  return m;
}

void Trajectory::refresh_switching_times() {
  switching_times.clear();
  for (std::size_t i = 1; i < samples.size(); ++i) {
    if (samples[i].u != samples[i - 1].u) switching_times.push_back(samples[i].t);
  }
}

double PenaltyWeights::kappa() const {
  if (!terminal_kappa) {
    throw ArgumentError("terminal penalty weight kappa is not calibrated");
  }
  return *terminal_kappa;
}

void ProblemSpec::validate() const {
  vehicle.validate();
  trip.validate();
  if (penalties.terminal_kappa && !(*penalties.terminal_kappa >= 0.0)) {
    throw ArgumentError("terminal penalty kappa must be >= 0");
  }
  if (!(penalties.speed_rho >= 0.0)) throw ArgumentError("speed penalty rho must be >= 0");
  if (!(integrator_dt > 0.0)) throw ArgumentError(fmt_value("integrator_dt must be > 0; got", integrator_dt));
}

double davis_resistance(double v, const DavisCoefficients& coeffs) {
  if (!(v >= 0.0)) throw DomainError(fmt_value("resistance needs v >= 0; got v =", v));
  return coeffs.a + coeffs.b * v + coeffs.c * v * v;
}

double net_deceleration(double x, double v, const VehicleParams& params) {
  return davis_resistance(v, params.davis) - params.grade.at(x);
}

double traction(double /*x*/, double v, double u, const VehicleParams& params) {
  if (!(std::abs(u) <= 1.0)) throw AdmissibilityError(fmt_value("control must satisfy |u| <= 1; got u =", u));
  if (!(v >= 0.0)) throw DomainError(fmt_value("traction needs v >= 0; got v =", v));
  return u * params.max_traction;
}

StateDerivative dynamics(const State& state, double u, const VehicleParams& params) {
  const double accel = traction(state.x, state.v, u, params) - net_deceleration(state.x, state.v, params);
  StateDerivative d{state.v, accel};
  if (state.v == 0.0 && d.dv < 0.0) d.dv = 0.0;
  return d;
}

State step(const State& state, double u, double dt, const VehicleParams& params) {
  if (!(dt > 0.0)) throw ArgumentError(fmt_value("step needs dt > 0; got dt =", dt));
  auto stage = [&](double dx, double dv, double scale) {
    State s{state.x + scale * dx, std::max(0.0, state.v + scale * dv), state.t};
    return dynamics(s, u, params);
  };
  const StateDerivative k1 = dynamics(state, u, params);
  const StateDerivative k2 = stage(k1.dx, k1.dv, 0.5 * dt);
  const StateDerivative k3 = stage(k2.dx, k2.dv, 0.5 * dt);
  const StateDerivative k4 = stage(k3.dx, k3.dv, dt);
  State next;
  next.x = state.x + dt / 6.0 * (k1.dx + 2.0 * k2.dx + 2.0 * k3.dx + k4.dx);
  next.v = std::max(0.0, state.v + dt / 6.0 * (k1.dv + 2.0 * k2.dv + 2.0 * k3.dv + k4.dv));
  next.t = state.t + dt;
  return next;
}

double fuel_rate(double u, double v) {
  const double positive = 0.5 * (u + std::abs(u));
  return positive * v;
}

double trip_fuel(const Trajectory& traj) {
  if (traj.empty()) throw ArgumentError("trip_fuel needs a nonempty trajectory");
  double total = 0.0;
  for (std::size_t i = 1; i < traj.samples.size(); ++i) {
    const auto& p = traj.samples[i - 1];
    const auto& q = traj.samples[i];
    // The control on [p.t, q.t) is p.u; both endpoints are evaluated with it.
    total += 0.5 * (q.t - p.t) * (fuel_rate(p.u, p.v) + fuel_rate(p.u, q.v));
  }
  return total;
}

double discrete_trip_fuel(std::span<const double> rates, std::span<const double> durations) {
  if (rates.size() != durations.size()) {
    throw ArgumentError("discrete_trip_fuel: rates and durations differ in length");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < rates.size(); ++i) {
    if (!(durations[i] > 0.0)) throw ArgumentError("discrete_trip_fuel: durations must be positive");
    if (!(rates[i] >= 0.0)) throw ArgumentError("discrete_trip_fuel: rates must be nonnegative");
    total += rates[i] * durations[i];
  }
  return total;
}

double velocity_ceiling(const TripSpec& trip) { return 1.2 * trip.max_speed_limit(); }

double terminal_penalty(double x, double v, const ProblemSpec& problem) {
  const auto& trip = problem.trip;
  return problem.penalties.kappa() *
         (std::abs(x - trip.length) / position_scale(trip) + std::abs(v - trip.v_end) / velocity_ceiling(trip));
}

std::pair<double, double> terminal_penalty_slopes(const ProblemSpec& problem) {
  const double kappa = problem.penalties.kappa();
  return {kappa / position_scale(problem.trip), kappa / velocity_ceiling(problem.trip)};
}

double speed_limit_penalty(double x, double v, const ProblemSpec& problem) {
  const double excess = std::max(0.0, v - problem.trip.speed_limit_at(x));
  return problem.penalties.speed_rho * excess * excess;
}

double running_cost(double x, double v, double u, const ProblemSpec& problem) {
  return fuel_rate(u, v) + speed_limit_penalty(x, v, problem);
}

double worst_speed_violation(const Trajectory& traj, const TripSpec& trip) {
  double worst = 0.0;
  for (const auto& s : traj.samples) worst = std::max(worst, s.v - trip.speed_limit_at(s.x));
  return worst;
}

}  // namespace ecodrive
