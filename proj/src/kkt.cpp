#include "ecodrive/kkt.hpp"

#include <algorithm>
#include <cmath>

#include "ecodrive/errors.hpp"

namespace ecodrive {

namespace {

void check_sizes(const Trajectory& traj, const Multipliers& mult) {
  const std::size_t n = traj.size();
  if (n == 0) throw ArgumentError("trajectory has no samples");
  const bool ok = mult.lambda1.size() == n && mult.lambda2.size() == n && mult.lambda3.size() == n &&
                  mult.gamma1.size() == n && mult.gamma2.size() == n && mult.gamma3.size() == n;
  if (!ok) throw ArgumentError("multipliers and trajectory differ in length");
}

// Minimization-convention scale: v + |J_x| v + |J_v| (A + |r - g|).
double local_scale(const TrajectorySample& s, std::pair<double, double> grad, const ProblemSpec& problem) {
  const double v = std::max(0.0, s.v);
  const double r = net_deceleration(s.x, v, problem.vehicle);
  return v + std::abs(grad.first) * v + std::abs(grad.second) * (problem.vehicle.max_traction + std::abs(r));
}

double relaxing(double g) { return g < 0.0 ? std::sqrt(-g) : 0.0; }

}  // namespace

ConstraintValues constraint_values(const Trajectory& traj, const ProblemSpec& problem) {
  if (traj.empty()) throw ArgumentError("trajectory has no samples");
  ConstraintValues c;
  c.g1.reserve(traj.size());
  c.g2.reserve(traj.size());
  c.g3.reserve(traj.size());
  for (const auto& s : traj.samples) {
    c.g1.push_back(s.u - 1.0);
    c.g2.push_back(-s.u - 1.0);
    c.g3.push_back(-s.v);
  }
  c.g4 = traj.back().x - problem.trip.length;
  c.g5 = traj.back().v - problem.trip.v_end;
  return c;
}

Multipliers Multipliers::zeros(std::size_t n) {
  Multipliers m;
  m.lambda1.assign(n, 0.0);
  m.lambda2.assign(n, 0.0);
  m.lambda3.assign(n, 0.0);
  m.gamma1.assign(n, 0.0);
  m.gamma2.assign(n, 0.0);
  m.gamma3.assign(n, 0.0);
  return m;
}

std::vector<std::pair<double, double>> value_gradients(const ValueField& field, const Trajectory& traj) {
  const Grid& grid = field.grid();
  std::vector<std::pair<double, double>> out;
  out.reserve(traj.size());
  for (const auto& s : traj.samples) {
    const double x = std::clamp(s.x, grid.x.start, grid.x.end());
    const double v = std::clamp(s.v, grid.v.start, grid.v.end());
    out.push_back(field.gradient(field.level_for_time(s.t), x, v));
  }
  return out;
}

Multipliers fit_multipliers(const Trajectory& traj, const ValueField& field, const ProblemSpec& problem) {
  const std::size_t n = traj.size();
  Multipliers m = Multipliers::zeros(n);
  if (n == 0) {
    m.degenerate = true;
    return m;
  }
  const ConstraintValues g = constraint_values(traj, problem);
  const auto grad = value_gradients(field, traj);
  const double a = problem.vehicle.max_traction;
  for (std::size_t i = 0; i < n; ++i) {
    const double jv = grad[i].second;
    if (!std::isfinite(jv)) {
      m.degenerate = true;
      continue;
    }
    const double v = std::max(0.0, traj.samples[i].v);
    // Only lambda1 (u = 1) or lambda2 (u = -1) can be active; the one-column
    // nonnegative least squares is the clipped solution of the branch equation.
    if (g.g1[i] == 0.0) m.lambda1[i] = std::max(0.0, -(v + a * jv));
    if (g.g2[i] == 0.0 && v > 0.0) m.lambda2[i] = std::max(0.0, a * jv);
    // g3 does not depend on u, so lambda3 has no column in the u-stationarity
    // relation and stays 0.
    m.gamma1[i] = relaxing(g.g1[i]);
    m.gamma2[i] = relaxing(g.g2[i]);
    m.gamma3[i] = relaxing(g.g3[i]);
  }
  const auto [slope_x, slope_v] = terminal_penalty_slopes(problem);
  m.lambda4 = slope_x;
  m.lambda5 = slope_v;
  return m;
}

std::vector<double> generalized_lagrangian(const Trajectory& traj,
                                           const std::vector<std::pair<double, double>>& grad_j,
                                           const Multipliers& mult, const ProblemSpec& problem) {
  check_sizes(traj, mult);
  if (grad_j.size() != traj.size()) throw ArgumentError("value gradients and trajectory differ in length");
  const ConstraintValues g = constraint_values(traj, problem);
  const double terminal = mult.lambda4 * g.g4 + mult.lambda5 * g.g5;
  std::vector<double> out;
  out.reserve(traj.size());
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const auto& s = traj.samples[i];
    double l = hamiltonian({s.x, s.v, s.t}, s.u, grad_j[i], problem);
    l += mult.lambda1[i] * (g.g1[i] + mult.gamma1[i] * mult.gamma1[i]);
    l += mult.lambda2[i] * (g.g2[i] + mult.gamma2[i] * mult.gamma2[i]);
    l += mult.lambda3[i] * (g.g3[i] + mult.gamma3[i] * mult.gamma3[i]);
    out.push_back(l + terminal);
  }
  return out;
}

KktResiduals kkt_residuals(const Trajectory& traj, const ValueField& field, const Multipliers& mult,
                           const ProblemSpec& problem, const KktTolerances& tol) {
  check_sizes(traj, mult);
  const std::size_t n = traj.size();
  const ConstraintValues g = constraint_values(traj, problem);
  const auto grad = value_gradients(field, traj);
  const double a = problem.vehicle.max_traction;

  KktResiduals res;
  res.stationarity.resize(n);
  res.scale.resize(n);
  std::size_t passed = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = traj.samples[i];
    const double v = std::max(0.0, s.v);
    const double jv = grad[i].second;
    const double shift = mult.lambda1[i] - mult.lambda2[i];
    const double upper = v + a * jv + shift;  // u > 0 branch
    // At rest the clamp cancels braking, so the u < 0 branch has no effect on f2.
    const double lower = (s.v <= 0.0 ? 0.0 : a * jv) + shift;  // u < 0 branch
    double r = 0.0;
    if (s.u > 0.0) {
      r = std::abs(upper);
    } else if (s.u < 0.0) {
      r = std::abs(lower);
    } else {
      // At the kink 0 must lie in [lower, upper].
      r = std::max(0.0, -upper) + std::max(0.0, lower);
    }
    res.stationarity[i] = r;
    res.scale[i] = local_scale(s, grad[i], problem);
    if (r <= tol.relative * res.scale[i]) ++passed;

    const double gi[3] = {g.g1[i], g.g2[i], g.g3[i]};
    const double li[3] = {mult.lambda1[i], mult.lambda2[i], mult.lambda3[i]};
    const double ri[3] = {mult.gamma1[i], mult.gamma2[i], mult.gamma3[i]};
    for (int k = 0; k < 3; ++k) {
      res.primal_violation = std::max(res.primal_violation, gi[k]);
      res.complementarity = std::max(res.complementarity, std::abs(li[k] * gi[k]));
      res.dual = std::max(res.dual, -li[k]);
      if (gi[k] <= 0.0) res.relaxation = std::max(res.relaxation, std::abs(gi[k] + ri[k] * ri[k]));
    }
  }
  res.dual = std::max({res.dual, -mult.lambda4, -mult.lambda5});
  res.stationarity_pass_fraction = static_cast<double>(passed) / static_cast<double>(n);
  res.primal_ok = res.primal_violation <= tol.inequality;
  res.g4 = g.g4;
  res.g5 = g.g5;
  res.g4_flagged = std::abs(g.g4) > tol.position_fraction * problem.trip.length;
  res.g5_flagged = std::abs(g.g5) > tol.speed;

  // Diagnostic only: the Lagrangian needs v >= 0 for the resistance law.
  bool admissible = true;
  for (const auto& s : traj.samples) admissible = admissible && s.v >= 0.0;
  if (admissible && n > 1) {
    const auto l = generalized_lagrangian(traj, grad, mult, problem);
    res.lagrangian_rate.reserve(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      res.lagrangian_rate.push_back((l[i + 1] - l[i]) / (traj.samples[i + 1].t - traj.samples[i].t));
    }
  }
  return res;
}

}  // namespace ecodrive
