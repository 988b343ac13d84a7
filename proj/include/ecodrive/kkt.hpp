#pragma once

// Constrained form of the trip problem and its Kuhn-Tucker checks.
//
//   g1 = u - 1 <= 0,  g2 = -u - 1 <= 0,  g3 = -v <= 0,
//   g4 = x(T) - L = 0,  g5 = v(T) - v2 = 0.
//
// Stationarity in u is checked on the relaxation u in [-1, 1] with the
// one-sided derivatives of the minimization Hamiltonian f0 + gradJ . f:
//
//   u > 0:  dH/du = v + A J_v + lambda1 - lambda2
//   u < 0:  dH/du =     A J_v + lambda1 - lambda2

#include <cstddef>
#include <utility>
#include <vector>

#include "ecodrive/hjb.hpp"
#include "ecodrive/model.hpp"

namespace ecodrive {

struct ConstraintValues {
  std::vector<double> g1, g2, g3;  // one entry per trajectory sample
  double g4 = 0.0;
  double g5 = 0.0;
};

ConstraintValues constraint_values(const Trajectory& traj, const ProblemSpec& problem);

struct Multipliers {
  std::vector<double> lambda1, lambda2, lambda3;
  double lambda4 = 0.0;
  double lambda5 = 0.0;
  std::vector<double> gamma1, gamma2, gamma3;  // relaxing variables, g_i + gamma_i^2 = 0
  bool degenerate = false;

  /// All-zero multipliers for n samples.
  static Multipliers zeros(std::size_t n);
};

/// (dJ/dx, dJ/dv) at every sample. States outside the grid are clamped onto it.
std::vector<std::pair<double, double>> value_gradients(const ValueField& field, const Trajectory& traj);

/// Per-sample least squares with nonnegativity; only active constraints get
/// a nonzero multiplier. lambda4 and lambda5 are the terminal-penalty slopes.
Multipliers fit_multipliers(const Trajectory& traj, const ValueField& field, const ProblemSpec& problem);

/// H(t) + sum_{i<=3} lambda_i (g_i + gamma_i^2) + lambda4 g4 + lambda5 g5.
std::vector<double> generalized_lagrangian(const Trajectory& traj,
                                           const std::vector<std::pair<double, double>>& grad_j,
                                           const Multipliers& mult, const ProblemSpec& problem);

struct KktTolerances {
  double relative = 1e-2;           // stationarity, times the local Hamiltonian scale
  double inequality = 0.0;          // allowed max(0, g_i), i = 1..3
  double position_fraction = 0.01;  // |g4| <= fraction * L
  double speed = 0.1;               // |g5| <= speed, m/s
};

struct KktResiduals {
  std::vector<double> stationarity;  // per sample, >= 0
  std::vector<double> scale;         // local Hamiltonian scale per sample
  double stationarity_pass_fraction = 0.0;
  double primal_violation = 0.0;     // worst max(0, g_i) over i = 1..3
  bool primal_ok = true;
  double g4 = 0.0;
  double g5 = 0.0;
  bool g4_flagged = false;
  bool g5_flagged = false;
  double complementarity = 0.0;      // worst |lambda_i g_i|, i = 1..3
  double dual = 0.0;                 // worst magnitude of a negative multiplier
  double relaxation = 0.0;           // worst |g_i + gamma_i^2| where g_i <= 0
  std::vector<double> lagrangian_rate;  // dL/dt by forward differences (diagnostic)
};

KktResiduals kkt_residuals(const Trajectory& traj, const ValueField& field, const Multipliers& mult,
                           const ProblemSpec& problem, const KktTolerances& tol = {});

}  // namespace ecodrive
