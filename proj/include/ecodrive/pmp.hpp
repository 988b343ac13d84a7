#pragma once

// Pontryagin maximum principle checks. This module uses the maximization
// convention
//
//   H = -a0 * f0 + psi1 * f1 + psi2 * f2,    f0 = [u]_+ * v,
//
// while the grid solver minimizes f0 + gradJ . f. Along an optimal pair the
// two are linked by psi = -a0 * gradJ.

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "ecodrive/hjb.hpp"
#include "ecodrive/model.hpp"

namespace ecodrive {

struct AdjointSample {
  double t = 0.0;
  double psi1 = 0.0;
  double psi2 = 0.0;
};

/// Costate samples aligned with a trajectory's time axis.
struct AdjointPath {
  std::vector<AdjointSample> samples;
  double a0 = 1.0;

  std::size_t size() const { return samples.size(); }
};

enum class ControlCase { full_power, hold_singular, coast, partial_brake_singular, full_brake };

const char* to_string(ControlCase c);

/// Equality band used for the singular cases: 1e-6 * max(1, v).
double singular_tolerance(double v);

/// Backward RK4 of the adjoint system from psi(T) = 0.
AdjointPath integrate_adjoint(const Trajectory& traj, const ProblemSpec& problem, double a0 = 1.0);

/// Same, from an explicit terminal costate (psi1(T), psi2(T)).
AdjointPath integrate_adjoint(const Trajectory& traj, const ProblemSpec& problem, double a0,
                              std::pair<double, double> terminal_costate);

/// Terminal costate whose adjoint best matches -a0 * gradJ (least squares)
/// on the samples with t in [window_begin, window_end].
std::pair<double, double> fit_terminal_costate(const Trajectory& traj, const ValueField& field,
                                               const ProblemSpec& problem, double a0, double window_begin,
                                               double window_end);

double local_hamiltonian(const State& state, double u, std::pair<double, double> psi, double a0,
                         const ProblemSpec& problem);

/// Magnitude of the terms entering H at a state: a0 v + |psi1| v + |psi2| (A + |r - g|).
double hamiltonian_scale(const State& state, std::pair<double, double> psi, double a0, const ProblemSpec& problem);

ControlCase classify_control(double psi2, double v);

/// Setting implied by a non-singular case; nullopt for the singular ones.
std::optional<double> implied_setting(ControlCase c);

struct PmpSample {
  double t = 0.0;
  double applied = 0.0;
  double maximizer = 0.0;  // argmax over the control set, ties to the smallest |u|
  double gap = 0.0;        // H(maximizer) - H(applied) >= 0
  double tolerance = 0.0;
  bool pass = false;
};

struct TimeSpan {
  double begin = 0.0;
  double end = 0.0;
};

struct PmpReport {
  std::vector<PmpSample> samples;
  double pass_fraction = 0.0;
  double worst_gap = 0.0;
  std::vector<TimeSpan> failing_spans;  // maximal runs of failing samples
};

/// Per-sample maximum condition with tolerance relative_tol * hamiltonian_scale.
PmpReport check_maximum_principle(const Trajectory& traj, const AdjointPath& adj, const ProblemSpec& problem,
                                  double relative_tol = 1e-3);

/// H0 + trapezoidal integral of the local Hamiltonian along the pair.
double global_hamiltonian(const Trajectory& traj, const AdjointPath& adj, double h0, const ProblemSpec& problem);

struct LinkOptions {
  double window_begin = 0.1;     // fraction of the horizon
  double window_end = 0.9;
  double switch_guard = 0.15;    // s, samples this close to a control switch are skipped
  std::size_t boundary_cells = 2;
  std::size_t breakpoint_cells = 2;
  double floor = 1e-3;           // denominator floor of the relative discrepancy
};

struct LinkReport {
  double median = 0.0;
  double max = 0.0;
  std::size_t compared = 0;
  std::size_t excluded = 0;
};

/// Relative discrepancy |psi2 + a0 dJ/dv| / max(|a0 dJ/dv|, floor) on smooth samples.
LinkReport verify_adjoint_value_link(const ValueField& field, const AdjointPath& adj, const Trajectory& traj,
                                     const ProblemSpec& problem, const LinkOptions& options = {});

}  // namespace ecodrive
