#pragma once

// Shared fixtures for the unit tests. Expensive objects are built once per
// process.

#include <string>

#include "ecodrive/hjb.hpp"
#include "ecodrive/model.hpp"
#include "ecodrive/strategies.hpp"

namespace testing_support {

/// Default problem with kappa calibrated from the tuned four-phase plan.
inline const ecodrive::ProblemSpec& default_problem() {
  static const ecodrive::ProblemSpec p = ecodrive::calibrate_terminal_penalty(ecodrive::ProblemSpec{});
  return p;
}

struct DefaultSolve {
  ecodrive::Grid grid;
  ecodrive::ValueField field;
  ecodrive::Trajectory rollout;
};

/// Default grid, every level stored, plus the rollout from rest at the origin.
inline const DefaultSolve& default_solve() {
  static const DefaultSolve s = [] {
    const auto& p = default_problem();
    ecodrive::Grid g = ecodrive::build_grid(p, {});
    ecodrive::ValueField f = ecodrive::solve(p, g);
    ecodrive::Trajectory t = ecodrive::rollout(f, {0.0, 0.0, 0.0}, p);
    return DefaultSolve{g, std::move(f), std::move(t)};
  }();
  return s;
}

inline std::string fixture_path(const std::string& name) { return std::string(ECODRIVE_FIXTURE_DIR) + "/" + name; }

}  // namespace testing_support
