#pragma once

#include <stdexcept>
#include <string>

namespace ecodrive {

// Input outside the mathematical domain of a model function (e.g. v < 0).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Control value violating |u| <= 1.
class AdmissibilityError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Malformed or inconsistent arguments (length mismatch, bad resolution, ...).
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// No admissible plan / trajectory satisfies the trip constraints.
class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical configuration the solver refuses to run (foot-point bound).
class ConfigurationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Query outside the extent of a sampled field.
class ExtrapolationError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

}  // namespace ecodrive
