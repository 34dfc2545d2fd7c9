#pragma once

#include <stdexcept>
#include <string>

namespace rl {

/// Raised when a scenario file cannot be read or parsed.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class SolverError : public std::runtime_error {
public:
  enum class Kind { NonConvergence, SingularJacobian, OrderingViolation, InfeasibleMode };

  SolverError(Kind kind, const std::string& what, double condition_number = 0.0)
      : std::runtime_error(what), kind_(kind), condition_number_(condition_number) {}

  Kind kind() const noexcept { return kind_; }
  /// Reciprocal of the LU condition estimate; only meaningful for SingularJacobian.
  double condition_number() const noexcept { return condition_number_; }

private:
  Kind kind_;
  double condition_number_;
};

const char* to_string(SolverError::Kind kind) noexcept;

class EstimationError : public std::runtime_error {
public:
  enum class Kind {
    EmptyInput,
    InsufficientData,
    Collinear,
    Separation,
    NoSignChange,
    OneSided,
    EmNonConvergence,
  };

  EstimationError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

private:
  Kind kind_;
};

} // namespace rl

namespace rl {

/// Root bracket without a sign change.
class NoSignChange : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

} // namespace rl
