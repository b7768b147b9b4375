#pragma once

#include <stdexcept>
#include <string>

namespace rqlvc {

// Argument outside the mathematical domain of an operation (non-positive
// rate, quality outside [0, q_num - 1], non-invertible parameters).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Least-squares problem without a unique solution (fewer than two distinct
// abscissae).
class DegenerateFitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller broke an interface contract (length mismatch, empty input).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid experiment configuration. `field()` names the offending key using
// a dotted path such as "rate_control.weights".
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error(field + ": " + message), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace rqlvc
