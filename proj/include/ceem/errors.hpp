#pragma once

#include <stdexcept>
#include <string>

namespace ceem {

/// Caller broke a precondition (wrong dimensions, unnormalized weights, ...).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid user-supplied configuration. The CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical routine produced a nonfinite value or failed to factorize.
/// `time_index` is -1 when the failure is not tied to a time step.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, long time_index = -1)
      : std::runtime_error(what), time_index_(time_index) {}
  long time_index() const noexcept { return time_index_; }

 private:
  long time_index_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ceem
