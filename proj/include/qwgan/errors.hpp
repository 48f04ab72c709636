#pragma once

#include <stdexcept>
#include <string>

namespace qwgan {

/// Malformed or inconsistent input (shapes, non-finite data, bad files).
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A problem-size guard for an exhaustive routine was exceeded.
class GuardError : public InputError {
 public:
  using InputError::InputError;
};

/// Marginal or constraint system has no nonnegative solution.
class InfeasibleError : public std::runtime_error {
 public:
  InfeasibleError(const std::string& what, int component = -1)
      : std::runtime_error(what), component_(component) {}
  /// Quaternion component (0..3) that failed, or -1 when not component-specific.
  int component() const { return component_; }

 private:
  int component_;
};

/// Non-finite values or a solver state that should be unreachable.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace qwgan
