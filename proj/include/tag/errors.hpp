#pragma once

#include <stdexcept>
#include <string>

namespace tag {

/// Precondition or configuration violation detected before any work runs.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Failure while running (divergence, infeasibility, I/O).
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tag
