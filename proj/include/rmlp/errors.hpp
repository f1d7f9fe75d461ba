#pragma once

#include <stdexcept>
#include <string>

namespace rmlp {

/// Bad argument to a numerical routine (non-finite input, empty interval, ...).
class invalid_argument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised by the hitting-time sampler when the start point is on the boundary.
/// Callers are expected to short-circuit that case themselves.
class degenerate_input : public invalid_argument {
 public:
  using invalid_argument::invalid_argument;
};

/// An iteration failed to converge or produced a non-finite result.
class numerical_failure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The requested backend cannot simulate the requested problem.
class unsupported_configuration : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed configuration text or plan file.
class config_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Process exit codes used by the command-line driver.
enum class exit_code : int {
  success = 0,
  usage = 1,
  config = 2,
  numerical = 3,
  unsupported = 4,
};

}  // namespace rmlp
