#pragma once

#include <stdexcept>
#include <string>

namespace mcdsim {

/// Data or validation failure (bad shapes, malformed files, violated
/// invariants). Maps to exit code 2 in the CLI.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// No configuration satisfies the requested constraints (exit code 3).
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

}  // namespace mcdsim
