#pragma once

#include <stdexcept>
#include <string>

namespace soh {

/// Bad inputs, schema mismatches, contract violations. CLI exit code 2.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Numerical failures: ill-conditioned systems, degenerate estimates. CLI exit code 3.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Filesystem and parsing failures. CLI exit code 4.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace soh
