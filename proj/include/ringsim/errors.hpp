#pragma once

#include <stdexcept>
#include <string>

namespace ringsim {

// Precondition and shape violations use std::invalid_argument. The three
// classes below carry the failure categories the CLI maps to exit codes.

/// Malformed or inconsistent experiment configuration.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Physical parameters outside the regime a computation is defined for
/// (heating regime, nothing to herald, ...).
class RegimeError : public std::domain_error {
 public:
  explicit RegimeError(const std::string& what) : std::domain_error(what) {}
};

/// Integration or linear-algebra failure: step-size underflow, norm growth,
/// non-convergence, loss of physicality.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace ringsim
