#pragma once

#include <stdexcept>
#include <string>

namespace sda {

/// Invalid parameters or inconsistent configuration (CLI exit code 2).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Array shapes that do not agree with each other or with a GridSpec.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Operation requested from a component that cannot provide it
/// (e.g. a vjp from a denoiser without a reverse pass).
class CapabilityError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Non-finite values, failed factorizations, diverged training (exit code 3).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or unreadable container / CSV file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sda
