#pragma once

#include <stdexcept>
#include <string>

namespace owqe {

/// Shapes, dimensions or option values that cannot be used together.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A configuration value outside its allowed domain. `field()` names the
/// offending key so callers can report it.
class ValidationError : public ConfigError {
 public:
  ValidationError(std::string field, const std::string& what)
      : ConfigError(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Non-finite loss, gradient or TD error. The offending update is not applied.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InsufficientData : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised by environments when the simulation state stops being usable.
class EnvironmentFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace owqe
