#pragma once

#include <stdexcept>
#include <string>

namespace tetherkit {

/// Base class for every numerical failure raised by the library.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DegenerateBasis : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class AntipodalPoints : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class SingularMass : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class IllConditioned : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class InnovationGateExceeded : public NumericalError {
 public:
  InnovationGateExceeded(const std::string& what, double distance)
      : NumericalError(what), distance_(distance) {}
  double distance() const noexcept { return distance_; }

 private:
  double distance_;
};

/// Malformed user input (config files, CLI values).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tetherkit
