#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace meso {

/// Root of the library's numerical error hierarchy.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input outside the domain of an operation (e.g. Im z = 0).
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed or inconsistent configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ConvergenceError : public NumericalError {
 public:
  ConvergenceError(const std::string& what, double last_residual)
      : NumericalError(what), last_residual_(last_residual) {}
  [[nodiscard]] double last_residual() const { return last_residual_; }

 private:
  double last_residual_;
};

class ConditioningError : public NumericalError {
 public:
  ConditioningError(const std::string& what, double condition)
      : NumericalError(what), condition_(condition) {}
  [[nodiscard]] double condition() const { return condition_; }

 private:
  double condition_;
};

/// No contour separates the smallest eigenvalue of B from the rest of its spectrum.
class SeparationError : public NumericalError {
 public:
  SeparationError(const std::string& what, std::string layout)
      : NumericalError(what), layout_(std::move(layout)) {}
  [[nodiscard]] const std::string& layout() const { return layout_; }

 private:
  std::string layout_;
};

class DegenerateGapError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class QuadratureError : public NumericalError {
 public:
  QuadratureError(const std::string& what, double estimate, double value)
      : NumericalError(what), estimate_(estimate), value_(value) {}
  [[nodiscard]] double estimate() const { return estimate_; }
  [[nodiscard]] double value() const { return value_; }

 private:
  double estimate_;
  double value_;
};

}  // namespace meso
