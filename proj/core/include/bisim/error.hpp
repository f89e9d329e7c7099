#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bisim {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Syntax or declaration error while parsing an expression.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t position)
      : Error(message + " at position " + std::to_string(position)),
        position_(position) {}

  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

/// Failure while evaluating or differentiating an expression.
class EvalError : public Error {
 public:
  enum class Kind { MissingBinding, Domain, NonDifferentiable };

  EvalError(Kind kind, const std::string& message)
      : Error(message), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Vector or model dimensions that do not fit together.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// gamma1*gamma2 / (lambda1*lambda2) >= 1.
class SmallGainError : public Error {
 public:
  SmallGainError(const std::string& message, double ratio)
      : Error(message), ratio_(ratio) {}

  double ratio() const noexcept { return ratio_; }

 private:
  double ratio_;
};

/// Numeric inputs that violate a mathematical consequence of their own
/// preconditions.
class InconsistencyError : public Error {
 public:
  using Error::Error;
};

class InvalidWeightsError : public Error {
 public:
  using Error::Error;
};

/// Numerical integration failed (field error or divergence).
class IntegrationError : public Error {
 public:
  using Error::Error;
};

}  // namespace bisim
