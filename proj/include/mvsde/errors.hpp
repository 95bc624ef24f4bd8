#pragma once

#include <stdexcept>
#include <string>

namespace mvsde {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An argument lies outside the domain of the operation (bad exponent,
/// mismatched grids, uncovered time interval, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A computation produced a non-finite value.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Problem size exceeds an exact-solver budget.
class SizeError : public Error {
 public:
  using Error::Error;
};

/// Model evaluation violated the declared constants (ellipticity, b_sup).
class ModelConstantsError : public Error {
 public:
  using Error::Error;
};

/// Quadrature failed a coverage or accuracy check.
class QuadratureError : public Error {
 public:
  using Error::Error;
};

/// An iteration failed to converge or stopped contracting.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// Remainder quadrature missed its accuracy target.
class AccuracyError : public Error {
 public:
  using Error::Error;
};

/// A sampled Lipschitz/ellipticity ratio exceeded the declared constant.
class AuditFailure : public Error {
 public:
  using Error::Error;
};

/// Malformed input document. `pointer()` is a JSON pointer to the field.
class ParseError : public Error {
 public:
  ParseError(std::string pointer, const std::string& what)
      : Error(pointer + ": " + what), pointer_(std::move(pointer)) {}
  const std::string& pointer() const noexcept { return pointer_; }

 private:
  std::string pointer_;
};

}  // namespace mvsde
