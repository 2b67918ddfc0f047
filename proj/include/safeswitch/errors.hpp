#ifndef SAFESWITCH_ERRORS_HPP
#define SAFESWITCH_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace safeswitch {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A matrix equation has no (stabilizing) solution for the given data,
/// typically because an input matrix is not Schur stable.
class NoSolutionError : public Error {
 public:
  using Error::Error;
};

/// An iterative solver hit its iteration cap.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what + " (residual " + std::to_string(residual) + ")"),
        residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

/// Input data violates a numeric precondition (non-finite entry, matrix not
/// positive definite, ...).
class InvalidArgumentError : public Error {
 public:
  using Error::Error;
};

/// Model file could not be parsed.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, int line)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

/// A stability assumption needed by a certificate does not hold.
class CertificateUnavailableError : public Error {
 public:
  using Error::Error;
};

/// Random model generation exhausted its retry budget.
class GenerationError : public Error {
 public:
  using Error::Error;
};

}  // namespace safeswitch

#endif  // SAFESWITCH_ERRORS_HPP
