#pragma once

#include <stdexcept>
#include <string>

namespace symcon {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& message, int line, int column)
      : Error(message + " (line " + std::to_string(line) + ", column " +
              std::to_string(column) + ")"),
        message_(message),
        line_(line),
        column_(column) {}

  const std::string& message() const { return message_; }
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  std::string message_;
  int line_;
  int column_;
};

// Unbound names, division by zero, domain errors.
class EvalError : public Error {
 public:
  using Error::Error;
};

// Invalid model declarations (undeclared names, edge equivalence violations, ...).
class ModelError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// Differentiation through abs/min/max/step with a state-dependent argument.
class NonsmoothError : public Error {
 public:
  using Error::Error;
};

// Solver failures: step-size underflow, NaN/Inf in the state.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// A documented precondition of an operation does not hold.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

}  // namespace symcon
