#pragma once

#include <stdexcept>
#include <string>

namespace ge {

// Base of every error raised by the toolkit. The CLI maps the subclasses
// onto exit codes (see tools/cli.hpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes disagree (matmul inner dims, elementwise operands).
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Layer or network shape arithmetic does not work out.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf produced or supplied.
class NumericError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public NumericError {
 public:
  using NumericError::NumericError;
};

class SolverError : public NumericError {
 public:
  using NumericError::NumericError;
};

// Malformed checkpoint or other binary input.
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace ge
