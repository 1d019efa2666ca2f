#pragma once

#include <stdexcept>
#include <string>

namespace barsctr {

// Base of every error the library throws. The CLI maps the subclasses onto
// exit codes: configuration problems -> 1, data problems -> 2, numeric -> 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Operand shapes that do not conform to an operation.
class DimensionError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// Caller broke a precondition (e.g. backward on a non-scalar).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Object used in a state that no longer allows the call.
class StateError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class ParseError : public DataError {
 public:
  ParseError(std::size_t row, const std::string& field, const std::string& what)
      : DataError("row " + std::to_string(row) + ", field '" + field + "': " + what),
        row_(row),
        field_(field) {}

  std::size_t row() const { return row_; }
  const std::string& field() const { return field_; }

 private:
  std::size_t row_;
  std::string field_;
};

class IoError : public DataError {
 public:
  using DataError::DataError;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

// AUC over a window that holds a single class.
class UndefinedMetricError : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace barsctr
