#pragma once

#include <stdexcept>
#include <string>

namespace pedintent {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or rank incompatibility between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Caller broke an operation's precondition (non-scalar loss, empty list, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

class DegenerateMaskError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf produced by an op, or a non-finite gradient reached the optimizer.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class DeterminismError : public Error {
 public:
  using Error::Error;
};

// Invalid model/training/run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Everything that originates in input data: files, records, windows, crops.
class DataError : public Error {
 public:
  using Error::Error;
};

class ParseError : public DataError {
 public:
  ParseError(const std::string& what, std::size_t line)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class IntegrityError : public DataError {
 public:
  using DataError::DataError;
};

class WindowError : public DataError {
 public:
  using DataError::DataError;
};

class DegenerateCropError : public DataError {
 public:
  using DataError::DataError;
};

class BalanceError : public DataError {
 public:
  using DataError::DataError;
};

// A model input lacks a channel the model spec enables.
class InputError : public DataError {
 public:
  using DataError::DataError;
};

// Checkpoint missing, malformed, or not matching the model it is loaded into.
class LoadError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace pedintent
