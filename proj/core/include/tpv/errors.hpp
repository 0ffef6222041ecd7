#pragma once

#include <stdexcept>
#include <string>

namespace tpv {

// Base of every error raised by the library. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand extents do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A caller broke an operation precondition (non-scalar loss, empty refs, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Loss has no contributing entries (all labels ignored, nothing labeled).
class UndefinedLossError : public ContractError {
 public:
  using ContractError::ContractError;
};

// Invalid configuration value or combination.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Loss routing asks for predictions or labels that were not supplied.
class RoutingError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// Requested allocation exceeds a configured budget.
class ResourceError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input files / data.
class DataError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf surfaced by a validation pass.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace tpv
