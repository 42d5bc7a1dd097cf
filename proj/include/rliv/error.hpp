#pragma once

#include <stdexcept>
#include <string>

namespace rliv {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad configuration or mismatched shapes. Maps to CLI exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input value out of its documented domain.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Non-finite value reached a numeric routine.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Requested data does not exist (empty buffer, degenerate corpus).
class UnavailableError : public Error {
 public:
  using Error::Error;
};

/// API used out of order (e.g. stepping a dead session).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint or file failed its integrity check. Maps to CLI exit code 2.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

}  // namespace rliv
