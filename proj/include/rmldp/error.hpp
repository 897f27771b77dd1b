#pragma once

#include <stdexcept>
#include <string>

namespace rmldp {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform to an operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A NaN or Inf reached an op while the finite-value guard was on.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

/// Malformed or insufficient input data (series too short, empty sets, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value or unknown configuration key.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Read/write failure or a malformed file.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace rmldp
