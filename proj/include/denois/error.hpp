#pragma once

#include <stdexcept>
#include <string>

namespace denois {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Degenerate or inconsistent imaging geometry.
class GeometryError : public Error {
 public:
  using Error::Error;
};

/// Tensor / vector dimensions that do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// NaN, divergence, or a failed numerical precondition.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// File reading/writing problems, including malformed tensor files.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Wire protocol violations, timeouts and remote errors.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

}  // namespace denois
