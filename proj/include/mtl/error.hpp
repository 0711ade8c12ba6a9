#pragma once

#include <stdexcept>
#include <string>

namespace mtl {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not fit the requested operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A NaN or infinity entered or left an operation.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

/// Misuse of a computation graph (consumed graph, foreign tensor, stale data).
class GraphError : public Error {
 public:
  using Error::Error;
};

/// Malformed or truncated input file.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Invalid user-supplied configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace mtl
