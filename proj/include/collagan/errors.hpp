#pragma once

#include <stdexcept>
#include <string>

namespace collagan {

// Base for every error raised by the library. The CLI maps the concrete
// subclasses onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes or invalid op attributes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Malformed files, missing inputs, inconsistent datasets.
class DataError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf encountered in losses, gradients or parameters.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Invalid user configuration (bad keys, out-of-range values).
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace collagan
