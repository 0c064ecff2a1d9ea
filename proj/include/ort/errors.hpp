#pragma once

#include <stdexcept>
#include <string>

namespace ort {

/// Base for every error raised by the library. The CLI maps the concrete
/// type to a process exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad flag, bad call sequence, or an API used outside its contract.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration values (rates, sizes, splits).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Tensor extents that do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf where finite values are required, or a degenerate statistic.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed or truncated files.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace ort
