#pragma once

#include <stdexcept>
#include <string>

namespace gmmrad {

/// Base of every error raised by the library. The CLI maps each subclass to
/// its own exit status.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid user configuration (flags, config file, missing paths).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input data violating an invariant (schema, labels, non-finite values).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Malformed binary container.
class FormatError : public DataError {
 public:
  enum class Kind { BadMagic, UnsupportedVersion, Truncated, InconsistentLength, InvalidValue };

  FormatError(Kind kind, const std::string& what) : DataError(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace gmmrad
