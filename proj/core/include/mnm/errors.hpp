#pragma once

#include <stdexcept>
#include <string>

namespace mnm {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A reduction was asked to run over zero valid entries.
class EmptySetError : public Error {
 public:
  using Error::Error;
};

/// A NaN or infinity showed up where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value, unknown key or inconsistent sizes.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input that cannot be clustered (e.g. every weight is zero).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// A text record could not be parsed.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// File header, version or tensor shape mismatch.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Training diverged (non-finite loss or gradient).
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace mnm
