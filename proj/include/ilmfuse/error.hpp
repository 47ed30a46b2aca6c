#pragma once

#include <stdexcept>
#include <string>

namespace ilmfuse {

/// Base for every error the library raises. Each subclass maps to one
/// failure category so callers (the CLI in particular) can pick an exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes or lengths disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf produced or consumed by a kernel.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Bad magic, unknown version, checksum mismatch, unparseable header.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Structurally readable input that violates a model or data invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Missing, unreadable, unwritable or truncated files.
class IoError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an operation precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Fusion configuration is invalid or incompatible with the loaded models.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace ilmfuse
