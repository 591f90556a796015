#pragma once

#include <stdexcept>
#include <string>

namespace mininet {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible with the requested operation.
class InvalidShape : public Error {
 public:
  using Error::Error;
};

/// A configuration value is outside its legal domain.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A caller broke a documented precondition (e.g. backward on a non-scalar).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

/// A loss, gradient or update produced NaN/Inf.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint or tensor file failed validation (checksum, version, shape).
class CheckpointError : public Error {
 public:
  using Error::Error;
};

/// No valid pixels remain after masking and capping.
class EmptyEvaluation : public Error {
 public:
  using Error::Error;
};

class InvalidCrop : public Error {
 public:
  using Error::Error;
};

}  // namespace mininet
