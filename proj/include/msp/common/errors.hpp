#pragma once

#include <stdexcept>
#include <string>

namespace msp {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

class EmptyInputError : public ContractError {
 public:
  using ContractError::ContractError;
};

/// Loss requested over a set with no contributing positions.
class UndefinedLossError : public ContractError {
 public:
  using ContractError::ContractError;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A serialized artifact (grid, codebook, checkpoint, wav) is malformed.
class CorruptDataError : public Error {
 public:
  using Error::Error;
};

/// NaN or infinity where finite values are required.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace msp
