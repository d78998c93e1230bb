#pragma once

#include <stdexcept>
#include <string>

namespace pidkl {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Bad input: shapes, files, schemas, configuration values.
class ValidationError : public Error {
public:
  using Error::Error;
};

/// Numerical breakdown during factorization, differentiation or training.
class NumericalError : public Error {
public:
  using Error::Error;
};

class DimensionMismatch : public ValidationError {
public:
  using ValidationError::ValidationError;
};

class ParseError : public ValidationError {
public:
  using ValidationError::ValidationError;
};

class SchemaMismatch : public ValidationError {
public:
  using ValidationError::ValidationError;
};

class InvalidSplit : public ValidationError {
public:
  using ValidationError::ValidationError;
};

class InsufficientData : public ValidationError {
public:
  using ValidationError::ValidationError;
};

class IoError : public ValidationError {
public:
  using ValidationError::ValidationError;
};

class CacheInvalid : public ValidationError {
public:
  using ValidationError::ValidationError;
};

class UnsupportedPrimitive : public ValidationError {
public:
  using ValidationError::ValidationError;
};

class FactorizationFailure : public NumericalError {
public:
  using NumericalError::NumericalError;
};

class NonFiniteIntermediate : public NumericalError {
public:
  using NumericalError::NumericalError;
};

class NonFiniteGradient : public NumericalError {
public:
  using NumericalError::NumericalError;
};

class TrainingDiverged : public NumericalError {
public:
  using NumericalError::NumericalError;
};

inline void require_dims(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw DimensionMismatch(std::string(what) + ": expected dimension " + std::to_string(want) +
                            ", got " + std::to_string(got));
  }
}

}  // namespace pidkl
