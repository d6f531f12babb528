#pragma once

#include <stdexcept>
#include <string>

namespace refjac {

// Root of every error raised by the library. The CLI maps the subclasses
// onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite numbers, points that should be on the boundary but are not, etc.
class InvalidInputError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

// Explicit penalty step would overshoot the projection (dt * n > 1).
class StabilityError : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

// A path state that violates the scheme invariants (e.g. X outside D).
class CorruptedStateError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// Monte Carlo produced data that cannot support the requested statistic.
class DegenerateDataError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace refjac
