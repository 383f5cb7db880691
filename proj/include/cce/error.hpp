// Copyright 2026 The CCE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace cce {

/// Base class for every error raised by the library. The CLI maps the
/// concrete subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible matrix or tensor shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid argument values or malformed configuration.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values, failed convergence and other numerical breakdowns.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// An iterative decomposition hit its sweep cap.
class DecompositionError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// The requested parameter budget cannot be met.
class PlanningError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Step-over-step reconstruction loss growth above the configured ceiling.
class DivergenceError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Checkpoint bytes failed validation (checksum, magic, truncation).
class ChecksumError : public Error {
 public:
  using Error::Error;
};

}  // namespace cce
