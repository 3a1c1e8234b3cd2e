// Copyright 2026 The avjoint Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace avj {

// Every failure raised by the library derives from Error. The C API maps each
// kind onto a status code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes that do not fit an operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A precondition on a scalar argument (timestep range, ordering, mode).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value or missing/unknown config field.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Empty or malformed dataset content.
class DataError : public Error {
 public:
  using Error::Error;
};

// Filesystem failures; the message carries the path.
class IoError : public Error {
 public:
  using Error::Error;
};

// Artifact written by an incompatible format version.
class IncompatibleError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf produced by an operation or a training step.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace avj
