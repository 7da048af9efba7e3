// Copyright (c) 2026 The Mixer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mixer {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor extents.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an operation's precondition (non-scalar loss, bad targets, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed on-disk data: dataset files, checkpoints, PGM images.
class FormatError : public Error {
 public:
  using Error::Error;
};

class SolverError : public Error {
 public:
  using Error::Error;
};

class UnsupportedError : public Error {
 public:
  using Error::Error;
};

/// Raised by the training loop when the loss stops being finite.
class DivergedError : public Error {
 public:
  explicit DivergedError(std::size_t step)
      : Error("diverged at step " + std::to_string(step)), m_step(step) {}
  std::size_t step() const noexcept { return m_step; }

 private:
  std::size_t m_step;
};

}  // namespace mixer
