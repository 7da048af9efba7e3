// Copyright (c) 2026 The Mixer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "mixer/config.hpp"
#include "mixer/model.hpp"

namespace mixer {

/// Adds N(0, sigma^2) noise to every tensor so that no gradient path is
/// blocked by a zero initialization (such as the zero head kernel).
template <class T>
void perturb_params(MixerParams<T>& params, std::uint64_t seed, double sigma = 0.2);

struct GradCheckResult {
  double max_rel_error = 0;
  std::string worst_param;
  /// Same comparison against the two-point difference (f(x+h) - f(x-h)) / 2h,
  /// whose O(h^2) truncation error dominates for gradients near 1e-6.
  double max_rel_error_2pt = 0;
  std::size_t checked = 0;
};

/// Compares every parameter gradient of the softmax cross-entropy of a
/// perturbed f64 model (eval mode, two random images, random soft targets)
/// against the fourth-order central difference with step h,
/// (8 (f(x+h) - f(x-h)) - (f(x+2h) - f(x-2h))) / 12h. The relative error is
/// |a - n| / max(|a|, |n|, floor); the floor keeps exactly-zero gradients
/// (measured as f64 rounding noise) from dividing by zero.
GradCheckResult gradient_check(const MixerConfig& config, std::uint64_t seed, double h = 1e-4,
                               double floor = 1e-6);

struct PermCheckResult {
  double max_logit_delta = 0;
  std::size_t specs = 0;
  std::size_t images = 0;
};

/// For `specs` random (token, pixel) permutation pairs and `images` random
/// inputs, the largest |logit difference| between the permuted model on
/// permuted inputs and the original model on the original inputs.
PermCheckResult permutation_check(const MixerParams<float>& params, const MixerConfig& config, std::size_t specs,
                                  std::size_t images, std::uint64_t seed);

}  // namespace mixer
