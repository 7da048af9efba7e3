// Copyright (c) 2026 The Mixer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace mixer {

enum class VariantKind { standard, untied_token, grouped, grouped_views };

struct Variant {
  VariantKind kind = VariantKind::standard;
  std::size_t groups = 1;  // G for the grouped variants

  bool operator==(const Variant&) const = default;
};

std::string to_string(VariantKind kind);
VariantKind variant_kind_from_string(const std::string& name);

/// Architecture hyperparameters of one Mixer model.
struct MixerConfig {
  std::size_t num_blocks = 1;
  std::size_t patch = 4;
  std::size_t hidden_c = 8;
  std::size_t mlp_d_s = 16;
  std::size_t mlp_d_c = 32;
  std::size_t image_h = 8;
  std::size_t image_w = 8;
  std::size_t channels = 3;
  std::size_t num_classes = 10;
  Variant variant;
  double drop_rate = 0.0;
  double stoch_depth = 0.0;
  // Tokens are laid out as split_factor^2 raster-ordered sub-grids, each
  // covering one part of a split_factor x split_factor split of the image.
  // 1 means plain raster order. Set by resolution expansion.
  std::size_t split_factor = 1;

  std::size_t grid_h() const { return image_h / patch; }
  std::size_t grid_w() const { return image_w / patch; }
  std::size_t patch_dim() const { return channels * patch * patch; }

  bool operator==(const MixerConfig&) const = default;
};

/// Throws ConfigError when an invariant does not hold: patch divides both
/// image sides, grouped variants divide C, rates lie in [0, 1), ...
void validate(const MixerConfig& config);

/// S = H * W / P^2.
std::size_t sequence_length(const MixerConfig& config);

/// Configurations addressable by name: the seven Table-1-style rows
/// ("S/32" ... "H/14", at 224x224 with 1000 classes), "toy" and "tiny-cifar".
std::vector<std::string> named_config_names();
MixerConfig named_config(const std::string& name);

std::string config_to_json(const MixerConfig& config);
MixerConfig config_from_json(const std::string& text);

}  // namespace mixer
