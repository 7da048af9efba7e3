// Copyright (c) 2026 The Mixer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "mixer/autodiff.hpp"
#include "mixer/config.hpp"
#include "mixer/tensor.hpp"

namespace mixer {

using Rng = std::mt19937_64;

enum class Mode { train, eval };

inline constexpr double kLayerNormEps = 1e-6;

/// Complete parameter set, keyed by canonical names such as "stem/w",
/// "block0/token/w1", "prehead/gamma" and "head/w".
template <class T>
struct MixerParams {
  std::map<std::string, Tensor<T>> tensors;

  const Tensor<T>& at(const std::string& name) const;
  Tensor<T>& at(const std::string& name);
  bool contains(const std::string& name) const { return tensors.count(name) != 0; }

  /// Total element count, optionally without head/w and head/b.
  std::size_t element_count(bool include_head = true) const;

  template <class U>
  MixerParams<U> cast() const {
    MixerParams<U> out;
    for (const auto& [name, t] : tensors) out.tensors.emplace(name, t.template cast<U>());
    return out;
  }

  bool operator==(const MixerParams&) const = default;
};

enum class InitKind { kernel, bias, norm_scale, norm_shift, zero_kernel };

struct ParamSpec {
  std::string name;
  Shape shape;
  InitKind init = InitKind::kernel;
  std::size_t fan_in = 1;
};

std::string block_param(std::size_t block, const std::string& leaf);

/// Every parameter tensor of `config` in canonical (checkpoint) order.
std::vector<ParamSpec> param_specs(const MixerConfig& config);

/// Closed-form parameter count excluding the classifier head.
std::uint64_t param_count(const MixerConfig& config);

/// Forward multiply-accumulates per image: stem, token and channel mixing
/// matmuls, and the head. Biases, norms and pooling are not counted.
std::uint64_t flops_per_image(const MixerConfig& config);

/// Dense kernels: truncated normal (cut at 2 std) rescaled so the sample std
/// is 1/sqrt(fan_in). Biases and LayerNorm shifts 0, LayerNorm scales 1, head
/// kernel 0. The f32 and f64 results of the same seed agree up to rounding.
template <class T>
MixerParams<T> init_params(const MixerConfig& config, std::uint64_t seed);

/// Token positions in the order the model consumes them: entry t is the
/// raster index on the patch grid of token t.
std::vector<std::size_t> token_order(const MixerConfig& config);

/// Raster order over a (k*grid_h) x (k*grid_w) grid regrouped into k^2
/// raster-ordered sub-grids (parts in raster order). Entry t is the raster
/// index of the token placed at position t.
std::vector<std::size_t> block_split_order(std::size_t k, std::size_t grid_h, std::size_t grid_w);

template <class T>
using ParamVars = std::map<std::string, Var<T>>;

/// Registers every tensor of `params` on the graph; as named leaves when
/// `trainable`, otherwise as constants.
template <class T>
ParamVars<T> bind_params(Graph<T>& graph, const MixerParams<T>& params, bool trainable);

/// Randomness and mode for one forward pass. `rng` may be null in eval mode.
struct ForwardContext {
  Mode mode = Mode::eval;
  Rng* rng = nullptr;
};

enum class TokenMixLayout {
  direct,      // W1 left-multiplies the [S, C] table
  transposed,  // transpose, right-multiply by W1^T, transpose back
};

/// images [B, H, W, ch] -> tokens [B, S, C].
template <class T>
Var<T> patchify_embed(const ParamVars<T>& p, Var<T> images, const MixerConfig& config);

/// One Mixer layer on x [B, S, C].
template <class T>
Var<T> mixer_block(Var<T> x, const ParamVars<T>& p, std::size_t block, const MixerConfig& config,
                   const ForwardContext& ctx, TokenMixLayout layout = TokenMixLayout::direct);

/// Stem and all blocks; returns the input of the pre-head LayerNorm.
template <class T>
Var<T> trunk(const ParamVars<T>& p, Var<T> images, const MixerConfig& config, const ForwardContext& ctx);

/// Pre-head LayerNorm output per token, [B, S, C].
template <class T>
Var<T> token_features(const ParamVars<T>& p, Var<T> images, const MixerConfig& config, const ForwardContext& ctx);

/// Globally pooled pre-head representation, [B, C].
template <class T>
Var<T> pooled_features(const ParamVars<T>& p, Var<T> images, const MixerConfig& config,
                       const ForwardContext& ctx);

/// Logits [B, K].
template <class T>
Var<T> forward(const ParamVars<T>& p, Var<T> images, const MixerConfig& config, const ForwardContext& ctx);

/// Eval-mode helpers that evaluate in chunks of at most `chunk` images.
template <class T>
Tensor<T> predict_logits(const MixerParams<T>& params, const MixerConfig& config, const Tensor<T>& images,
                         std::size_t chunk = 256);
template <class T>
Tensor<T> predict_features(const MixerParams<T>& params, const MixerConfig& config, const Tensor<T>& images,
                           std::size_t chunk = 256);
template <class T>
Tensor<T> predict_token_features(const MixerParams<T>& params, const MixerConfig& config,
                                 const Tensor<T>& images);

/// Index of the largest entry of each row; ties go to the lowest index.
template <class T>
std::vector<std::size_t> argmax_rows(const Tensor<T>& m);

}  // namespace mixer
