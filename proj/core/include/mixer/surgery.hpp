// Copyright (c) 2026 The Mixer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "mixer/config.hpp"
#include "mixer/model.hpp"
#include "mixer/tensor.hpp"

namespace mixer {

/// Permutations use gather convention: permuted[i] = original[perm[i]].
using Permutation = std::vector<std::size_t>;

bool is_permutation(const Permutation& p);
Permutation identity_permutation(std::size_t n);
Permutation inverse_permutation(const Permutation& p);
/// Gathering with `first` and then with `second` equals gathering once with
/// the result.
Permutation compose(const Permutation& first, const Permutation& second);

/// Input permutations shared by every image of a dataset.
///  - token_perm reorders the patches of the raster patch grid;
///  - pixel_perm reorders the ch*P*P values inside every patch, flattened as
///    (row, column, channel);
///  - global_perm, when present, reorders the whole flattened H*W*ch image
///    after the patch-level step.
struct PermSpec {
  Permutation token_perm;
  Permutation pixel_perm;
  std::optional<Permutation> global_perm;

  static PermSpec identity(const MixerConfig& config);
  bool operator==(const PermSpec&) const = default;
};

void validate(const PermSpec& spec, const MixerConfig& config);
PermSpec inverse(const PermSpec& spec);

/// Applies the spec to one image [H, W, ch] or a batch [B, H, W, ch].
template <class T>
Tensor<T> permute_input(const Tensor<T>& images, const PermSpec& spec, const MixerConfig& config);

/// Weights such that the model with the returned parameters, fed
/// permute_input(x), produces the same logits as the original model on x.
/// Only the standard variant is supported, and global_perm must be absent.
template <class T>
MixerParams<T> permute_weights(const MixerParams<T>& params, const MixerConfig& config, const PermSpec& spec);

template <class T>
struct Expanded {
  MixerParams<T> params;
  MixerConfig config;
};

/// Grows the input resolution by an integer factor k without changing the
/// patch size. Token-mixing weights become block-diagonal with k^2 copies,
/// their biases are tiled k^2 times, everything else is copied. The result
/// consumes tokens in block-split order (config.split_factor = k).
template <class T>
Expanded<T> expand_for_resolution(const MixerParams<T>& params, const MixerConfig& config, std::size_t k);

/// Rows of seq ([S', C] or [B, S', C]) from raster order on the
/// (k*grid_h) x (k*grid_w) patch grid to the concatenation of k^2
/// raster-ordered sub-grids of grid_h x grid_w.
template <class T>
Tensor<T> reorder_tokens_block_split(const Tensor<T>& seq, std::size_t k, std::size_t grid_h, std::size_t grid_w);

/// Inverse of reorder_tokens_block_split.
template <class T>
Tensor<T> reorder_tokens_raster(const Tensor<T>& seq, std::size_t k, std::size_t grid_h, std::size_t grid_w);

}  // namespace mixer
