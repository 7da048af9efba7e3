// Copyright (c) 2026 The Mixer Authors
// SPDX-License-Identifier: Apache-2.0

#include "mixer/surgery.hpp"

#include <algorithm>
#include <numeric>

namespace mixer {

bool is_permutation(const Permutation& p) {
  std::vector<bool> seen(p.size(), false);
  for (auto v : p) {
    if (v >= p.size() || seen[v]) return false;
    seen[v] = true;
  }
  return true;
}

Permutation identity_permutation(std::size_t n) {
  Permutation p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  return p;
}

Permutation inverse_permutation(const Permutation& p) {
  if (!is_permutation(p)) throw ContractError("not a permutation");
  Permutation inv(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) inv[p[i]] = i;
  return inv;
}

Permutation compose(const Permutation& first, const Permutation& second) {
  if (first.size() != second.size()) throw DimensionError("compose: permutation sizes differ");
  Permutation out(first.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = first[second[i]];
  return out;
}

PermSpec PermSpec::identity(const MixerConfig& config) {
  return PermSpec{identity_permutation(sequence_length(config)), identity_permutation(config.patch_dim()),
                  std::nullopt};
}

void validate(const PermSpec& spec, const MixerConfig& config) {
  if (spec.token_perm.size() != sequence_length(config) || !is_permutation(spec.token_perm)) {
    throw DimensionError("token_perm must be a permutation of " + std::to_string(sequence_length(config)));
  }
  if (spec.pixel_perm.size() != config.patch_dim() || !is_permutation(spec.pixel_perm)) {
    throw DimensionError("pixel_perm must be a permutation of " + std::to_string(config.patch_dim()));
  }
  if (spec.global_perm) {
    const std::size_t n = config.image_h * config.image_w * config.channels;
    if (spec.global_perm->size() != n || !is_permutation(*spec.global_perm)) {
      throw DimensionError("global_perm must be a permutation of " + std::to_string(n));
    }
  }
}

PermSpec inverse(const PermSpec& spec) {
  // Patch step and global step do not commute, so only specs with a single
  // active step invert component-wise.
  PermSpec out{inverse_permutation(spec.token_perm), inverse_permutation(spec.pixel_perm), std::nullopt};
  if (spec.global_perm) {
    const bool patch_identity = spec.token_perm == identity_permutation(spec.token_perm.size()) &&
                                spec.pixel_perm == identity_permutation(spec.pixel_perm.size());
    if (!patch_identity) throw UnsupportedError("inverse of a spec with both patch and global steps");
    out.global_perm = inverse_permutation(*spec.global_perm);
  }
  return out;
}

template <class T>
Tensor<T> permute_input(const Tensor<T>& images, const PermSpec& spec, const MixerConfig& config) {
  validate(spec, config);
  const bool single = images.rank() == 3;
  const Shape& is = images.shape();
  const std::size_t off = single ? 0 : 1;
  if ((images.rank() != 3 && images.rank() != 4) || is[off] != config.image_h || is[off + 1] != config.image_w ||
      is[off + 2] != config.channels) {
    throw DimensionError("permute_input: image " + shape_str(is) + " does not match config geometry");
  }
  const std::size_t h = config.image_h;
  const std::size_t w = config.image_w;
  const std::size_t ch = config.channels;
  const std::size_t pp = config.patch;
  const std::size_t gw = config.grid_w();
  const std::size_t per = h * w * ch;
  const std::size_t batch = images.size() / per;

  // Position of element (token t, pixel j) in the flattened image.
  auto flat = [&](std::size_t t, std::size_t j) {
    const std::size_t gy = t / gw;
    const std::size_t gx = t % gw;
    const std::size_t c = j % ch;
    const std::size_t px = (j / ch) % pp;
    const std::size_t py = j / (ch * pp);
    return ((gy * pp + py) * w + gx * pp + px) * ch + c;
  };

  Tensor<T> out(is);
  const std::size_t s = spec.token_perm.size();
  const std::size_t pd = spec.pixel_perm.size();
  for (std::size_t b = 0; b < batch; ++b) {
    const T* src = images.ptr() + b * per;
    T* dst = out.ptr() + b * per;
    for (std::size_t t = 0; t < s; ++t)
      for (std::size_t j = 0; j < pd; ++j) dst[flat(t, j)] = src[flat(spec.token_perm[t], spec.pixel_perm[j])];
    if (spec.global_perm) {
      std::vector<T> tmp(dst, dst + per);
      const auto& gp = *spec.global_perm;
      for (std::size_t i = 0; i < per; ++i) dst[i] = tmp[gp[i]];
    }
  }
  return out;
}

template <class T>
MixerParams<T> permute_weights(const MixerParams<T>& params, const MixerConfig& config, const PermSpec& spec) {
  if (config.variant.kind != VariantKind::standard) {
    throw UnsupportedError("permute_weights supports the standard variant only");
  }
  if (spec.global_perm) throw UnsupportedError("no weight transform exists for a global pixel permutation");
  validate(spec, config);

  // token_perm is stated on the raster grid; translate it to sequence positions.
  const auto order = token_order(config);
  const auto inv_order = inverse_permutation(order);
  const std::size_t s = order.size();
  Permutation seq_perm(s);
  for (std::size_t t = 0; t < s; ++t) seq_perm[t] = inv_order[spec.token_perm[order[t]]];

  MixerParams<T> out = params;

  // stem_w' rows follow the pixel permutation.
  const Tensor<T>& stem = params.at("stem/w");
  Tensor<T>& stem_out = out.at("stem/w");
  const std::size_t c = stem.dim(1);
  for (std::size_t j = 0; j < spec.pixel_perm.size(); ++j)
    std::copy_n(stem.ptr() + spec.pixel_perm[j] * c, c, stem_out.ptr() + j * c);

  for (std::size_t i = 0; i < config.num_blocks; ++i) {
    // w1' = w1 P^T: column t takes column seq_perm[t].
    const Tensor<T>& w1 = params.at(block_param(i, "token/w1"));
    Tensor<T>& w1o = out.at(block_param(i, "token/w1"));
    const std::size_t ds = w1.dim(0);
    for (std::size_t d = 0; d < ds; ++d)
      for (std::size_t t = 0; t < s; ++t) w1o[d * s + t] = w1[d * s + seq_perm[t]];
    // w2' = P w2 and b2' = P b2: row t takes row seq_perm[t].
    const Tensor<T>& w2 = params.at(block_param(i, "token/w2"));
    Tensor<T>& w2o = out.at(block_param(i, "token/w2"));
    const Tensor<T>& b2 = params.at(block_param(i, "token/b2"));
    Tensor<T>& b2o = out.at(block_param(i, "token/b2"));
    for (std::size_t t = 0; t < s; ++t) {
      std::copy_n(w2.ptr() + seq_perm[t] * ds, ds, w2o.ptr() + t * ds);
      b2o[t] = b2[seq_perm[t]];
    }
  }
  return out;
}

namespace {

template <class T>
Tensor<T> block_diagonal(const Tensor<T>& m, std::size_t copies) {
  const std::size_t rows = m.dim(0);
  const std::size_t cols = m.dim(1);
  Tensor<T> out(Shape{rows * copies, cols * copies});
  const std::size_t out_cols = cols * copies;
  for (std::size_t q = 0; q < copies; ++q)
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(m.ptr() + r * cols, cols, out.ptr() + (q * rows + r) * out_cols + q * cols);
  return out;
}

template <class T>
Tensor<T> tiled(const Tensor<T>& v, std::size_t copies) {
  Tensor<T> out(Shape{v.size() * copies});
  for (std::size_t q = 0; q < copies; ++q) std::copy_n(v.ptr(), v.size(), out.ptr() + q * v.size());
  return out;
}

template <class T>
Tensor<T> gather_rows(const Tensor<T>& seq, const std::vector<std::size_t>& rows_from) {
  if (seq.rank() != 2 && seq.rank() != 3) {
    throw DimensionError("expected a token table [S, C] or [B, S, C], got " + shape_str(seq.shape()));
  }
  const std::size_t s = seq.shape()[seq.rank() - 2];
  if (s != rows_from.size()) {
    throw DimensionError("token table has " + std::to_string(s) + " rows, expected " +
                         std::to_string(rows_from.size()));
  }
  const std::size_t c = seq.shape().back();
  const std::size_t batch = seq.size() / (s * c);
  Tensor<T> out(seq.shape());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < s; ++t)
      std::copy_n(seq.ptr() + (b * s + rows_from[t]) * c, c, out.ptr() + (b * s + t) * c);
  return out;
}

}  // namespace

template <class T>
Expanded<T> expand_for_resolution(const MixerParams<T>& params, const MixerConfig& config, std::size_t k) {
  if (k < 1) throw ConfigError("expansion factor must be >= 1");
  if (config.variant.kind != VariantKind::standard) {
    throw UnsupportedError("expand_for_resolution supports the standard variant only");
  }
  validate(config);
  if (k == 1) return {params, config};
  if (config.split_factor != 1) throw UnsupportedError("model is already expanded");

  const std::size_t copies = k * k;
  MixerConfig next = config;
  next.image_h *= k;
  next.image_w *= k;
  next.mlp_d_s *= copies;
  next.split_factor = k;

  MixerParams<T> out = params;
  for (std::size_t i = 0; i < config.num_blocks; ++i) {
    for (const char* leaf : {"token/w1", "token/w2"}) {
      out.at(block_param(i, leaf)) = block_diagonal(params.at(block_param(i, leaf)), copies);
    }
    for (const char* leaf : {"token/b1", "token/b2"}) {
      out.at(block_param(i, leaf)) = tiled(params.at(block_param(i, leaf)), copies);
    }
  }
  return {std::move(out), next};
}

template <class T>
Tensor<T> reorder_tokens_block_split(const Tensor<T>& seq, std::size_t k, std::size_t grid_h, std::size_t grid_w) {
  return gather_rows(seq, block_split_order(k, grid_h, grid_w));
}

template <class T>
Tensor<T> reorder_tokens_raster(const Tensor<T>& seq, std::size_t k, std::size_t grid_h, std::size_t grid_w) {
  return gather_rows(seq, inverse_permutation(block_split_order(k, grid_h, grid_w)));
}

#define MIXER_INSTANTIATE_SURGERY(T)                                                                          \
  template Tensor<T> permute_input(const Tensor<T>&, const PermSpec&, const MixerConfig&);                    \
  template MixerParams<T> permute_weights(const MixerParams<T>&, const MixerConfig&, const PermSpec&);        \
  template Expanded<T> expand_for_resolution(const MixerParams<T>&, const MixerConfig&, std::size_t);         \
  template Tensor<T> reorder_tokens_block_split(const Tensor<T>&, std::size_t, std::size_t, std::size_t);     \
  template Tensor<T> reorder_tokens_raster(const Tensor<T>&, std::size_t, std::size_t, std::size_t);

MIXER_INSTANTIATE_SURGERY(float)
MIXER_INSTANTIATE_SURGERY(double)

#undef MIXER_INSTANTIATE_SURGERY

}  // namespace mixer
