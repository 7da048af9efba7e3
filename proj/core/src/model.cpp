// Copyright (c) 2026 The Mixer Authors
// SPDX-License-Identifier: Apache-2.0

#include "mixer/model.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace mixer {

template <class T>
const Tensor<T>& MixerParams<T>::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw ContractError("no parameter named '" + name + "'");
  return it->second;
}

template <class T>
Tensor<T>& MixerParams<T>::at(const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw ContractError("no parameter named '" + name + "'");
  return it->second;
}

template <class T>
std::size_t MixerParams<T>::element_count(bool include_head) const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors) {
    if (!include_head && name.rfind("head/", 0) == 0) continue;
    n += t.size();
  }
  return n;
}

std::string block_param(std::size_t block, const std::string& leaf) {
  return "block" + std::to_string(block) + "/" + leaf;
}

namespace {

bool is_grouped(const MixerConfig& c) {
  return c.variant.kind == VariantKind::grouped || c.variant.kind == VariantKind::grouped_views;
}

// Length of the vectors the token-mixing MLP consumes.
std::size_t token_mlp_input(const MixerConfig& c) {
  const std::size_t s = sequence_length(c);
  return is_grouped(c) ? s * c.variant.groups : s;
}

}  // namespace

std::vector<ParamSpec> param_specs(const MixerConfig& config) {
  validate(config);
  const std::size_t c = config.hidden_c;
  const std::size_t s = sequence_length(config);
  const std::size_t ds = config.mlp_d_s;
  const std::size_t dc = config.mlp_d_c;
  const std::size_t pd = config.patch_dim();

  std::vector<ParamSpec> specs;
  specs.push_back({"stem/w", {pd, c}, InitKind::kernel, pd});
  specs.push_back({"stem/b", {c}, InitKind::bias, 1});
  for (std::size_t i = 0; i < config.num_blocks; ++i) {
    specs.push_back({block_param(i, "ln1/gamma"), {c}, InitKind::norm_scale, 1});
    specs.push_back({block_param(i, "ln1/beta"), {c}, InitKind::norm_shift, 1});
    if (config.variant.kind == VariantKind::grouped_views) {
      specs.push_back({block_param(i, "views/w"), {c, c}, InitKind::kernel, c});
      specs.push_back({block_param(i, "views/b"), {c}, InitKind::bias, 1});
    }
    if (config.variant.kind == VariantKind::untied_token) {
      specs.push_back({block_param(i, "token/w1"), {c, ds, s}, InitKind::kernel, s});
      specs.push_back({block_param(i, "token/b1"), {c, ds}, InitKind::bias, 1});
      specs.push_back({block_param(i, "token/w2"), {c, s, ds}, InitKind::kernel, ds});
      specs.push_back({block_param(i, "token/b2"), {c, s}, InitKind::bias, 1});
    } else {
      const std::size_t in = token_mlp_input(config);
      specs.push_back({block_param(i, "token/w1"), {ds, in}, InitKind::kernel, in});
      specs.push_back({block_param(i, "token/b1"), {ds}, InitKind::bias, 1});
      specs.push_back({block_param(i, "token/w2"), {in, ds}, InitKind::kernel, ds});
      specs.push_back({block_param(i, "token/b2"), {in}, InitKind::bias, 1});
    }
    specs.push_back({block_param(i, "ln2/gamma"), {c}, InitKind::norm_scale, 1});
    specs.push_back({block_param(i, "ln2/beta"), {c}, InitKind::norm_shift, 1});
    specs.push_back({block_param(i, "channel/w3"), {dc, c}, InitKind::kernel, c});
    specs.push_back({block_param(i, "channel/b3"), {dc}, InitKind::bias, 1});
    specs.push_back({block_param(i, "channel/w4"), {c, dc}, InitKind::kernel, dc});
    specs.push_back({block_param(i, "channel/b4"), {c}, InitKind::bias, 1});
  }
  specs.push_back({"prehead/gamma", {c}, InitKind::norm_scale, 1});
  specs.push_back({"prehead/beta", {c}, InitKind::norm_shift, 1});
  specs.push_back({"head/w", {c, config.num_classes}, InitKind::zero_kernel, c});
  specs.push_back({"head/b", {config.num_classes}, InitKind::bias, 1});
  return specs;
}

std::uint64_t param_count(const MixerConfig& config) {
  validate(config);
  const std::uint64_t c = config.hidden_c;
  const std::uint64_t s = sequence_length(config);
  const std::uint64_t ds = config.mlp_d_s;
  const std::uint64_t dc = config.mlp_d_c;
  const std::uint64_t g = config.variant.groups;

  const std::uint64_t stem = config.patch_dim() * c + c;
  std::uint64_t token = 0;
  switch (config.variant.kind) {
    case VariantKind::standard:
      token = 2 * s * ds + ds + s;
      break;
    case VariantKind::untied_token:
      token = c * (2 * s * ds + ds + s);
      break;
    case VariantKind::grouped:
      token = 2 * (s * g) * ds + ds + s * g;
      break;
    case VariantKind::grouped_views:
      token = 2 * (s * g) * ds + ds + s * g + c * c + c;
      break;
  }
  const std::uint64_t channel = 2 * c * dc + dc + c;
  const std::uint64_t norms = 4 * c;
  return stem + config.num_blocks * (norms + token + channel) + 2 * c;
}

std::uint64_t flops_per_image(const MixerConfig& config) {
  validate(config);
  const std::uint64_t c = config.hidden_c;
  const std::uint64_t s = sequence_length(config);
  const std::uint64_t ds = config.mlp_d_s;
  const std::uint64_t dc = config.mlp_d_c;
  std::uint64_t token = 2 * c * s * ds;
  if (config.variant.kind == VariantKind::grouped_views) token += s * c * c;
  const std::uint64_t channel = 2 * s * c * dc;
  return s * config.patch_dim() * c + config.num_blocks * (token + channel) + c * config.num_classes;
}

template <class T>
MixerParams<T> init_params(const MixerConfig& config, std::uint64_t seed) {
  // Std of a unit normal truncated to [-2, 2].
  constexpr double kTruncatedStd = 0.87962566103423978;
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  MixerParams<T> params;
  for (const auto& spec : param_specs(config)) {
    Tensor<T> t(spec.shape);
    switch (spec.init) {
      case InitKind::kernel: {
        const double scale = 1.0 / std::sqrt(double(spec.fan_in)) / kTruncatedStd;
        for (auto& v : t.data()) {
          double z;
          do {
            z = normal(rng);
          } while (std::abs(z) > 2.0);
          v = static_cast<T>(z * scale);
        }
        break;
      }
      case InitKind::norm_scale:
        t.fill(T(1));
        break;
      case InitKind::bias:
      case InitKind::norm_shift:
      case InitKind::zero_kernel:
        break;
    }
    params.tensors.emplace(spec.name, std::move(t));
  }
  return params;
}

std::vector<std::size_t> block_split_order(std::size_t k, std::size_t grid_h, std::size_t grid_w) {
  if (k == 0 || grid_h == 0 || grid_w == 0) throw ConfigError("block_split_order needs positive extents");
  const std::size_t big_w = k * grid_w;
  std::vector<std::size_t> order;
  order.reserve(k * k * grid_h * grid_w);
  for (std::size_t pr = 0; pr < k; ++pr)
    for (std::size_t pc = 0; pc < k; ++pc)
      for (std::size_t r = 0; r < grid_h; ++r)
        for (std::size_t c = 0; c < grid_w; ++c) order.push_back((pr * grid_h + r) * big_w + pc * grid_w + c);
  return order;
}

std::vector<std::size_t> token_order(const MixerConfig& config) {
  validate(config);
  const std::size_t k = config.split_factor;
  return block_split_order(k, config.grid_h() / k, config.grid_w() / k);
}

template <class T>
ParamVars<T> bind_params(Graph<T>& graph, const MixerParams<T>& params, bool trainable) {
  ParamVars<T> vars;
  for (const auto& [name, t] : params.tensors) {
    vars.emplace(name, trainable ? graph.param(name, t) : graph.constant(t));
  }
  return vars;
}

namespace {

template <class T>
Var<T> pv(const ParamVars<T>& p, const std::string& name) {
  auto it = p.find(name);
  if (it == p.end()) throw ContractError("missing parameter '" + name + "'");
  return it->second;
}

template <class T>
Var<T> dropout(Var<T> x, double rate, const ForwardContext& ctx) {
  if (ctx.mode != Mode::train || rate <= 0.0) return x;
  if (!ctx.rng) throw ContractError("train-mode dropout needs an rng");
  std::bernoulli_distribution keep(1.0 - rate);
  const T s = static_cast<T>(1.0 / (1.0 - rate));
  Tensor<T> mask(x.shape());
  for (auto& m : mask.data()) m = keep(*ctx.rng) ? s : T(0);
  return ops::mul_const(x, std::move(mask));
}

// Drops the whole residual branch per example.
template <class T>
Var<T> drop_path(Var<T> branch, double rate, const ForwardContext& ctx) {
  if (ctx.mode != Mode::train || rate <= 0.0) return branch;
  if (!ctx.rng) throw ContractError("train-mode stochastic depth needs an rng");
  std::bernoulli_distribution keep(1.0 - rate);
  const T s = static_cast<T>(1.0 / (1.0 - rate));
  const std::size_t batch = branch.shape()[0];
  const std::size_t per = branch.value().size() / batch;
  Tensor<T> mask(branch.shape());
  for (std::size_t b = 0; b < batch; ++b) {
    const T m = keep(*ctx.rng) ? s : T(0);
    std::fill(mask.ptr() + b * per, mask.ptr() + (b + 1) * per, m);
  }
  return ops::mul_const(branch, std::move(mask));
}

// Linear ramp over the 2L residual branches: 0 for the first, s for the last.
double branch_drop_prob(const MixerConfig& config, std::size_t branch) {
  const std::size_t n = 2 * config.num_blocks;
  if (n <= 1 || config.stoch_depth <= 0.0) return 0.0;
  return config.stoch_depth * double(branch) / double(n - 1);
}

// [B, S, C] -> [B, S*G, C/G]: column f of the result stacks the G columns of
// group f. `view_major` selects how a channel index splits into (group, f):
// grouped uses channel = f*G + g (neighbouring columns), views use
// channel = g*(C/G) + f (concatenated view outputs).
IndexMap grouping_map(std::size_t batch, std::size_t s, std::size_t c, std::size_t g, bool view_major,
                      bool inverse) {
  const std::size_t cg = c / g;
  auto map = std::make_shared<std::vector<std::size_t>>(batch * s * c);
  auto& m = *map;
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t gi = 0; gi < g; ++gi)
      for (std::size_t t = 0; t < s; ++t)
        for (std::size_t f = 0; f < cg; ++f) {
          const std::size_t channel = view_major ? gi * cg + f : f * g + gi;
          const std::size_t grouped = (b * s * g + gi * s + t) * cg + f;
          const std::size_t plain = (b * s + t) * c + channel;
          if (inverse) m[plain] = grouped;
          else m[grouped] = plain;
        }
  return map;
}

// Two-layer token MLP acting on the columns of y [B, N, F]; w1 is [D, N].
template <class T>
Var<T> token_mlp(Var<T> y, const ParamVars<T>& p, std::size_t block, double drop, const ForwardContext& ctx,
                 TokenMixLayout layout) {
  const Var<T> w1 = pv(p, block_param(block, "token/w1"));
  const Var<T> b1 = pv(p, block_param(block, "token/b1"));
  const Var<T> w2 = pv(p, block_param(block, "token/w2"));
  const Var<T> b2 = pv(p, block_param(block, "token/b2"));
  if (layout == TokenMixLayout::direct) {
    auto h = ops::add_bias_cols(ops::matmul(w1, y), b1);
    h = dropout(ops::gelu(h), drop, ctx);
    auto o = ops::add_bias_cols(ops::matmul(w2, h), b2);
    return dropout(o, drop, ctx);
  }
  auto yt = ops::transpose(y);
  auto h = ops::add_bias(ops::matmul(yt, ops::transpose(w1)), b1);
  h = dropout(ops::gelu(h), drop, ctx);
  auto o = ops::add_bias(ops::matmul(h, ops::transpose(w2)), b2);
  return dropout(ops::transpose(o), drop, ctx);
}

}  // namespace

template <class T>
Var<T> patchify_embed(const ParamVars<T>& p, Var<T> images, const MixerConfig& config) {
  validate(config);
  const Shape& is = images.shape();
  if (is.size() != 4 || is[1] != config.image_h || is[2] != config.image_w || is[3] != config.channels) {
    throw DimensionError("patchify_embed: images " + shape_str(is) + " do not match config " +
                         std::to_string(config.image_h) + "x" + std::to_string(config.image_w) + "x" +
                         std::to_string(config.channels));
  }
  const std::size_t batch = is[0];
  const std::size_t h = config.image_h;
  const std::size_t w = config.image_w;
  const std::size_t ch = config.channels;
  const std::size_t pp = config.patch;
  const std::size_t gw = config.grid_w();
  const std::size_t s = sequence_length(config);
  const std::size_t pd = config.patch_dim();
  const auto order = token_order(config);

  auto map = std::make_shared<std::vector<std::size_t>>(batch * s * pd);
  auto& m = *map;
  std::size_t o = 0;
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < s; ++t) {
      const std::size_t gy = order[t] / gw;
      const std::size_t gx = order[t] % gw;
      for (std::size_t py = 0; py < pp; ++py)
        for (std::size_t px = 0; px < pp; ++px)
          for (std::size_t c = 0; c < ch; ++c) m[o++] = ((b * h + gy * pp + py) * w + gx * pp + px) * ch + c;
    }
  auto patches = ops::gather(images, map, Shape{batch * s, pd});
  auto tokens = ops::add_bias(ops::matmul(patches, pv(p, "stem/w")), pv(p, "stem/b"));
  return ops::reshape(tokens, Shape{batch, s, config.hidden_c});
}

template <class T>
Var<T> mixer_block(Var<T> x, const ParamVars<T>& p, std::size_t block, const MixerConfig& config,
                   const ForwardContext& ctx, TokenMixLayout layout) {
  const Shape xs = x.shape();
  const std::size_t s = sequence_length(config);
  const std::size_t c = config.hidden_c;
  if (xs.size() != 3 || xs[1] != s || xs[2] != c) {
    throw DimensionError("mixer_block: input " + shape_str(xs) + " does not match S=" + std::to_string(s) +
                         ", C=" + std::to_string(c));
  }
  const std::size_t batch = xs[0];
  const T eps = static_cast<T>(kLayerNormEps);
  const double drop = config.drop_rate;

  // Token mixing: acts on the columns of LayerNorm(X).
  auto y = ops::layernorm(x, pv(p, block_param(block, "ln1/gamma")), pv(p, block_param(block, "ln1/beta")), eps);
  Var<T> mixed;
  switch (config.variant.kind) {
    case VariantKind::standard:
      mixed = token_mlp(y, p, block, drop, ctx, layout);
      break;
    case VariantKind::untied_token: {
      auto h = ops::channelwise_mix(y, pv(p, block_param(block, "token/w1")), pv(p, block_param(block, "token/b1")));
      h = dropout(ops::gelu(h), drop, ctx);
      auto o = ops::channelwise_mix(h, pv(p, block_param(block, "token/w2")), pv(p, block_param(block, "token/b2")));
      mixed = dropout(o, drop, ctx);
      break;
    }
    case VariantKind::grouped:
    case VariantKind::grouped_views: {
      const std::size_t g = config.variant.groups;
      const bool views = config.variant.kind == VariantKind::grouped_views;
      Var<T> src = y;
      if (views) {
        auto flat = ops::reshape(y, Shape{batch * s, c});
        auto proj = ops::add_bias(ops::matmul(flat, ops::transpose(pv(p, block_param(block, "views/w")))),
                                  pv(p, block_param(block, "views/b")));
        src = ops::reshape(proj, Shape{batch, s, c});
      }
      auto grouped = ops::gather(src, grouping_map(batch, s, c, g, views, false), Shape{batch, s * g, c / g});
      auto out = token_mlp(grouped, p, block, drop, ctx, layout);
      mixed = ops::gather(out, grouping_map(batch, s, c, g, views, true), Shape{batch, s, c});
      break;
    }
  }
  auto u = ops::add(x, drop_path(mixed, branch_drop_prob(config, 2 * block), ctx));

  // Channel mixing: acts on the rows of LayerNorm(U).
  auto z = ops::layernorm(u, pv(p, block_param(block, "ln2/gamma")), pv(p, block_param(block, "ln2/beta")), eps);
  auto h = ops::add_bias(ops::matmul(z, ops::transpose(pv(p, block_param(block, "channel/w3")))),
                         pv(p, block_param(block, "channel/b3")));
  h = dropout(ops::gelu(h), drop, ctx);
  auto o = ops::add_bias(ops::matmul(h, ops::transpose(pv(p, block_param(block, "channel/w4")))),
                         pv(p, block_param(block, "channel/b4")));
  o = dropout(o, drop, ctx);
  return ops::add(u, drop_path(o, branch_drop_prob(config, 2 * block + 1), ctx));
}

template <class T>
Var<T> trunk(const ParamVars<T>& p, Var<T> images, const MixerConfig& config, const ForwardContext& ctx) {
  auto x = patchify_embed(p, images, config);
  for (std::size_t i = 0; i < config.num_blocks; ++i) x = mixer_block(x, p, i, config, ctx);
  return x;
}

template <class T>
Var<T> token_features(const ParamVars<T>& p, Var<T> images, const MixerConfig& config, const ForwardContext& ctx) {
  auto x = trunk(p, images, config, ctx);
  return ops::layernorm(x, pv(p, std::string("prehead/gamma")), pv(p, std::string("prehead/beta")),
                        static_cast<T>(kLayerNormEps));
}

template <class T>
Var<T> pooled_features(const ParamVars<T>& p, Var<T> images, const MixerConfig& config,
                       const ForwardContext& ctx) {
  return ops::mean_tokens(token_features(p, images, config, ctx));
}

template <class T>
Var<T> forward(const ParamVars<T>& p, Var<T> images, const MixerConfig& config, const ForwardContext& ctx) {
  auto pooled = pooled_features(p, images, config, ctx);
  return ops::add_bias(ops::matmul(pooled, pv(p, std::string("head/w"))), pv(p, std::string("head/b")));
}

namespace {

template <class T>
Tensor<T> slice_batch(const Tensor<T>& t, std::size_t start, std::size_t count) {
  Shape s = t.shape();
  const std::size_t per = t.size() / s[0];
  s[0] = count;
  std::vector<T> data(t.ptr() + start * per, t.ptr() + (start + count) * per);
  return Tensor<T>(std::move(s), std::move(data));
}

template <class T, class Fn>
Tensor<T> predict_chunked(const MixerParams<T>& params, const Tensor<T>& images, std::size_t chunk, Fn fn) {
  if (images.rank() != 4) throw DimensionError("expected images [B,H,W,ch], got " + shape_str(images.shape()));
  const std::size_t n = images.dim(0);
  chunk = std::max<std::size_t>(1, chunk);
  std::vector<T> out;
  Shape row_shape;
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t count = std::min(chunk, n - start);
    Graph<T> g;
    auto p = bind_params(g, params, false);
    auto x = g.constant(slice_batch(images, start, count));
    const Tensor<T>& r = fn(p, x).value();
    row_shape.assign(r.shape().begin() + 1, r.shape().end());
    out.insert(out.end(), r.data().begin(), r.data().end());
  }
  Shape shape{n};
  shape.insert(shape.end(), row_shape.begin(), row_shape.end());
  return Tensor<T>(std::move(shape), std::move(out));
}

}  // namespace

template <class T>
Tensor<T> predict_logits(const MixerParams<T>& params, const MixerConfig& config, const Tensor<T>& images,
                         std::size_t chunk) {
  return predict_chunked(params, images, chunk,
                         [&](const ParamVars<T>& p, Var<T> x) { return forward(p, x, config, ForwardContext{}); });
}

template <class T>
Tensor<T> predict_features(const MixerParams<T>& params, const MixerConfig& config, const Tensor<T>& images,
                           std::size_t chunk) {
  return predict_chunked(params, images, chunk, [&](const ParamVars<T>& p, Var<T> x) {
    return pooled_features(p, x, config, ForwardContext{});
  });
}

template <class T>
Tensor<T> predict_token_features(const MixerParams<T>& params, const MixerConfig& config, const Tensor<T>& images) {
  return predict_chunked(params, images, 64, [&](const ParamVars<T>& p, Var<T> x) {
    return token_features(p, x, config, ForwardContext{});
  });
}

template <class T>
std::vector<std::size_t> argmax_rows(const Tensor<T>& m) {
  if (m.rank() != 2) throw DimensionError("argmax_rows expects a matrix, got " + shape_str(m.shape()));
  const std::size_t rows = m.dim(0);
  const std::size_t cols = m.dim(1);
  std::vector<std::size_t> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < cols; ++c)
      if (m[r * cols + c] > m[r * cols + best]) best = c;
    out[r] = best;
  }
  return out;
}

#define MIXER_INSTANTIATE_MODEL(T)                                                                              \
  template struct MixerParams<T>;                                                                               \
  template MixerParams<T> init_params<T>(const MixerConfig&, std::uint64_t);                                    \
  template ParamVars<T> bind_params(Graph<T>&, const MixerParams<T>&, bool);                                     \
  template Var<T> patchify_embed(const ParamVars<T>&, Var<T>, const MixerConfig&);                              \
  template Var<T> mixer_block(Var<T>, const ParamVars<T>&, std::size_t, const MixerConfig&, const ForwardContext&, \
                              TokenMixLayout);                                                                  \
  template Var<T> trunk(const ParamVars<T>&, Var<T>, const MixerConfig&, const ForwardContext&);                \
  template Var<T> token_features(const ParamVars<T>&, Var<T>, const MixerConfig&, const ForwardContext&);       \
  template Var<T> pooled_features(const ParamVars<T>&, Var<T>, const MixerConfig&, const ForwardContext&);      \
  template Var<T> forward(const ParamVars<T>&, Var<T>, const MixerConfig&, const ForwardContext&);              \
  template Tensor<T> predict_logits(const MixerParams<T>&, const MixerConfig&, const Tensor<T>&, std::size_t);  \
  template Tensor<T> predict_features(const MixerParams<T>&, const MixerConfig&, const Tensor<T>&, std::size_t); \
  template Tensor<T> predict_token_features(const MixerParams<T>&, const MixerConfig&, const Tensor<T>&);       \
  template std::vector<std::size_t> argmax_rows(const Tensor<T>&);

MIXER_INSTANTIATE_MODEL(float)
MIXER_INSTANTIATE_MODEL(double)

#undef MIXER_INSTANTIATE_MODEL

}  // namespace mixer
