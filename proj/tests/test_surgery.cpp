// Copyright (c) 2026 The Mixer Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "mixer/data.hpp"
#include "mixer/errors.hpp"
#include "mixer/surgery.hpp"
#include "mixer/verify.hpp"
#include "test_util.hpp"

namespace mixer {
namespace {

using testing::random_tensor;
using testing::small_config;

MixerParams<float> random_params(const MixerConfig& c, std::uint64_t seed) {
  auto p = init_params<float>(c, seed);
  perturb_params(p, seed + 1, 0.3);
  return p;
}

TEST(Permutation, Helpers) {
  const Permutation p{2, 0, 3, 1};
  EXPECT_TRUE(is_permutation(p));
  EXPECT_FALSE(is_permutation({0, 0, 1}));
  EXPECT_EQ(compose(p, inverse_permutation(p)), identity_permutation(4));
  EXPECT_EQ(compose(inverse_permutation(p), p), identity_permutation(4));
  EXPECT_EQ(compose(p, p), (Permutation{3, 2, 1, 0}));
}

TEST(PermuteInput, IdentityLeavesImageUnchanged) {
  const auto c = named_config("toy");
  const auto x = random_tensor<float>({2, 8, 8, 3}, 1);
  EXPECT_EQ(permute_input(x, PermSpec::identity(c), c), x);
}

TEST(PermuteInput, ReversedTokensOnTwoByTwoGrid) {
  const auto c = named_config("toy");  // 2x2 grid of 4x4 patches
  auto spec = PermSpec::identity(c);
  spec.token_perm = {3, 2, 1, 0};
  const auto x = random_tensor<float>({8, 8, 3}, 2);
  const auto y = permute_input(x, spec, c);
  for (std::size_t t = 0; t < 4; ++t) {
    const std::size_t src = 3 - t;
    for (std::size_t py = 0; py < 4; ++py)
      for (std::size_t px = 0; px < 4; ++px)
        for (std::size_t ch = 0; ch < 3; ++ch)
          EXPECT_EQ(y.at({(t / 2) * 4 + py, (t % 2) * 4 + px, ch}), x.at({(src / 2) * 4 + py, (src % 2) * 4 + px, ch}));
  }
}

TEST(PermuteInput, TwiceEqualsSquaredOnce) {
  const auto c = named_config("toy");
  const auto spec = build_perm_pipeline(PermKind::patch, c, 3);
  PermSpec squared{compose(spec.token_perm, spec.token_perm), compose(spec.pixel_perm, spec.pixel_perm), std::nullopt};
  const auto x = random_tensor<float>({3, 8, 8, 3}, 4);
  EXPECT_EQ(permute_input(permute_input(x, spec, c), spec, c), permute_input(x, squared, c));

  const auto global = build_perm_pipeline(PermKind::global, c, 5);
  PermSpec global_sq = global;
  global_sq.global_perm = compose(*global.global_perm, *global.global_perm);
  EXPECT_EQ(permute_input(permute_input(x, global, c), global, c), permute_input(x, global_sq, c));
}

TEST(PermuteInput, SizeMismatchThrows) {
  const auto c = named_config("toy");
  auto spec = PermSpec::identity(c);
  spec.token_perm = {0, 1};
  EXPECT_THROW(permute_input(Tensor<float>(Shape{8, 8, 3}), spec, c), DimensionError);
}

TEST(PermuteWeights, IdentityAndInverseAreExact) {
  const auto c = named_config("toy");
  const auto params = random_params(c, 6);
  EXPECT_EQ(permute_weights(params, c, PermSpec::identity(c)), params);
  const auto spec = build_perm_pipeline(PermKind::patch, c, 7);
  EXPECT_EQ(permute_weights(permute_weights(params, c, spec), c, inverse(spec)), params);
}

TEST(PermuteWeights, ExplicitFormulas) {
  const auto c = small_config(1, 2, 2, 4, 3, 5);
  const auto params = random_params(c, 8);
  const auto spec = build_perm_pipeline(PermKind::patch, c, 9);
  const auto q = permute_weights(params, c, spec);
  const auto& p = spec.token_perm;
  for (std::size_t d = 0; d < 3; ++d)
    for (std::size_t t = 0; t < 4; ++t) {
      EXPECT_EQ(q.at("block0/token/w1").at({d, t}), params.at("block0/token/w1").at({d, p[t]}));
      EXPECT_EQ(q.at("block0/token/w2").at({t, d}), params.at("block0/token/w2").at({p[t], d}));
    }
  for (std::size_t t = 0; t < 4; ++t) EXPECT_EQ(q.at("block0/token/b2")[t], params.at("block0/token/b2")[p[t]]);
  for (std::size_t r = 0; r < c.patch_dim(); ++r)
    for (std::size_t j = 0; j < 4; ++j)
      EXPECT_EQ(q.at("stem/w").at({r, j}), params.at("stem/w").at({spec.pixel_perm[r], j}));
}

TEST(PermuteWeights, TransformedModelOnPermutedInputsMatches) {
  auto c = named_config("toy");
  c.num_blocks = 2;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto params = random_params(c, seed);
    const auto spec = build_perm_pipeline(PermKind::patch, c, seed + 100);
    const auto x = random_tensor<float>({32, 8, 8, 3}, seed + 200);
    const auto a = predict_logits(params, c, x);
    const auto b = predict_logits(permute_weights(params, c, spec), c, permute_input(x, spec, c));
    EXPECT_LT(max_abs_diff(a, b), 1e-5f);
  }
}

TEST(PermuteWeights, DoublePrecisionTolerance) {
  const auto c = named_config("toy");
  auto params = init_params<double>(c, 1);
  perturb_params(params, 2, 0.3);
  const auto spec = build_perm_pipeline(PermKind::patch, c, 3);
  const auto x = random_tensor<double>({8, 8, 8, 3}, 4);
  EXPECT_LT(max_abs_diff(predict_logits(params, c, x),
                         predict_logits(permute_weights(params, c, spec), c, permute_input(x, spec, c))),
            1e-10);
}

TEST(PermuteWeights, RejectsVariantsAndGlobalPerm) {
  auto c = small_config(1, 2, 2, 4, 3, 5);
  EXPECT_THROW(permute_weights(random_params(c, 1), c, build_perm_pipeline(PermKind::global, c, 1)),
               UnsupportedError);
  c.variant = {VariantKind::grouped, 2};
  EXPECT_THROW(permute_weights(random_params(c, 1), c, PermSpec::identity(c)), UnsupportedError);
  c.variant = {VariantKind::untied_token, 1};
  EXPECT_THROW(permute_weights(random_params(c, 1), c, PermSpec::identity(c)), UnsupportedError);
}

// ---- resolution expansion ----------------------------------------------------------

TEST(BlockSplit, HandTableOnFourByFourGrid) {
  // Parts in raster order (top-left, top-right, bottom-left, bottom-right),
  // each listed in raster order: entry t is the raster index placed at t.
  const std::vector<std::size_t> table{0, 1, 4, 5, 2, 3, 6, 7, 8, 9, 12, 13, 10, 11, 14, 15};
  EXPECT_EQ(block_split_order(2, 2, 2), table);
  Tensor<double> seq(Shape{16, 1});
  for (std::size_t i = 0; i < 16; ++i) seq[i] = double(i);
  const auto split = reorder_tokens_block_split(seq, 2, 2, 2);
  for (std::size_t t = 0; t < 16; ++t) EXPECT_EQ(split[t], double(table[t]));
  // Row 1, column 2 (0-based) lies in the top-right quadrant, the second part.
  const std::size_t raster = 1 * 4 + 2;
  const auto pos = std::size_t(std::find(table.begin(), table.end(), raster) - table.begin());
  EXPECT_EQ(pos / 4, 1u);
}

TEST(BlockSplit, IdentityForOneAndInverseRoundTrip) {
  const auto seq = random_tensor<double>({2, 24, 3}, 5);
  EXPECT_EQ(reorder_tokens_block_split(seq.reshaped({48, 3}), 1, 6, 8), seq.reshaped({48, 3}));
  EXPECT_EQ(reorder_tokens_raster(reorder_tokens_block_split(seq, 2, 2, 3), 2, 2, 3), seq);
  EXPECT_THROW(reorder_tokens_block_split(Tensor<double>(Shape{10, 3}), 2, 2, 2), DimensionError);
}

TEST(Expand, FactorOneIsUnchanged) {
  const auto c = named_config("toy");
  const auto params = random_params(c, 10);
  const auto e = expand_for_resolution(params, c, 1);
  EXPECT_EQ(e.params, params);
  EXPECT_EQ(e.config, c);
}

TEST(Expand, ShapesAndParameterDelta) {
  for (std::size_t k : {2u, 3u}) {
    auto c = named_config("toy");
    c.num_blocks = 2;
    const auto e = expand_for_resolution(random_params(c, 11), c, k);
    const std::uint64_t s = 4, ds = 16, l = 2, k2 = k * k, k4 = k2 * k2;
    EXPECT_EQ(sequence_length(e.config), k2 * s);
    EXPECT_EQ(e.config.mlp_d_s, k2 * ds);
    EXPECT_EQ(e.params.at("block1/token/w1").shape(), (Shape{k2 * ds, k2 * s}));
    EXPECT_EQ(e.params.at("block1/token/w2").shape(), (Shape{k2 * s, k2 * ds}));
    // Dense count: w1' and w2' each grow by (K^4 - 1) S Ds, b1' and b2' by (K^2 - 1)(Ds + S).
    EXPECT_EQ(param_count(e.config) - param_count(c), l * ((k4 - 1) * 2 * s * ds + (k2 - 1) * (ds + s)));
    // The (K^4 - K^2) 2 S Ds term counts the structurally zero off-diagonal entries.
    std::uint64_t zeros = 0;
    for (std::size_t b = 0; b < 2; ++b)
      for (auto leaf : {"token/w1", "token/w2"}) {
        const auto& w = e.params.at(block_param(b, leaf));
        const std::size_t rows = w.dim(0) / k2, cols = w.dim(1) / k2;
        for (std::size_t r = 0; r < w.dim(0); ++r)
          for (std::size_t col = 0; col < w.dim(1); ++col)
            if (r / rows != col / cols) zeros += w.at({r, col}) == 0.0f;
      }
    EXPECT_EQ(zeros, l * (k4 - k2) * 2 * s * ds);
  }
}

TEST(Expand, BlockDiagonalCopiesAndTiledBiases) {
  const auto c = named_config("toy");
  const auto params = random_params(c, 12);
  const auto e = expand_for_resolution(params, c, 2);
  const auto& w1 = params.at("block0/token/w1");
  const auto& w1e = e.params.at("block0/token/w1");
  for (std::size_t part = 0; part < 4; ++part)
    for (std::size_t d = 0; d < 16; ++d) {
      for (std::size_t t = 0; t < 4; ++t) EXPECT_EQ(w1e.at({part * 16 + d, part * 4 + t}), w1.at({d, t}));
      EXPECT_EQ(e.params.at("block0/token/b1")[part * 16 + d], params.at("block0/token/b1")[d]);
    }
  EXPECT_EQ(e.params.at("stem/w"), params.at("stem/w"));
  EXPECT_EQ(e.params.at("block0/channel/w3"), params.at("block0/channel/w3"));
  EXPECT_EQ(e.params.at("head/w"), params.at("head/w"));
}

Tensor<float> mosaic(const Tensor<float>& image, std::size_t k) {
  const std::size_t h = image.dim(0), w = image.dim(1), ch = image.dim(2);
  Tensor<float> out(Shape{1, k * h, k * w, ch});
  for (std::size_t y = 0; y < k * h; ++y)
    for (std::size_t x = 0; x < k * w; ++x)
      for (std::size_t c = 0; c < ch; ++c) out[(y * k * w + x) * ch + c] = image.at({y % h, x % w, c});
  return out;
}

TEST(Expand, MosaicPartsReproduceOriginalTokenFeatures) {
  auto c = named_config("toy");
  c.num_blocks = 2;
  const auto params = random_params(c, 13);
  const auto e = expand_for_resolution(params, c, 2);
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto image = random_tensor<float>({8, 8, 3}, seed + 20);
    const auto base = predict_token_features(params, c, image.reshaped({1, 8, 8, 3}));
    const auto big = predict_token_features(e.params, e.config, mosaic(image, 2));
    ASSERT_EQ(big.shape(), (Shape{1, 16, 8}));
    for (std::size_t part = 0; part < 4; ++part)
      for (std::size_t t = 0; t < 4; ++t)
        for (std::size_t j = 0; j < 8; ++j) EXPECT_NEAR(big[(part * 4 + t) * 8 + j], base[t * 8 + j], 1e-5f);
    EXPECT_LT(max_abs_diff(predict_features(e.params, e.config, mosaic(image, 2)),
                           predict_features(params, c, image.reshaped({1, 8, 8, 3}))),
              1e-5f);
  }
}

TEST(Expand, DistinctPartsAreProcessedIndependently) {
  const auto c = named_config("toy");
  const auto params = random_params(c, 14);
  const auto e = expand_for_resolution(params, c, 2);
  const auto big = random_tensor<float>({1, 16, 16, 3}, 15);
  const auto feats = predict_token_features(e.params, e.config, big);
  for (std::size_t py = 0; py < 2; ++py)
    for (std::size_t px = 0; px < 2; ++px) {
      Tensor<float> part(Shape{1, 8, 8, 3});
      for (std::size_t y = 0; y < 8; ++y)
        for (std::size_t x = 0; x < 8; ++x)
          for (std::size_t ch = 0; ch < 3; ++ch)
            part[(y * 8 + x) * 3 + ch] = big[((py * 8 + y) * 16 + px * 8 + x) * 3 + ch];
      const auto ref = predict_token_features(params, c, part);
      const std::size_t idx = py * 2 + px;
      for (std::size_t i = 0; i < 32; ++i) EXPECT_NEAR(feats[idx * 32 + i], ref[i], 1e-5f);
    }
}

TEST(Expand, Errors) {
  auto c = named_config("toy");
  const auto params = random_params(c, 16);
  EXPECT_THROW(expand_for_resolution(params, c, 0), ConfigError);
  const auto e = expand_for_resolution(params, c, 2);
  EXPECT_THROW(expand_for_resolution(e.params, e.config, 2), UnsupportedError);
  c.variant = {VariantKind::grouped, 2};
  EXPECT_THROW(expand_for_resolution(random_params(c, 1), c, 2), UnsupportedError);
}

}  // namespace
}  // namespace mixer
