// Copyright (c) 2026 The Mixer Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>

#include "mixer/errors.hpp"
#include "mixer/probe.hpp"
#include "mixer/verify.hpp"
#include "test_util.hpp"

namespace mixer {
namespace {

using testing::from_matrix;
using testing::random_tensor;
using testing::to_matrix;

std::vector<int> cyclic_labels(std::size_t n, std::size_t k) {
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = int(i % k);
  return labels;
}

TEST(Ridge, MatchesNormalEquationsOracle) {
  const auto f = random_tensor<double>({20, 6}, 1);
  const auto fm = make_feature_matrix(f, cyclic_labels(20, 4), 4);
  for (double lambda : {1e-4, 1e-2, 1.0}) {
    const auto w = ridge_fit(fm, lambda);
    auto gram = oracle::matmul(oracle::transpose(to_matrix(f)), to_matrix(f));
    for (std::size_t i = 0; i < 6; ++i) gram[i][i] += lambda * 20;
    const auto ref = oracle::gauss_solve(gram, oracle::matmul(oracle::transpose(to_matrix(f)), to_matrix(fm.targets)));
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(w.at({i, j}), ref[i][j], 1e-8);
  }
}

TEST(Ridge, StationarityResidualVanishes) {
  const auto f = random_tensor<double>({30, 8}, 2, 3.0);
  const auto fm = make_feature_matrix(f, cyclic_labels(30, 5), 5);
  const double lambda = 1e-3;
  const auto w = to_matrix(ridge_fit(fm, lambda));
  const auto fw = oracle::matmul(to_matrix(f), w);
  auto resid = to_matrix(fm.targets);
  for (std::size_t i = 0; i < 30; ++i)
    for (std::size_t j = 0; j < 5; ++j) resid[i][j] = fw[i][j] - resid[i][j];
  const auto g = oracle::matmul(oracle::transpose(to_matrix(f)), resid);
  double worst = 0, scale = 0;
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      worst = std::max(worst, std::abs(g[i][j] + lambda * 30 * w[i][j]));
      scale = std::max(scale, std::abs(g[i][j]));
    }
  EXPECT_LT(worst, 1e-6 * std::max(scale, 1.0));
}

TEST(Ridge, IdentityFeaturesAndShrinkage) {
  oracle::Matrix eye(4, std::vector<double>(4, 0.0));
  for (std::size_t i = 0; i < 4; ++i) eye[i][i] = 1.0;
  const auto fm = make_feature_matrix(from_matrix(eye), cyclic_labels(4, 4), 4);
  const auto w = ridge_fit(fm, 1e-9);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(w.at({i, j}), i == j ? 1.0 : 0.0, 1e-6);
  const auto shrunk = ridge_fit(fm, 1e9);
  for (double v : shrunk.data()) EXPECT_LT(std::abs(v), 1e-8);
  EXPECT_THROW(ridge_fit(fm, 0.0), ContractError);
}

TEST(Ridge, PredictTiesGoToLowestIndex) {
  const auto f = Tensor<double>::from({2, 1}, {1, 0});
  const auto w = Tensor<double>::from({1, 3}, {2, 2, 1});
  EXPECT_EQ(ridge_predict(f, w), (std::vector<std::size_t>{0, 0}));
  EXPECT_THROW(ridge_predict(f, Tensor<double>(Shape{2, 3})), DimensionError);
}

TEST(Accuracy, CountsMatches) {
  const std::vector<std::size_t> pred{0, 1, 2, 2};
  const std::vector<int> labels{0, 1, 1, 2};
  EXPECT_DOUBLE_EQ(top1_accuracy(pred, labels), 0.75);
}

TEST(Shots, ExactlyPerClassAndDeterministic) {
  const auto labels = cyclic_labels(100, 10);
  const auto a = sample_shots(labels, 10, 5, 3);
  EXPECT_EQ(a, sample_shots(labels, 10, 5, 3));
  EXPECT_NE(a, sample_shots(labels, 10, 5, 4));
  ASSERT_EQ(a.size(), 50u);
  for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(labels[a[i]], int(i / 5));
  EXPECT_THROW(sample_shots(labels, 10, 11, 3), ContractError);
}

FeatureMatrix one_hot_features(std::size_t n, std::size_t k) {
  const auto labels = cyclic_labels(n, k);
  Tensor<double> f(Shape{n, k});
  for (std::size_t i = 0; i < n; ++i) f[i * k + std::size_t(labels[i])] = 1.0;
  return make_feature_matrix(std::move(f), labels, k);
}

TEST(FewShot, PerfectFeaturesGivePerfectAccuracy) {
  const auto train = one_hot_features(100, 10);
  const auto test = one_hot_features(50, 10);
  const auto r = few_shot_probe(train, test, 5, default_lambda_grid(), 1);
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.train_accuracy, 1.0);
  // Every lambda fits the subset perfectly, so the tie goes to the largest.
  EXPECT_EQ(r.lambda, 1.0);
}

TEST(FewShot, RandomFeaturesAreNearChance) {
  double total = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto train = make_feature_matrix(random_tensor<double>({200, 16}, seed), cyclic_labels(200, 10), 10);
    const auto test = make_feature_matrix(random_tensor<double>({500, 16}, seed + 100), cyclic_labels(500, 10), 10);
    total += few_shot_probe(train, test, 5, default_lambda_grid(), seed).accuracy;
  }
  EXPECT_NEAR(total / 10, 0.1, 0.03);
}

TEST(FewShot, InvariantToTestOrderAndFeatureRotation) {
  const auto train = make_feature_matrix(random_tensor<double>({60, 6}, 1), cyclic_labels(60, 3), 3);
  const auto test = make_feature_matrix(random_tensor<double>({90, 6}, 2), cyclic_labels(90, 3), 3);
  const auto base = few_shot_probe(train, test, 5, default_lambda_grid(), 4);

  // Reversed test rows.
  Tensor<double> rev(test.features.shape());
  std::vector<int> rev_labels(test.labels.rbegin(), test.labels.rend());
  for (std::size_t i = 0; i < 90; ++i) std::copy_n(test.features.ptr() + (89 - i) * 6, 6, rev.ptr() + i * 6);
  EXPECT_EQ(few_shot_probe(train, make_feature_matrix(rev, rev_labels, 3), 5, default_lambda_grid(), 4).accuracy,
            base.accuracy);

  // Permuted feature columns.
  const std::vector<std::size_t> cols{3, 0, 5, 1, 4, 2};
  auto permute_cols = [&](const Tensor<double>& t) {
    Tensor<double> out(t.shape());
    for (std::size_t i = 0; i < t.dim(0); ++i)
      for (std::size_t j = 0; j < 6; ++j) out[i * 6 + j] = t[i * 6 + cols[j]];
    return out;
  };
  const auto permuted = few_shot_probe(make_feature_matrix(permute_cols(train.features), train.labels, 3),
                                       make_feature_matrix(permute_cols(test.features), test.labels, 3), 5,
                                       default_lambda_grid(), 4);
  EXPECT_EQ(permuted.accuracy, base.accuracy);
  EXPECT_EQ(permuted.lambda, base.lambda);
}

TEST(FewShot, TooFewExamplesIsContractError) {
  const auto train = one_hot_features(20, 10);
  EXPECT_THROW(few_shot_probe(train, train, 5, default_lambda_grid(), 1), ContractError);
  EXPECT_THROW(few_shot_probe(one_hot_features(100, 10), train, 5, {}, 1), ContractError);
}

TEST(FewShot, EndToEndOnModelFeatures) {
  const auto c = named_config("toy");
  auto params = init_params<float>(c, 1);
  perturb_params(params, 2, 0.3);
  const auto train = make_synthetic(100, 8, 8, 3, 10, 5);
  const auto test = make_synthetic(60, 8, 8, 3, 10, 5, Split::test);
  const auto r = few_shot_eval(params, c, train, test, 5, default_lambda_grid(), 3);
  EXPECT_GE(r.accuracy, 0.0);
  EXPECT_LE(r.accuracy, 1.0);
  EXPECT_EQ(r.accuracy, few_shot_eval(params, c, train, test, 5, default_lambda_grid(), 3).accuracy);
  const auto fm = extract_features(params, c, test, std::vector<std::size_t>{0, 1, 2});
  EXPECT_EQ(fm.features.shape(), (Shape{3, 8}));
}

}  // namespace
}  // namespace mixer
