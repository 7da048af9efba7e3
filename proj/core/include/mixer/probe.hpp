// Copyright (c) 2026 The Mixer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mixer/data.hpp"
#include "mixer/model.hpp"
#include "mixer/tensor.hpp"

namespace mixer {

/// Frozen features [N, C] with one-hot targets [N, K].
struct FeatureMatrix {
  Tensor<double> features;
  Tensor<double> targets;
  std::vector<int> labels;
};

FeatureMatrix make_feature_matrix(Tensor<double> features, std::span<const int> labels, std::size_t num_classes);

/// Eval-mode pooled pre-head features of normalized copies of `images`.
FeatureMatrix extract_features(const MixerParams<float>& params, const MixerConfig& config, const Dataset& ds,
                               std::span<const std::size_t> indices);

/// W = (F^T F + lambda N I)^-1 F^T Y via a Cholesky factorization. Throws
/// SolverError when the system is not numerically positive definite.
Tensor<double> ridge_fit(const FeatureMatrix& fm, double lambda);

/// Argmax of features * W per row, ties to the lowest class.
std::vector<std::size_t> ridge_predict(const Tensor<double>& features, const Tensor<double>& weights);

double top1_accuracy(std::span<const std::size_t> predicted, std::span<const int> labels);

inline const std::vector<double>& default_lambda_grid() {
  static const std::vector<double> grid{1e-6, 1e-4, 1e-2, 1.0};
  return grid;
}

struct ProbeResult {
  double accuracy = 0;
  double lambda = 0;
  double train_accuracy = 0;
};

/// Indices of `shots` examples per class drawn with a seeded shuffle.
std::vector<std::size_t> sample_shots(std::span<const int> labels, std::size_t num_classes, std::size_t shots,
                                      std::uint64_t seed);

/// Fits the ridge probe for every lambda on the sampled shots, keeps the
/// lambda with the best accuracy on those same shots (ties to the larger
/// lambda) and reports its top-1 accuracy on the test features.
ProbeResult few_shot_probe(const FeatureMatrix& train, const FeatureMatrix& test, std::size_t shots,
                           std::span<const double> lambdas, std::uint64_t seed);

/// Feature extraction plus few_shot_probe on a model.
ProbeResult few_shot_eval(const MixerParams<float>& params, const MixerConfig& config, const Dataset& train,
                          const Dataset& test, std::size_t shots, std::span<const double> lambdas,
                          std::uint64_t seed, std::size_t test_limit = 0);

}  // namespace mixer
