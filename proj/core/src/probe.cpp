// Copyright (c) 2026 The Mixer Authors
// SPDX-License-Identifier: Apache-2.0

#include "mixer/probe.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <algorithm>
#include <numeric>

namespace mixer {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMatrix> as_matrix(const Tensor<double>& t) {
  return Eigen::Map<const RowMatrix>(t.ptr(), Eigen::Index(t.dim(0)), Eigen::Index(t.dim(1)));
}

}  // namespace

FeatureMatrix make_feature_matrix(Tensor<double> features, std::span<const int> labels, std::size_t num_classes) {
  if (features.rank() != 2 || features.dim(0) != labels.size()) {
    throw DimensionError("feature rows " + shape_str(features.shape()) + " do not match " +
                         std::to_string(labels.size()) + " labels");
  }
  FeatureMatrix fm;
  fm.targets = Tensor<double>(Shape{labels.size(), num_classes});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || std::size_t(labels[i]) >= num_classes) throw ContractError("label out of range");
    fm.targets[i * num_classes + std::size_t(labels[i])] = 1.0;
  }
  fm.features = std::move(features);
  fm.labels.assign(labels.begin(), labels.end());
  return fm;
}

FeatureMatrix extract_features(const MixerParams<float>& params, const MixerConfig& config, const Dataset& ds,
                               std::span<const std::size_t> indices) {
  auto images = gather_images(ds, indices);
  normalize_inplace(images);
  const auto feats = predict_features(params, config, images);
  std::vector<int> labels(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) labels[i] = ds.labels[indices[i]];
  return make_feature_matrix(feats.cast<double>(), labels, ds.num_classes);
}

Tensor<double> ridge_fit(const FeatureMatrix& fm, double lambda) {
  if (!(lambda > 0)) throw ContractError("ridge lambda must be positive");
  const auto f = as_matrix(fm.features);
  const auto y = as_matrix(fm.targets);
  const double n = double(f.rows());
  Eigen::MatrixXd gram = f.transpose() * f;
  gram.diagonal().array() += lambda * n;
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success) {
    throw SolverError("ridge system is not positive definite at lambda=" + std::to_string(lambda) +
                      "; try a larger lambda");
  }
  const Eigen::MatrixXd w = llt.solve(f.transpose() * y);
  if (!w.allFinite()) throw SolverError("ridge solution is not finite; try a larger lambda");
  Tensor<double> out(Shape{std::size_t(w.rows()), std::size_t(w.cols())});
  for (Eigen::Index r = 0; r < w.rows(); ++r)
    for (Eigen::Index c = 0; c < w.cols(); ++c) out[std::size_t(r * w.cols() + c)] = w(r, c);
  return out;
}

std::vector<std::size_t> ridge_predict(const Tensor<double>& features, const Tensor<double>& weights) {
  if (features.rank() != 2 || weights.rank() != 2 || features.dim(1) != weights.dim(0)) {
    throw DimensionError("probe features " + shape_str(features.shape()) + " vs weights " +
                         shape_str(weights.shape()));
  }
  const RowMatrix scores = as_matrix(features) * as_matrix(weights);
  Tensor<double> s(Shape{std::size_t(scores.rows()), std::size_t(scores.cols())},
                   std::vector<double>(scores.data(), scores.data() + scores.size()));
  return argmax_rows(s);
}

double top1_accuracy(std::span<const std::size_t> predicted, std::span<const int> labels) {
  if (predicted.size() != labels.size() || labels.empty()) throw ContractError("accuracy needs matching non-empty sets");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += predicted[i] == std::size_t(labels[i]);
  return double(correct) / double(labels.size());
}

std::vector<std::size_t> sample_shots(std::span<const int> labels, std::size_t num_classes, std::size_t shots,
                                      std::uint64_t seed) {
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> per_class(num_classes);
  for (auto i : order) {
    const auto c = std::size_t(labels[i]);
    if (c < num_classes && per_class[c].size() < shots) per_class[c].push_back(i);
  }
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (per_class[c].size() < shots) {
      throw ContractError("class " + std::to_string(c) + " has only " + std::to_string(per_class[c].size()) +
                          " examples, " + std::to_string(shots) + " shots requested");
    }
    out.insert(out.end(), per_class[c].begin(), per_class[c].end());
  }
  return out;
}

ProbeResult few_shot_probe(const FeatureMatrix& train, const FeatureMatrix& test, std::size_t shots,
                           std::span<const double> lambdas, std::uint64_t seed) {
  const std::size_t k = train.targets.dim(1);
  if (shots * k > train.labels.size()) throw ContractError("not enough training examples for the requested shots");
  if (lambdas.empty()) throw ContractError("empty lambda grid");
  const auto chosen = sample_shots(train.labels, k, shots, seed);

  const std::size_t c = train.features.dim(1);
  Tensor<double> f(Shape{chosen.size(), c});
  std::vector<int> labels(chosen.size());
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    std::copy_n(train.features.ptr() + chosen[i] * c, c, f.ptr() + i * c);
    labels[i] = train.labels[chosen[i]];
  }
  const auto fit_set = make_feature_matrix(std::move(f), labels, k);

  ProbeResult best;
  Tensor<double> best_w;
  bool have = false;
  for (double lambda : lambdas) {
    auto w = ridge_fit(fit_set, lambda);
    const double acc = top1_accuracy(ridge_predict(fit_set.features, w), fit_set.labels);
    if (!have || acc > best.train_accuracy || (acc == best.train_accuracy && lambda > best.lambda)) {
      best.train_accuracy = acc;
      best.lambda = lambda;
      best_w = std::move(w);
      have = true;
    }
  }
  best.accuracy = top1_accuracy(ridge_predict(test.features, best_w), test.labels);
  return best;
}

ProbeResult few_shot_eval(const MixerParams<float>& params, const MixerConfig& config, const Dataset& train,
                          const Dataset& test, std::size_t shots, std::span<const double> lambdas,
                          std::uint64_t seed, std::size_t test_limit) {
  // Only the sampled shots need features; sample on labels first.
  const auto chosen = sample_shots(train.labels, train.num_classes, shots, seed);
  auto train_fm = extract_features(params, config, train, chosen);
  // The subset holds exactly `shots` per class, so the probe keeps all of it.
  std::vector<std::size_t> test_idx(test_limit == 0 ? test.size() : std::min(test_limit, test.size()));
  std::iota(test_idx.begin(), test_idx.end(), std::size_t{0});
  const auto test_fm = extract_features(params, config, test, test_idx);
  return few_shot_probe(train_fm, test_fm, shots, lambdas, seed);
}

}  // namespace mixer
