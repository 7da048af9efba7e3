// Copyright (c) 2026 The Mixer Authors
// SPDX-License-Identifier: Apache-2.0

#include "mixer/verify.hpp"

#include <algorithm>
#include <cmath>

#include "mixer/data.hpp"
#include "mixer/surgery.hpp"

namespace mixer {

template <class T>
void perturb_params(MixerParams<T>& params, std::uint64_t seed, double sigma) {
  Rng rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  for (auto& [name, t] : params.tensors) {
    for (auto& v : t.data()) v = T(double(v) + noise(rng));
  }
}

template void perturb_params(MixerParams<float>&, std::uint64_t, double);
template void perturb_params(MixerParams<double>&, std::uint64_t, double);

namespace {

double loss_of(const MixerParams<double>& params, const MixerConfig& config, const Tensor<double>& images,
               const Tensor<double>& targets) {
  Graph<double> g;
  const auto p = bind_params(g, params, false);
  const auto logits = forward(p, g.constant(images), config, ForwardContext{});
  return ops::softmax_xent(logits, targets).value().item();
}

}  // namespace

GradCheckResult gradient_check(const MixerConfig& config, std::uint64_t seed, double h, double floor) {
  auto params = init_params<double>(config, seed);
  perturb_params(params, seed + 1);

  Rng rng(seed + 2);
  std::normal_distribution<double> normal;
  constexpr std::size_t kBatch = 2;
  Tensor<double> images(Shape{kBatch, config.image_h, config.image_w, config.channels});
  for (auto& v : images.data()) v = normal(rng);
  Tensor<double> targets(Shape{kBatch, config.num_classes});
  for (std::size_t b = 0; b < kBatch; ++b) {
    double total = 0;
    for (std::size_t k = 0; k < config.num_classes; ++k) {
      total += targets[b * config.num_classes + k] = std::exp(normal(rng));
    }
    for (std::size_t k = 0; k < config.num_classes; ++k) targets[b * config.num_classes + k] /= total;
  }

  Graph<double> g;
  const auto p = bind_params(g, params, true);
  const auto loss = ops::softmax_xent(forward(p, g.constant(images), config, ForwardContext{}), targets);
  const auto grads = grad(g, loss);

  GradCheckResult result;
  for (auto& [name, tensor] : params.tensors) {
    const auto& analytic = grads.at(name);
    for (std::size_t i = 0; i < tensor.size(); ++i) {
      const double saved = tensor[i];
      auto loss_at = [&](double v) {
        tensor[i] = v;
        return loss_of(params, config, images, targets);
      };
      const double d1 = loss_at(saved + h) - loss_at(saved - h);
      const double d2 = loss_at(saved + 2 * h) - loss_at(saved - 2 * h);
      tensor[i] = saved;
      const double numeric = (8 * d1 - d2) / (12 * h);
      const double numeric_2pt = d1 / (2 * h);
      const double a = analytic[i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      const double rel_2pt = std::abs(a - numeric_2pt) / std::max({std::abs(a), std::abs(numeric_2pt), floor});
      result.max_rel_error_2pt = std::max(result.max_rel_error_2pt, rel_2pt);
      if (rel > result.max_rel_error || result.checked == 0) {
        result.max_rel_error = rel;
        result.worst_param = name;
      }
      ++result.checked;
    }
  }
  return result;
}

PermCheckResult permutation_check(const MixerParams<float>& params, const MixerConfig& config, std::size_t specs,
                                  std::size_t images, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<float> uni(-1.0f, 1.0f);
  Tensor<float> x(Shape{images, config.image_h, config.image_w, config.channels});
  for (auto& v : x.data()) v = uni(rng);
  const auto reference = predict_logits(params, config, x);

  PermCheckResult result{0.0, specs, images};
  for (std::size_t s = 0; s < specs; ++s) {
    const auto spec = build_perm_pipeline(PermKind::patch, config, rng());
    const auto permuted = permute_weights(params, config, spec);
    const auto logits = predict_logits(permuted, config, permute_input(x, spec, config));
    result.max_logit_delta = std::max(result.max_logit_delta, double(max_abs_diff(logits, reference)));
  }
  return result;
}

}  // namespace mixer
