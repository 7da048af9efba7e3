// Copyright (c) 2026 The Mixer Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <random>

#include "mixer/gemm.hpp"
#include "mixer/model.hpp"
#include "mixer/train.hpp"

namespace {

using namespace mixer;

Tensor<float> random_images(std::size_t n, const MixerConfig& c, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<float> uni(-1.0f, 1.0f);
  Tensor<float> t(Shape{n, c.image_h, c.image_w, c.channels});
  for (auto& v : t.data()) v = uni(rng);
  return t;
}

void BM_Gemm(benchmark::State& state) {
  const auto n = std::size_t(state.range(0));
  std::vector<float> a(n * n, 0.5f), b(n * n, 0.25f), c(n * n);
  for (auto _ : state) {
    gemm::gemm<float>(gemm::Trans::no, gemm::Trans::no, n, n, n, a.data(), b.data(), c.data(), false);
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["MAC/s"] = benchmark::Counter(double(n * n * n), benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_Gemm)->Arg(64)->Arg(128)->Arg(256)->Arg(512);

void BM_Forward(benchmark::State& state, const char* name) {
  const auto c = named_config(name);
  auto params = init_params<float>(c, 1);
  const auto batch = std::size_t(state.range(0));
  const auto images = random_images(batch, c, 2);
  for (auto _ : state) benchmark::DoNotOptimize(predict_logits(params, c, images));
  state.SetItemsProcessed(std::int64_t(state.iterations() * batch));
  state.counters["MAC/s"] =
      benchmark::Counter(double(flops_per_image(c) * batch), benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK_CAPTURE(BM_Forward, toy, "toy")->Arg(1)->Arg(32);
BENCHMARK_CAPTURE(BM_Forward, tiny_cifar, "tiny-cifar")->Arg(1)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  const auto c = named_config("tiny-cifar");
  auto params = init_params<float>(c, 1).tensors;
  const auto batch = std::size_t(state.range(0));
  const auto images = random_images(batch, c, 3);
  std::vector<int> labels(batch);
  for (std::size_t i = 0; i < batch; ++i) labels[i] = int(i % c.num_classes);
  const auto targets = one_hot(labels, c.num_classes);
  AdamState<float> adam;
  for (auto _ : state) {
    Graph<float> g;
    MixerParams<float> current{params};
    const auto p = bind_params(g, current, true);
    const auto loss = ops::softmax_xent(forward(p, g.constant(images), c, ForwardContext{}), targets);
    auto grads = grad(g, loss);
    clip_global_norm(grads, 1.0);
    adam_step(params, grads, adam, 1e-3, AdamOptions{});
  }
  state.SetItemsProcessed(std::int64_t(state.iterations() * batch));
}
BENCHMARK(BM_TrainStep)->Arg(32)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
