// Copyright (c) 2026 The Mixer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <variant>

#include "mixer/autodiff.hpp"
#include "mixer/config.hpp"
#include "mixer/data.hpp"
#include "mixer/model.hpp"
#include "mixer/surgery.hpp"

namespace mixer {

template <class T>
using ParamMap = std::map<std::string, Tensor<T>>;

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.1;
};

struct SgdOptions {
  double momentum = 0.9;
};

using OptimizerOptions = std::variant<AdamOptions, SgdOptions>;

enum class ScheduleKind { linear_warmup_linear_decay, linear_warmup_cosine };

struct Schedule {
  ScheduleKind kind = ScheduleKind::linear_warmup_linear_decay;
  std::size_t warmup_steps = 0;
  std::size_t total_steps = 0;
  double peak_lr = 1e-3;
};

/// Learning rate after `step` completed steps. Linear warmup from 0 to
/// peak_lr, then linear or cosine decay to 0 at total_steps.
double lr_at(const Schedule& schedule, std::size_t step);

/// First and second moments of Adam plus the step counter for bias correction.
template <class T>
struct AdamState {
  std::size_t step = 0;
  ParamMap<T> m;
  ParamMap<T> v;
};

/// Adam with bias correction. Weight decay is decoupled: params shrink by
/// lr * wd * params before the adaptive update.
template <class T>
void adam_step(ParamMap<T>& params, const ParamMap<T>& grads, AdamState<T>& state, double lr,
               const AdamOptions& options);

template <class T>
struct SgdState {
  ParamMap<T> velocity;
};

/// v = momentum * v + g; p = p - lr * v.
template <class T>
void sgd_momentum_step(ParamMap<T>& params, const ParamMap<T>& grads, SgdState<T>& state, double lr,
                       double momentum);

template <class T>
double global_norm(const ParamMap<T>& grads);

/// Rescales all gradients by c / norm when their global L2 norm exceeds c.
template <class T>
void clip_global_norm(ParamMap<T>& grads, double c);

/// Batch of images [B, H, W, ch] with soft targets [B, K].
struct Batch {
  Tensor<float> images;
  Tensor<float> targets;
};

Tensor<float> one_hot(std::span<const int> labels, std::size_t num_classes);

/// Convex combination with a partner batch: x' = lam x + (1 - lam) x[partner],
/// same for targets. partner[i] is the index mixed into row i.
Batch mixup_with(const Batch& batch, double lam, std::span<const std::size_t> partner);

/// lam ~ Beta(p, p) once per batch (lam = 1 when p = 0), partner is a random
/// permutation of the batch.
Batch mixup(const Batch& batch, double p, Rng& rng);

/// Draws lam ~ Beta(p, p); exactly 1 when p == 0.
double sample_mixup_lambda(double p, Rng& rng);

/// Everything that determines a run.
struct TrainPlan {
  OptimizerOptions optimizer = AdamOptions{};
  Schedule schedule;  // total_steps of 0 means epochs * steps_per_epoch
  std::size_t epochs = 1;
  double clip_norm = 1.0;
  std::size_t batch = 128;
  double mixup_p = 0.0;
  double drop_rate = 0.0;
  double stoch_depth = 0.0;
  bool augment = true;
  std::optional<PermSpec> perm;  // applied to every train and validation image
  std::uint64_t seed = 0;
  std::size_t log_every = 0;      // 0 logs at the end of every epoch
  std::size_t val_limit = 0;      // 0 evaluates the whole validation split
  /// Warmup as a fraction of total steps, used when schedule.warmup_steps is 0.
  double warmup_fraction = 0.05;
};

void validate(const TrainPlan& plan);

struct MetricsRow {
  std::size_t step = 0;
  double epoch = 0;
  double lr = 0;
  double train_loss = 0;
  double train_acc = 0;
  std::optional<double> val_loss;
  std::optional<double> val_acc;
};

using MetricsSink = std::function<void(const MetricsRow&)>;

/// Writes the metrics CSV (header then one row per call, LF endings).
class CsvMetricsWriter {
 public:
  explicit CsvMetricsWriter(std::ostream& out);
  void operator()(const MetricsRow& row);

 private:
  std::ostream* m_out;
};

inline constexpr const char* kMetricsHeader = "step,epoch,lr,train_loss,train_acc,val_loss,val_acc";

struct OptimizerState {
  enum class Kind { none, adam, sgd } kind = Kind::none;
  std::size_t step = 0;
  ParamMap<float> first;   // Adam m or SGD velocity
  ParamMap<float> second;  // Adam v
};

/// Config, f32 parameters and the optimizer state of a run.
struct Checkpoint {
  MixerConfig config;
  MixerParams<float> params;
  OptimizerState optimizer;
};

/// Loss and accuracy of eval-mode predictions on a dataset.
struct EvalResult {
  double loss = 0;
  double accuracy = 0;
};

EvalResult evaluate(const MixerParams<float>& params, const MixerConfig& config, const Dataset& ds,
                    const std::optional<PermSpec>& perm = std::nullopt, std::size_t limit = 0);

/// Steps per epoch for a dataset of n examples (floor(n / batch), at least 1).
std::size_t steps_per_epoch(std::size_t n, std::size_t batch);

/// Runs the training recipe: per step it draws a batch, augments, applies the
/// input permutation, normalizes, mixes up, runs the train-mode forward,
/// backpropagates the softmax cross-entropy, clips, and steps the optimizer
/// at the scheduled learning rate. Deterministic given plan.seed. Throws
/// DivergedError when the loss becomes non-finite.
Checkpoint train_loop(const MixerConfig& config, const TrainPlan& plan, const Dataset& train,
                      const Dataset* val = nullptr, const MetricsSink& sink = {},
                      std::optional<Checkpoint> start = std::nullopt);

}  // namespace mixer
