// Copyright (c) 2026 The Mixer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdlib>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mixer/train.hpp"

namespace mixer::smoke {

struct Outcome {
  bool pass = false;
  std::string detail;
};

inline std::optional<std::filesystem::path> env_dir(const char* name) {
  const char* v = std::getenv(name);
  if (v == nullptr || *v == '\0' || !std::filesystem::is_directory(v)) return std::nullopt;
  return std::filesystem::path(v);
}

inline TrainPlan cifar_plan(std::size_t epochs, std::uint64_t seed) {
  TrainPlan plan;
  plan.epochs = epochs;
  plan.batch = 128;
  plan.mixup_p = 0.2;
  plan.stoch_depth = 0.1;
  plan.seed = seed;
  plan.schedule.kind = ScheduleKind::linear_warmup_cosine;
  plan.schedule.peak_lr = 1e-3;
  return plan;
}

/// Per-epoch mean training losses of a run.
inline std::vector<double> epoch_losses(const MixerConfig& config, const TrainPlan& plan, const Dataset& train,
                                        Checkpoint* out = nullptr) {
  std::vector<double> losses;
  auto ckpt = train_loop(config, plan, train, nullptr, [&](const MetricsRow& r) { losses.push_back(r.train_loss); });
  if (out) *out = std::move(ckpt);
  return losses;
}

inline bool strictly_decreasing(const std::vector<double>& v) {
  if (v.size() < 2) return false;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (!(v[i] < v[i - 1])) return false;
  return true;
}

inline std::string join(const std::vector<double>& v) {
  std::ostringstream s;
  for (std::size_t i = 0; i < v.size(); ++i) s << (i ? " > " : "") << v[i];
  return s.str();
}

/// Two epochs of the CIFAR-10 recipe; the epoch losses must decrease.
inline Outcome cifar_gate(const DatasetPair& data) {
  const auto config = named_config("tiny-cifar");
  const auto losses = epoch_losses(config, cifar_plan(2, 0), data.train);
  return {strictly_decreasing(losses), "epoch train loss " + join(losses)};
}

/// The full recipe: 30 epochs on 3 seeds, each reaching 0.60 test accuracy.
inline Outcome cifar_full(const DatasetPair& data) {
  const auto config = named_config("tiny-cifar");
  Outcome o{true, "test accuracy"};
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto ckpt = train_loop(config, cifar_plan(30, seed), data.train);
    const double acc = evaluate(ckpt.params, ckpt.config, data.test).accuracy;
    o.pass = o.pass && acc >= 0.60;
    o.detail += " seed" + std::to_string(seed) + "=" + std::to_string(acc);
  }
  return o;
}

}  // namespace mixer::smoke
