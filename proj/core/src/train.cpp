// Copyright (c) 2026 The Mixer Authors
// SPDX-License-Identifier: Apache-2.0

#include "mixer/train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace mixer {

double lr_at(const Schedule& s, std::size_t step) {
  if (s.warmup_steps > s.total_steps) throw ContractError("warmup_steps exceeds total_steps");
  if (step > s.total_steps) {
    throw ContractError("step " + std::to_string(step) + " outside schedule of " + std::to_string(s.total_steps) +
                        " steps");
  }
  if (s.warmup_steps > 0 && step <= s.warmup_steps) {
    return s.peak_lr * double(step) / double(s.warmup_steps);
  }
  const std::size_t decay = s.total_steps - s.warmup_steps;
  const double t = decay == 0 ? 1.0 : double(step - s.warmup_steps) / double(decay);
  if (s.kind == ScheduleKind::linear_warmup_linear_decay) return s.peak_lr * (1.0 - t);
  return 0.5 * s.peak_lr * (1.0 + std::cos(std::numbers::pi * t));
}

namespace {

template <class T>
Tensor<T>& slot_like(ParamMap<T>& slots, const std::string& name, const Tensor<T>& like) {
  auto it = slots.find(name);
  if (it == slots.end()) it = slots.emplace(name, Tensor<T>(like.shape(), T(0))).first;
  return it->second;
}

}  // namespace

template <class T>
void adam_step(ParamMap<T>& params, const ParamMap<T>& grads, AdamState<T>& state, double lr,
               const AdamOptions& o) {
  state.step += 1;
  const double c1 = 1.0 - std::pow(o.beta1, double(state.step));
  const double c2 = 1.0 - std::pow(o.beta2, double(state.step));
  for (const auto& [name, g] : grads) {
    auto it = params.find(name);
    if (it == params.end()) throw ContractError("gradient for unknown parameter '" + name + "'");
    Tensor<T>& p = it->second;
    Tensor<T>& m = slot_like(state.m, name, p);
    Tensor<T>& v = slot_like(state.v, name, p);
    if (g.shape() != p.shape()) throw DimensionError("gradient shape mismatch for '" + name + "'");
    const T decay = static_cast<T>(1.0 - lr * o.weight_decay);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      const double mi = o.beta1 * m[i] + (1.0 - o.beta1) * gi;
      const double vi = o.beta2 * v[i] + (1.0 - o.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double update = (mi / c1) / (std::sqrt(vi / c2) + o.eps);
      p[i] = static_cast<T>(double(p[i] * decay) - lr * update);
    }
  }
}

template <class T>
void sgd_momentum_step(ParamMap<T>& params, const ParamMap<T>& grads, SgdState<T>& state, double lr,
                       double momentum) {
  for (const auto& [name, g] : grads) {
    auto it = params.find(name);
    if (it == params.end()) throw ContractError("gradient for unknown parameter '" + name + "'");
    Tensor<T>& p = it->second;
    Tensor<T>& v = slot_like(state.velocity, name, p);
    if (g.shape() != p.shape()) throw DimensionError("gradient shape mismatch for '" + name + "'");
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[i] = static_cast<T>(momentum * v[i] + g[i]);
      p[i] = static_cast<T>(p[i] - lr * v[i]);
    }
  }
}

template <class T>
double global_norm(const ParamMap<T>& grads) {
  double sq = 0;
  for (const auto& [name, g] : grads)
    for (auto v : g.data()) sq += double(v) * double(v);
  return std::sqrt(sq);
}

template <class T>
void clip_global_norm(ParamMap<T>& grads, double c) {
  if (!(c > 0)) throw ContractError("clip norm must be positive");
  const double norm = global_norm(grads);
  if (norm <= c) return;
  const T s = static_cast<T>(c / norm);
  for (auto& [name, g] : grads)
    for (auto& v : g.data()) v *= s;
}

Tensor<float> one_hot(std::span<const int> labels, std::size_t num_classes) {
  Tensor<float> out(Shape{labels.size(), num_classes});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || std::size_t(labels[i]) >= num_classes) throw ContractError("label out of range");
    out[i * num_classes + std::size_t(labels[i])] = 1.0f;
  }
  return out;
}

Batch mixup_with(const Batch& batch, double lam, std::span<const std::size_t> partner) {
  const std::size_t n = batch.images.dim(0);
  if (partner.size() != n || batch.targets.dim(0) != n) throw DimensionError("mixup: batch sizes differ");
  if (lam == 1.0) return batch;
  Batch out{Tensor<float>(batch.images.shape()), Tensor<float>(batch.targets.shape())};
  auto mix = [&](const Tensor<float>& src, Tensor<float>& dst) {
    const std::size_t per = src.size() / n;
    const float a = static_cast<float>(lam);
    const float b = static_cast<float>(1.0 - lam);
    for (std::size_t i = 0; i < n; ++i) {
      const float* x = src.ptr() + i * per;
      const float* y = src.ptr() + partner[i] * per;
      float* o = dst.ptr() + i * per;
      for (std::size_t j = 0; j < per; ++j) o[j] = a * x[j] + b * y[j];
    }
  };
  mix(batch.images, out.images);
  mix(batch.targets, out.targets);
  return out;
}

double sample_mixup_lambda(double p, Rng& rng) {
  if (p < 0) throw ContractError("mixup strength must be >= 0");
  if (p == 0) return 1.0;
  std::gamma_distribution<double> gamma(p, 1.0);
  const double a = gamma(rng);
  const double b = gamma(rng);
  if (a + b == 0) return 1.0;
  return a / (a + b);
}

Batch mixup(const Batch& batch, double p, Rng& rng) {
  const double lam = sample_mixup_lambda(p, rng);
  if (lam == 1.0) return batch;
  std::vector<std::size_t> partner(batch.images.dim(0));
  std::iota(partner.begin(), partner.end(), std::size_t{0});
  std::shuffle(partner.begin(), partner.end(), rng);
  return mixup_with(batch, lam, partner);
}

void validate(const TrainPlan& plan) {
  if (plan.schedule.total_steps != 0 && plan.schedule.warmup_steps > plan.schedule.total_steps) {
    throw ContractError("warmup_steps exceeds total_steps");
  }
  if (!(plan.clip_norm > 0)) throw ContractError("clip_norm must be positive");
  if (plan.mixup_p < 0) throw ContractError("mixup strength must be >= 0");
  if (plan.batch == 0) throw ContractError("batch size must be positive");
  if (plan.warmup_fraction < 0 || plan.warmup_fraction > 1) throw ContractError("warmup_fraction must be in [0, 1]");
}

CsvMetricsWriter::CsvMetricsWriter(std::ostream& out) : m_out(&out) { *m_out << kMetricsHeader << '\n'; }

void CsvMetricsWriter::operator()(const MetricsRow& row) {
  auto& o = *m_out;
  o << row.step << ',' << row.epoch << ',' << row.lr << ',' << row.train_loss << ',' << row.train_acc << ',';
  if (row.val_loss) o << *row.val_loss;
  o << ',';
  if (row.val_acc) o << *row.val_acc;
  o << '\n';
  o.flush();
}

std::size_t steps_per_epoch(std::size_t n, std::size_t batch) { return std::max<std::size_t>(1, n / batch); }

namespace {

void check_geometry(const MixerConfig& config, const Dataset& ds) {
  if (ds.images.rank() != 4 || ds.height() != config.image_h || ds.width() != config.image_w ||
      ds.channels() != config.channels) {
    throw ConfigError("dataset geometry " + shape_str(ds.images.shape()) + " does not match config " +
                      std::to_string(config.image_h) + "x" + std::to_string(config.image_w) + "x" +
                      std::to_string(config.channels));
  }
  if (ds.num_classes > config.num_classes) {
    throw ConfigError("dataset has " + std::to_string(ds.num_classes) + " classes, model only " +
                      std::to_string(config.num_classes));
  }
}

Tensor<float> prepare(Tensor<float> images, const std::optional<PermSpec>& perm, const MixerConfig& config) {
  if (perm) images = permute_input(images, *perm, config);
  normalize_inplace(images);
  return images;
}

}  // namespace

EvalResult evaluate(const MixerParams<float>& params, const MixerConfig& config, const Dataset& ds,
                    const std::optional<PermSpec>& perm, std::size_t limit) {
  check_geometry(config, ds);
  const std::size_t n = limit == 0 ? ds.size() : std::min(limit, ds.size());
  if (n == 0) throw ContractError("evaluate on an empty dataset");
  constexpr std::size_t kChunk = 256;
  double loss = 0;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < n; start += kChunk) {
    const std::size_t count = std::min(kChunk, n - start);
    idx.resize(count);
    std::iota(idx.begin(), idx.end(), start);
    const auto images = prepare(gather_images(ds, idx), perm, config);
    const auto logits = predict_logits(params, config, images, kChunk);
    const std::size_t k = logits.dim(1);
    const auto pred = argmax_rows(logits);
    for (std::size_t i = 0; i < count; ++i) {
      const float* l = logits.ptr() + i * k;
      const double mx = *std::max_element(l, l + k);
      double z = 0;
      for (std::size_t j = 0; j < k; ++j) z += std::exp(double(l[j]) - mx);
      loss += mx + std::log(z) - double(l[ds.labels[start + i]]);
      if (pred[i] == std::size_t(ds.labels[start + i])) ++correct;
    }
  }
  return {loss / double(n), double(correct) / double(n)};
}

Checkpoint train_loop(const MixerConfig& config, const TrainPlan& plan, const Dataset& train, const Dataset* val,
                      const MetricsSink& sink, std::optional<Checkpoint> start) {
  validate(config);
  validate(plan);
  if (train.size() == 0) throw ContractError("training dataset is empty");
  check_geometry(config, train);
  if (val) check_geometry(config, *val);

  MixerConfig run = config;
  run.drop_rate = plan.drop_rate;
  run.stoch_depth = plan.stoch_depth;
  validate(run);

  Checkpoint ckpt;
  ckpt.config = run;
  if (start) {
    if (start->config.hidden_c != run.hidden_c || sequence_length(start->config) != sequence_length(run)) {
      throw ConfigError("starting checkpoint does not match the config");
    }
    ckpt.params = std::move(start->params);
    ckpt.optimizer = std::move(start->optimizer);
  } else {
    ckpt.params = init_params<float>(run, plan.seed);
  }

  const std::size_t spe = steps_per_epoch(train.size(), plan.batch);
  const std::size_t batch = std::min(plan.batch, train.size());
  Schedule schedule = plan.schedule;
  if (schedule.total_steps == 0) schedule.total_steps = plan.epochs * spe;
  if (schedule.warmup_steps == 0) {
    schedule.warmup_steps = std::size_t(std::llround(plan.warmup_fraction * double(schedule.total_steps)));
  }
  const std::size_t total = schedule.total_steps;
  if (total == 0) return ckpt;

  const bool use_adam = std::holds_alternative<AdamOptions>(plan.optimizer);
  const auto wanted = use_adam ? OptimizerState::Kind::adam : OptimizerState::Kind::sgd;
  AdamState<float> adam;
  SgdState<float> sgd;
  if (ckpt.optimizer.kind == wanted) {
    adam.step = ckpt.optimizer.step;
    if (use_adam) {
      adam.m = std::move(ckpt.optimizer.first);
      adam.v = std::move(ckpt.optimizer.second);
    } else {
      sgd.velocity = std::move(ckpt.optimizer.first);
    }
  }
  std::size_t opt_steps = adam.step;

  Rng rng(plan.seed * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::size_t> idx(batch);
  std::vector<int> labels(batch);

  double loss_sum = 0;
  double acc_sum = 0;
  std::size_t since_log = 0;

  for (std::size_t step = 0; step < total; ++step) {
    if (step % spe == 0) std::shuffle(order.begin(), order.end(), rng);
    const std::size_t offset = (step % spe) * batch;
    for (std::size_t i = 0; i < batch; ++i) {
      idx[i] = order[offset + i];
      labels[i] = train.labels[idx[i]];
    }

    Tensor<float> images = gather_images(train, idx);
    if (plan.augment) {
      const std::size_t per = images.size() / batch;
      const Shape one{run.image_h, run.image_w, run.channels};
      for (std::size_t i = 0; i < batch; ++i) {
        Tensor<float> img(one, std::vector<float>(images.ptr() + i * per, images.ptr() + (i + 1) * per));
        const auto aug = augment(img, rng);
        std::copy_n(aug.ptr(), per, images.ptr() + i * per);
      }
    }
    Batch b{prepare(std::move(images), plan.perm, run), one_hot(labels, run.num_classes)};
    if (plan.mixup_p > 0) b = mixup(b, plan.mixup_p, rng);

    Graph<float> g;
    auto pvars = bind_params(g, ckpt.params, true);
    auto x = g.constant(std::move(b.images));
    auto logits = forward(pvars, x, run, ForwardContext{Mode::train, &rng});
    auto loss = ops::softmax_xent(logits, b.targets);
    const double loss_value = loss.value().item();
    if (!std::isfinite(loss_value)) throw DivergedError(step);
    auto grads = g.backward(loss);
    clip_global_norm(grads, plan.clip_norm);

    const double lr = lr_at(schedule, step);
    if (use_adam) {
      adam_step(ckpt.params.tensors, grads, adam, lr, std::get<AdamOptions>(plan.optimizer));
    } else {
      sgd_momentum_step(ckpt.params.tensors, grads, sgd, lr, std::get<SgdOptions>(plan.optimizer).momentum);
      ++opt_steps;
    }

    const auto pred = argmax_rows(logits.value());
    std::size_t correct = 0;
    for (std::size_t i = 0; i < batch; ++i) correct += pred[i] == std::size_t(labels[i]);
    loss_sum += loss_value;
    acc_sum += double(correct) / double(batch);
    ++since_log;

    const bool last = step + 1 == total;
    const bool log_now = plan.log_every > 0 ? ((step + 1) % plan.log_every == 0) : ((step + 1) % spe == 0);
    if ((log_now || last) && since_log > 0) {
      MetricsRow row;
      row.step = step + 1;
      row.epoch = double(step + 1) / double(spe);
      row.lr = lr;
      row.train_loss = loss_sum / double(since_log);
      row.train_acc = acc_sum / double(since_log);
      if (val) {
        const auto r = evaluate(ckpt.params, run, *val, plan.perm, plan.val_limit);
        row.val_loss = r.loss;
        row.val_acc = r.accuracy;
      }
      if (sink) sink(row);
      loss_sum = acc_sum = 0;
      since_log = 0;
    }
  }

  ckpt.optimizer = OptimizerState{};
  if (use_adam) {
    ckpt.optimizer.kind = OptimizerState::Kind::adam;
    ckpt.optimizer.step = adam.step;
    ckpt.optimizer.first = std::move(adam.m);
    ckpt.optimizer.second = std::move(adam.v);
  } else {
    ckpt.optimizer.kind = OptimizerState::Kind::sgd;
    ckpt.optimizer.step = opt_steps;
    ckpt.optimizer.first = std::move(sgd.velocity);
  }
  return ckpt;
}

template void adam_step(ParamMap<float>&, const ParamMap<float>&, AdamState<float>&, double, const AdamOptions&);
template void adam_step(ParamMap<double>&, const ParamMap<double>&, AdamState<double>&, double, const AdamOptions&);
template void sgd_momentum_step(ParamMap<float>&, const ParamMap<float>&, SgdState<float>&, double, double);
template void sgd_momentum_step(ParamMap<double>&, const ParamMap<double>&, SgdState<double>&, double, double);
template double global_norm(const ParamMap<float>&);
template double global_norm(const ParamMap<double>&);
template void clip_global_norm(ParamMap<float>&, double);
template void clip_global_norm(ParamMap<double>&, double);

}  // namespace mixer
