// Copyright (c) 2026 The Mixer Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "mixer/checkpoint.hpp"
#include "mixer/config.hpp"
#include "mixer/data.hpp"
#include "mixer/errors.hpp"
#include "mixer/gemm.hpp"
#include "mixer/model.hpp"
#include "mixer/probe.hpp"
#include "mixer/surgery.hpp"
#include "mixer/train.hpp"
#include "mixer/verify.hpp"
#include "mixer/viz.hpp"

namespace mixer::cli {

namespace {

namespace fs = std::filesystem;

/// Bad input from the command line: exit code 2.
class UsageError : public Error {
 public:
  using Error::Error;
};

std::string fmt_double(double v) {
  std::ostringstream s;
  s.precision(std::numeric_limits<double>::max_digits10);
  s << v;
  return s.str();
}

class Printer {
 public:
  explicit Printer(std::ostream& out) : m_out(&out) {}

  void kv(const std::string& key, const std::string& value) { *m_out << key << '=' << value << '\n'; }
  void kv(const std::string& key, const char* value) { kv(key, std::string(value)); }
  void kv(const std::string& key, double value) { kv(key, fmt_double(value)); }
  template <class I>
    requires std::is_integral_v<I>
  void kv(const std::string& key, I value) {
    kv(key, std::to_string(value));
  }

 private:
  std::ostream* m_out;
};

MixerConfig resolve_config(const std::string& spec) {
  if (fs::is_regular_file(spec)) {
    std::ifstream in(spec);
    std::ostringstream text;
    text << in.rdbuf();
    return config_from_json(text.str());
  }
  return named_config(spec);
}

void apply_image(MixerConfig& config, const std::string& image) {
  if (image.empty()) return;
  const auto x = image.find('x');
  try {
    if (x == std::string::npos) throw std::invalid_argument(image);
    config.image_h = std::stoul(image.substr(0, x));
    config.image_w = std::stoul(image.substr(x + 1));
  } catch (const std::logic_error&) {
    throw UsageError("--image expects HxW, got '" + image + "'");
  }
  validate(config);
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> grid;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      grid.push_back(std::stod(item));
    } catch (const std::logic_error&) {
      throw UsageError("--l2 expects comma-separated numbers, got '" + text + "'");
    }
  }
  if (grid.empty()) throw UsageError("--l2 grid is empty");
  return grid;
}

struct DataOptions {
  std::string dataset = "cifar10";
  std::string data_dir;
  std::size_t synthetic_train = 512;
  std::size_t synthetic_test = 256;
  std::uint64_t synthetic_seed = 0;

  void add_to(CLI::App& cmd) {
    cmd.add_option("--dataset", dataset, "cifar10, mnist or synthetic")
        ->check(CLI::IsMember({"cifar10", "mnist", "synthetic"}))
        ->capture_default_str();
    cmd.add_option("--data-dir", data_dir, "Directory holding the dataset files");
    cmd.add_option("--synthetic-train", synthetic_train, "Synthetic training examples")->capture_default_str();
    cmd.add_option("--synthetic-test", synthetic_test, "Synthetic test examples")->capture_default_str();
    cmd.add_option("--synthetic-seed", synthetic_seed, "Synthetic template seed")->capture_default_str();
  }

  DatasetPair load(const MixerConfig& config) const {
    DatasetPair pair;
    if (dataset == "synthetic") {
      pair.train = make_synthetic(synthetic_train, config.image_h, config.image_w, config.channels,
                                  config.num_classes, synthetic_seed, Split::train);
      pair.test = make_synthetic(synthetic_test, config.image_h, config.image_w, config.channels,
                                 config.num_classes, synthetic_seed, Split::test);
      return pair;
    }
    if (data_dir.empty()) throw UsageError("--data-dir is required for --dataset " + dataset);
    if (!fs::is_directory(data_dir)) throw UsageError("data directory not found: " + data_dir);
    try {
      pair = dataset == "cifar10" ? load_cifar10(data_dir) : load_mnist(data_dir);
    } catch (const Error& e) {
      throw UsageError(std::string("cannot load ") + dataset + ": " + e.what());
    }
    return pair;
  }
};

void check_geometry(const MixerConfig& config, const Dataset& ds) {
  if (ds.height() != config.image_h || ds.width() != config.image_w || ds.images.dim(3) != config.channels ||
      ds.num_classes > config.num_classes) {
    throw UsageError("dataset geometry " + shape_str(ds.images.shape()) + " with " +
                     std::to_string(ds.num_classes) + " classes does not match the checkpoint config " +
                     std::to_string(config.image_h) + "x" + std::to_string(config.image_w) + "x" +
                     std::to_string(config.channels) + " with " + std::to_string(config.num_classes) + " classes");
  }
}

Checkpoint fresh_checkpoint(const MixerConfig& config, std::uint64_t seed) {
  Checkpoint ckpt;
  ckpt.config = config;
  ckpt.params = init_params<float>(config, seed);
  perturb_params(ckpt.params, seed + 1);
  return ckpt;
}

void print_spec(Printer& p, const std::string& name, const MixerConfig& c) {
  const auto count = param_count(c);
  p.kv("config", name);
  p.kv("image", std::to_string(c.image_h) + "x" + std::to_string(c.image_w));
  p.kv("patch", c.patch);
  p.kv("sequence_length", sequence_length(c));
  p.kv("num_blocks", c.num_blocks);
  p.kv("hidden_c", c.hidden_c);
  p.kv("mlp_d_s", c.mlp_d_s);
  p.kv("mlp_d_c", c.mlp_d_c);
  p.kv("params", count);
  std::ostringstream m;
  m.setf(std::ios::fixed);
  m.precision(1);
  m << double(count) / 1e6 << "M";
  p.kv("params_m", m.str());
  p.kv("params_rounded_m", std::uint64_t(std::llround(double(count) / 1e6)));
  p.kv("macs_per_image", flops_per_image(c));
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"MLP-Mixer: training, surgery, probing and inspection", "mixer"};
  app.require_subcommand(1);
  // A repeated option keeps its last value, so scripts can append overrides.
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  Printer p(out);

  // params / flops
  std::string config_name = "toy";
  std::string image;
  bool measure = false;
  auto* params_cmd = app.add_subcommand("params", "Architecture, sequence length and parameter count");
  auto* flops_cmd = app.add_subcommand("flops", "Forward multiply-accumulates per image");
  for (auto* cmd : {params_cmd, flops_cmd}) {
    cmd->add_option("--config", config_name, "Named config (S/32 ... H/14, toy, tiny-cifar) or JSON file")
        ->capture_default_str();
    cmd->add_option("--image", image, "Override the input resolution, HxW");
  }
  flops_cmd->add_flag("--measure", measure, "Also count MACs of an instrumented forward pass");

  // train
  DataOptions data;
  std::size_t epochs = 1, batch = 128, log_every = 0, val_limit = 0, warmup_steps = 0;
  std::uint64_t seed = 0, perm_seed = 0;
  double mixup = 0, dropout = 0, stochdepth = 0, lr = 1e-3, wd = 0.1, momentum = 0.9, clip = 1.0;
  std::string perm = "none", optimizer = "adam", schedule = "linear", out_path, metrics_path, resume;
  bool no_augment = false;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write a checkpoint");
  train_cmd->add_option("--config", config_name, "Named config or JSON file")->capture_default_str();
  data.add_to(*train_cmd);
  train_cmd->add_option("--epochs", epochs)->capture_default_str();
  train_cmd->add_option("--batch", batch)->capture_default_str();
  train_cmd->add_option("--seed", seed)->capture_default_str();
  train_cmd->add_option("--mixup", mixup, "Mixup strength p of Beta(p, p)")->capture_default_str();
  train_cmd->add_option("--dropout", dropout)->capture_default_str();
  train_cmd->add_option("--stochdepth", stochdepth)->capture_default_str();
  train_cmd->add_option("--perm", perm)->check(CLI::IsMember({"none", "patch", "global"}))->capture_default_str();
  train_cmd->add_option("--perm-seed", perm_seed)->capture_default_str();
  train_cmd->add_option("--lr", lr, "Peak learning rate")->capture_default_str();
  train_cmd->add_option("--optimizer", optimizer)->check(CLI::IsMember({"adam", "sgd"}))->capture_default_str();
  train_cmd->add_option("--weight-decay", wd, "Decoupled Adam weight decay")->capture_default_str();
  train_cmd->add_option("--momentum", momentum, "SGD momentum")->capture_default_str();
  train_cmd->add_option("--schedule", schedule)->check(CLI::IsMember({"linear", "cosine"}))->capture_default_str();
  train_cmd->add_option("--warmup-steps", warmup_steps, "0 uses 5% of the total steps")->capture_default_str();
  train_cmd->add_option("--clip", clip, "Global gradient norm limit")->capture_default_str();
  train_cmd->add_option("--log-every", log_every, "Metrics interval in steps; 0 logs every epoch")
      ->capture_default_str();
  train_cmd->add_option("--val-limit", val_limit, "Validation examples per log row; 0 uses all")
      ->capture_default_str();
  train_cmd->add_flag("--no-augment", no_augment, "Disable flip and crop augmentation");
  train_cmd->add_option("--resume", resume, "Continue from a checkpoint");
  train_cmd->add_option("--out", out_path, "Checkpoint path")->required();
  train_cmd->add_option("--metrics", metrics_path, "Metrics CSV path");

  // eval / probe
  std::string ckpt_path, l2 = "1e-6,1e-4,1e-2,1";
  std::size_t limit = 0, shots = 5;
  auto* eval_cmd = app.add_subcommand("eval", "Top-1 accuracy and loss on the test split");
  auto* probe_cmd = app.add_subcommand("probe", "Few-shot ridge probe on frozen features");
  for (auto* cmd : {eval_cmd, probe_cmd}) {
    cmd->add_option("--ckpt", ckpt_path)->required()->check(CLI::ExistingFile);
    data.add_to(*cmd);
    cmd->add_option("--limit", limit, "Evaluate the first N test examples; 0 uses all")->capture_default_str();
  }
  eval_cmd->add_option("--perm", perm)->check(CLI::IsMember({"none", "patch", "global"}))->capture_default_str();
  eval_cmd->add_option("--perm-seed", perm_seed)->capture_default_str();
  probe_cmd->add_option("--shots", shots)->capture_default_str();
  probe_cmd->add_option("--l2", l2, "Comma-separated ridge strengths")->capture_default_str();
  probe_cmd->add_option("--seed", seed)->capture_default_str();

  // expand
  std::size_t factor = 2;
  auto* expand_cmd = app.add_subcommand("expand", "Fine-tuning resolution increase by an integer factor");
  expand_cmd->add_option("--ckpt", ckpt_path)->required()->check(CLI::ExistingFile);
  expand_cmd->add_option("--factor", factor)->capture_default_str();
  expand_cmd->add_option("--out", out_path)->required();

  // perm-check / gradcheck
  std::size_t specs = 10, images = 32, seeds = 1;
  auto* perm_cmd = app.add_subcommand("perm-check", "Input permutation equivalence check");
  perm_cmd->add_option("--ckpt", ckpt_path, "Checkpoint; a fresh random model when omitted")->check(CLI::ExistingFile);
  perm_cmd->add_option("--config", config_name, "Config of the fresh model")->capture_default_str();
  perm_cmd->add_option("--seed", seed)->capture_default_str();
  perm_cmd->add_option("--specs", specs)->capture_default_str();
  perm_cmd->add_option("--images", images)->capture_default_str();
  auto* grad_cmd = app.add_subcommand("gradcheck", "Analytic vs finite-difference gradients");
  grad_cmd->add_option("--config", config_name)->capture_default_str();
  grad_cmd->add_option("--seed", seed, "First seed")->capture_default_str();
  grad_cmd->add_option("--seeds", seeds, "Number of consecutive seeds")->capture_default_str();

  // bench
  std::size_t iters = 10, bench_batch = 8;
  auto* bench_cmd = app.add_subcommand("bench", "Eval-mode forward throughput");
  bench_cmd->add_option("--config", config_name)->capture_default_str();
  bench_cmd->add_option("--batch", bench_batch)->capture_default_str();
  bench_cmd->add_option("--iters", iters)->capture_default_str();

  // viz
  std::size_t block = 0;
  bool stem = false;
  auto* viz_cmd = app.add_subcommand("viz", "Export token-mixing and stem units as PGM images");
  viz_cmd->add_option("--ckpt", ckpt_path)->required()->check(CLI::ExistingFile);
  viz_cmd->add_option("--block", block)->capture_default_str();
  viz_cmd->add_option("--out", out_path)->required();
  viz_cmd->add_flag("--stem", stem, "Also export the stem units");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(int(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kUsage;
  }

  try {
    if (params_cmd->parsed() || flops_cmd->parsed()) {
      auto config = resolve_config(config_name);
      apply_image(config, image);
      print_spec(p, config_name, config);
      if (flops_cmd->parsed()) {
        const auto total = flops_per_image(config);
        const auto s = sequence_length(config);
        const std::uint64_t per_block = std::uint64_t(2) * s * config.mlp_d_s * config.hidden_c +
                                        std::uint64_t(2) * s * config.hidden_c * config.mlp_d_c;
        p.kv("macs_per_block", per_block);
        p.kv("gmacs_per_image", double(total) / 1e9);
        if (measure) {
          auto params = init_params<float>(config, 0);
          Tensor<float> x(Shape{1, config.image_h, config.image_w, config.channels});
          gemm::reset_mac_count();
          predict_logits(params, config, x);
          const auto measured = gemm::mac_count();
          p.kv("macs_measured", measured);
          p.kv("measured_matches", measured == total ? "true" : "false");
          if (measured != total) return kFailure;
        }
      }
      return kOk;
    }

    if (train_cmd->parsed()) {
      const auto config = resolve_config(config_name);
      const auto pair = data.load(config);
      check_geometry(config, pair.train);
      TrainPlan plan;
      if (optimizer == "adam") {
        AdamOptions adam;
        adam.weight_decay = wd;
        plan.optimizer = adam;
      } else {
        plan.optimizer = SgdOptions{momentum};
      }
      plan.schedule.kind =
          schedule == "cosine" ? ScheduleKind::linear_warmup_cosine : ScheduleKind::linear_warmup_linear_decay;
      plan.schedule.peak_lr = lr;
      plan.schedule.warmup_steps = warmup_steps;
      plan.epochs = epochs;
      plan.clip_norm = clip;
      plan.batch = batch;
      plan.mixup_p = mixup;
      plan.drop_rate = dropout;
      plan.stoch_depth = stochdepth;
      plan.augment = !no_augment;
      plan.seed = seed;
      plan.log_every = log_every;
      plan.val_limit = val_limit;
      if (perm != "none") plan.perm = build_perm_pipeline(perm_kind_from_string(perm), config, perm_seed);

      std::ofstream metrics;
      std::optional<CsvMetricsWriter> writer;
      if (!metrics_path.empty()) {
        if (fs::path(metrics_path).has_parent_path()) fs::create_directories(fs::path(metrics_path).parent_path());
        metrics.open(metrics_path, std::ios::binary);
        if (!metrics) throw Error("cannot write " + metrics_path);
        writer.emplace(metrics);
      }
      std::optional<MetricsRow> last;
      const MetricsSink sink = [&](const MetricsRow& row) {
        if (writer) (*writer)(row);
        last = row;
      };
      std::optional<Checkpoint> start;
      if (!resume.empty()) start = load_checkpoint(resume);

      const auto t0 = std::chrono::steady_clock::now();
      auto ckpt = train_loop(config, plan, pair.train, &pair.test, sink, std::move(start));
      const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      save_checkpoint(out_path, ckpt);
      const auto test = evaluate(ckpt.params, ckpt.config, pair.test, plan.perm);

      p.kv("checkpoint", out_path);
      p.kv("steps", ckpt.optimizer.step);
      if (last) {
        p.kv("train_loss", last->train_loss);
        p.kv("train_acc", last->train_acc);
      }
      p.kv("test_loss", test.loss);
      p.kv("test_acc", test.accuracy);
      p.kv("seconds", seconds);
      return kOk;
    }

    if (eval_cmd->parsed()) {
      const auto ckpt = load_checkpoint(ckpt_path);
      const auto pair = data.load(ckpt.config);
      check_geometry(ckpt.config, pair.test);
      std::optional<PermSpec> spec;
      if (perm != "none") spec = build_perm_pipeline(perm_kind_from_string(perm), ckpt.config, perm_seed);
      const auto result = evaluate(ckpt.params, ckpt.config, pair.test, spec, limit);
      p.kv("examples", limit == 0 ? pair.test.size() : std::min(limit, pair.test.size()));
      p.kv("loss", result.loss);
      p.kv("accuracy", result.accuracy);
      return kOk;
    }

    if (probe_cmd->parsed()) {
      const auto ckpt = load_checkpoint(ckpt_path);
      const auto pair = data.load(ckpt.config);
      check_geometry(ckpt.config, pair.train);
      check_geometry(ckpt.config, pair.test);
      const auto grid = parse_grid(l2);
      const auto result = few_shot_eval(ckpt.params, ckpt.config, pair.train, pair.test, shots, grid, seed, limit);
      p.kv("shots", shots);
      p.kv("lambda", result.lambda);
      p.kv("train_accuracy", result.train_accuracy);
      p.kv("accuracy", result.accuracy);
      return kOk;
    }

    if (expand_cmd->parsed()) {
      const auto ckpt = load_checkpoint(ckpt_path);
      if (factor == 0) throw UsageError("--factor must be at least 1");
      Checkpoint result;
      if (factor == 1) {
        result = ckpt;
      } else {
        auto expanded = expand_for_resolution(ckpt.params, ckpt.config, factor);
        result.config = expanded.config;
        result.params = std::move(expanded.params);
      }
      save_checkpoint(out_path, result);
      p.kv("factor", factor);
      p.kv("image", std::to_string(result.config.image_h) + "x" + std::to_string(result.config.image_w));
      p.kv("sequence_length", sequence_length(result.config));
      p.kv("params_before", param_count(ckpt.config));
      p.kv("params_after", param_count(result.config));
      p.kv("params_delta", param_count(result.config) - param_count(ckpt.config));
      p.kv("checkpoint", out_path);
      return kOk;
    }

    if (perm_cmd->parsed()) {
      const auto ckpt = ckpt_path.empty() ? fresh_checkpoint(resolve_config(config_name), seed)
                                          : load_checkpoint(ckpt_path);
      const auto result = permutation_check(ckpt.params, ckpt.config, specs, images, seed);
      constexpr double kTolerance = 1e-5;
      p.kv("specs", result.specs);
      p.kv("images", result.images);
      p.kv("max_logit_delta", result.max_logit_delta);
      p.kv("tolerance", kTolerance);
      const bool pass = result.max_logit_delta < kTolerance;
      p.kv("result", pass ? "PASS" : "FAIL");
      return pass ? kOk : kFailure;
    }

    if (grad_cmd->parsed()) {
      const auto config = resolve_config(config_name);
      constexpr double kTolerance = 1e-5;
      GradCheckResult worst;
      std::size_t checked = 0;
      double max_2pt = 0;
      for (std::size_t i = 0; i < seeds; ++i) {
        const auto r = gradient_check(config, seed + i);
        checked += r.checked;
        max_2pt = std::max(max_2pt, r.max_rel_error_2pt);
        if (i == 0 || r.max_rel_error > worst.max_rel_error) worst = r;
      }
      p.kv("seeds", seeds);
      p.kv("gradients_checked", checked);
      p.kv("max_rel_error", worst.max_rel_error);
      p.kv("worst_param", worst.worst_param);
      p.kv("max_rel_error_two_point", max_2pt);
      p.kv("tolerance", kTolerance);
      const bool pass = worst.max_rel_error < kTolerance;
      p.kv("result", pass ? "PASS" : "FAIL");
      return pass ? kOk : kFailure;
    }

    if (bench_cmd->parsed()) {
      const auto config = resolve_config(config_name);
      if (bench_batch == 0 || iters == 0) throw UsageError("--batch and --iters must be positive");
      const auto params = init_params<float>(config, 0);
      Rng rng(0);
      std::uniform_real_distribution<float> uni(-1.0f, 1.0f);
      Tensor<float> x(Shape{bench_batch, config.image_h, config.image_w, config.channels});
      for (auto& v : x.data()) v = uni(rng);
      predict_logits(params, config, x, bench_batch);  // warm-up
      gemm::reset_mac_count();
      const auto t0 = std::chrono::steady_clock::now();
      for (std::size_t i = 0; i < iters; ++i) predict_logits(params, config, x, bench_batch);
      const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      const auto macs = gemm::mac_count();
      p.kv("config", config_name);
      p.kv("batch", bench_batch);
      p.kv("iters", iters);
      p.kv("threads", 1);
      p.kv("seconds", seconds);
      p.kv("images_per_sec", double(bench_batch * iters) / seconds);
      p.kv("macs_per_sec", double(macs) / seconds);
      return kOk;
    }

    if (viz_cmd->parsed()) {
      const auto ckpt = load_checkpoint(ckpt_path);
      if (block >= ckpt.config.num_blocks) {
        throw UsageError("--block " + std::to_string(block) + " out of range for " +
                         std::to_string(ckpt.config.num_blocks) + " blocks");
      }
      const auto tokens = viz::export_token_units(ckpt.params, ckpt.config, block, out_path);
      p.kv("block", block);
      p.kv("token_units", tokens.unit_files.size());
      p.kv("token_sheet", tokens.sheet.string());
      if (stem) {
        const auto stems = viz::export_stem_units(ckpt.params, ckpt.config, out_path);
        p.kv("stem_units", stems.unit_files.size());
        p.kv("stem_sheet", stems.sheet.string());
      }
      return kOk;
    }
  } catch (const DivergedError& e) {
    err << e.what() << '\n';
    return kDiverged;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const UnsupportedError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kUsage;
}

}  // namespace mixer::cli
