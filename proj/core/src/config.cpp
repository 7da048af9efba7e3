// Copyright (c) 2026 The Mixer Authors
// SPDX-License-Identifier: Apache-2.0

#include "mixer/config.hpp"

#include <json.hpp>

#include "config_json.hpp"
#include "mixer/errors.hpp"

namespace mixer {

std::string to_string(VariantKind kind) {
  switch (kind) {
    case VariantKind::standard:
      return "standard";
    case VariantKind::untied_token:
      return "untied_token";
    case VariantKind::grouped:
      return "grouped";
    case VariantKind::grouped_views:
      return "grouped_views";
  }
  return "standard";
}

VariantKind variant_kind_from_string(const std::string& name) {
  if (name == "standard") return VariantKind::standard;
  if (name == "untied_token") return VariantKind::untied_token;
  if (name == "grouped") return VariantKind::grouped;
  if (name == "grouped_views") return VariantKind::grouped_views;
  throw ConfigError("unknown variant '" + name + "'");
}

void validate(const MixerConfig& c) {
  if (c.patch == 0 || c.hidden_c == 0 || c.mlp_d_s == 0 || c.mlp_d_c == 0 || c.channels == 0 ||
      c.num_classes == 0 || c.image_h == 0 || c.image_w == 0) {
    throw ConfigError("config extents must be positive");
  }
  if (c.image_h % c.patch != 0 || c.image_w % c.patch != 0) {
    throw ConfigError("patch size " + std::to_string(c.patch) + " does not divide image " +
                      std::to_string(c.image_h) + "x" + std::to_string(c.image_w));
  }
  const bool grouped = c.variant.kind == VariantKind::grouped || c.variant.kind == VariantKind::grouped_views;
  if (grouped && (c.variant.groups == 0 || c.hidden_c % c.variant.groups != 0)) {
    throw ConfigError("groups G=" + std::to_string(c.variant.groups) + " must divide C=" +
                      std::to_string(c.hidden_c));
  }
  if (!(c.drop_rate >= 0.0 && c.drop_rate < 1.0)) throw ConfigError("drop_rate must be in [0, 1)");
  if (!(c.stoch_depth >= 0.0 && c.stoch_depth < 1.0)) throw ConfigError("stoch_depth must be in [0, 1)");
  if (c.split_factor == 0 || c.grid_h() % c.split_factor != 0 || c.grid_w() % c.split_factor != 0) {
    throw ConfigError("split_factor " + std::to_string(c.split_factor) + " does not divide the patch grid");
  }
}

std::size_t sequence_length(const MixerConfig& config) {
  if (config.patch == 0 || config.image_h % config.patch != 0 || config.image_w % config.patch != 0) {
    throw ConfigError("patch size " + std::to_string(config.patch) + " does not divide image " +
                      std::to_string(config.image_h) + "x" + std::to_string(config.image_w));
  }
  return (config.image_h * config.image_w) / (config.patch * config.patch);
}

namespace {

MixerConfig table_row(std::size_t layers, std::size_t patch, std::size_t c, std::size_t d_c, std::size_t d_s) {
  MixerConfig cfg;
  cfg.num_blocks = layers;
  cfg.patch = patch;
  cfg.hidden_c = c;
  cfg.mlp_d_c = d_c;
  cfg.mlp_d_s = d_s;
  cfg.image_h = 224;
  cfg.image_w = 224;
  cfg.channels = 3;
  cfg.num_classes = 1000;
  return cfg;
}

}  // namespace

std::vector<std::string> named_config_names() {
  return {"S/32", "S/16", "B/32", "B/16", "L/32", "L/16", "H/14", "toy", "tiny-cifar"};
}

MixerConfig named_config(const std::string& name) {
  if (name == "S/32") return table_row(8, 32, 512, 2048, 256);
  if (name == "S/16") return table_row(8, 16, 512, 2048, 256);
  if (name == "B/32") return table_row(12, 32, 768, 3072, 384);
  if (name == "B/16") return table_row(12, 16, 768, 3072, 384);
  if (name == "L/32") return table_row(24, 32, 1024, 4096, 512);
  if (name == "L/16") return table_row(24, 16, 1024, 4096, 512);
  if (name == "H/14") return table_row(32, 14, 1280, 5120, 640);
  if (name == "toy") return MixerConfig{};
  if (name == "tiny-cifar") {
    MixerConfig cfg;
    cfg.num_blocks = 4;
    cfg.patch = 4;
    cfg.hidden_c = 128;
    cfg.mlp_d_s = 64;
    cfg.mlp_d_c = 512;
    cfg.image_h = 32;
    cfg.image_w = 32;
    cfg.channels = 3;
    cfg.num_classes = 10;
    return cfg;
  }
  std::string valid;
  for (const auto& n : named_config_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw ConfigError("unknown config '" + name + "'; valid names: " + valid);
}

nlohmann::json config_to_json_value(const MixerConfig& c) {
  return nlohmann::json{{"num_blocks", c.num_blocks},
                        {"patch", c.patch},
                        {"hidden_c", c.hidden_c},
                        {"mlp_d_s", c.mlp_d_s},
                        {"mlp_d_c", c.mlp_d_c},
                        {"image_h", c.image_h},
                        {"image_w", c.image_w},
                        {"channels", c.channels},
                        {"num_classes", c.num_classes},
                        {"variant", to_string(c.variant.kind)},
                        {"groups", c.variant.groups},
                        {"drop_rate", c.drop_rate},
                        {"stoch_depth", c.stoch_depth},
                        {"split_factor", c.split_factor}};
}

MixerConfig config_from_json_value(const nlohmann::json& j) {
  try {
    MixerConfig c;
    c.num_blocks = j.at("num_blocks").get<std::size_t>();
    c.patch = j.at("patch").get<std::size_t>();
    c.hidden_c = j.at("hidden_c").get<std::size_t>();
    c.mlp_d_s = j.at("mlp_d_s").get<std::size_t>();
    c.mlp_d_c = j.at("mlp_d_c").get<std::size_t>();
    c.image_h = j.at("image_h").get<std::size_t>();
    c.image_w = j.at("image_w").get<std::size_t>();
    c.channels = j.value("channels", std::size_t{3});
    c.num_classes = j.value("num_classes", std::size_t{10});
    c.variant.kind = variant_kind_from_string(j.value("variant", std::string("standard")));
    c.variant.groups = j.value("groups", std::size_t{1});
    c.drop_rate = j.value("drop_rate", 0.0);
    c.stoch_depth = j.value("stoch_depth", 0.0);
    c.split_factor = j.value("split_factor", std::size_t{1});
    validate(c);
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config json: ") + e.what());
  }
}

std::string config_to_json(const MixerConfig& config) { return config_to_json_value(config).dump(2); }

MixerConfig config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config json: ") + e.what());
  }
  return config_from_json_value(j);
}

}  // namespace mixer
