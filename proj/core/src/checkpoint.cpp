// Copyright (c) 2026 The Mixer Authors
// SPDX-License-Identifier: Apache-2.0

#include "mixer/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "config_json.hpp"
#include "mixer/errors.hpp"

namespace mixer {

namespace {

using nlohmann::json;

static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);

void put_u64_le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64_le(const std::string& in) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(std::uint8_t(in[std::size_t(i)])) << (8 * i);
  return v;
}

void put_f32_le(std::string& out, std::span<const float> values) {
  for (float f : values) {
    const auto bits = std::bit_cast<std::uint32_t>(f);
    for (int i = 0; i < 4; ++i) out.push_back(char((bits >> (8 * i)) & 0xFF));
  }
}

void get_f32_le(const char* src, std::span<float> values) {
  for (auto& f : values) {
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= std::uint32_t(std::uint8_t(src[i])) << (8 * i);
    f = std::bit_cast<float>(bits);
    src += 4;
  }
}

const char* kind_name(OptimizerState::Kind k) {
  switch (k) {
    case OptimizerState::Kind::adam:
      return "adam";
    case OptimizerState::Kind::sgd:
      return "sgd";
    case OptimizerState::Kind::none:
      break;
  }
  return "none";
}

OptimizerState::Kind kind_from_name(const std::string& s) {
  if (s == "none") return OptimizerState::Kind::none;
  if (s == "adam") return OptimizerState::Kind::adam;
  if (s == "sgd") return OptimizerState::Kind::sgd;
  throw FormatError("unknown optimizer kind '" + s + "' in checkpoint");
}

struct Entry {
  std::string name;
  const Tensor<float>* tensor;
};

std::vector<Entry> entries(const Checkpoint& ckpt) {
  std::vector<Entry> out;
  const auto specs = param_specs(ckpt.config);
  for (const auto& spec : specs) out.push_back({spec.name, &ckpt.params.at(spec.name)});
  const auto& opt = ckpt.optimizer;
  const bool has_second = opt.kind == OptimizerState::Kind::adam;
  if (opt.kind != OptimizerState::Kind::none) {
    for (const auto& spec : specs) {
      auto it = opt.first.find(spec.name);
      if (it != opt.first.end()) out.push_back({"opt/m/" + spec.name, &it->second});
    }
    if (has_second) {
      for (const auto& spec : specs) {
        auto it = opt.second.find(spec.name);
        if (it != opt.second.end()) out.push_back({"opt/v/" + spec.name, &it->second});
      }
    }
  }
  return out;
}

}  // namespace

std::string save_checkpoint_bytes(const Checkpoint& ckpt) {
  validate(ckpt.config);
  if (ckpt.params.tensors.size() != param_specs(ckpt.config).size()) {
    throw ContractError("checkpoint parameters do not match the config");
  }
  const auto list = entries(ckpt);
  json header;
  header["schema_version"] = kCheckpointSchemaVersion;
  header["config"] = config_to_json_value(ckpt.config);
  json tensors = json::array();
  std::uint64_t offset = 0;
  for (const auto& e : list) {
    tensors.push_back({{"name", e.name}, {"dtype", "f32"}, {"shape", e.tensor->shape()}, {"byte_offset", offset}});
    offset += std::uint64_t(e.tensor->size()) * 4;
  }
  header["tensors"] = std::move(tensors);
  header["train_state"] = {{"optimizer", kind_name(ckpt.optimizer.kind)}, {"step", ckpt.optimizer.step}};

  const auto text = header.dump();
  std::string out;
  out.reserve(8 + text.size() + offset);
  put_u64_le(out, text.size());
  out += text;
  for (const auto& e : list) put_f32_le(out, e.tensor->data());
  return out;
}

Checkpoint load_checkpoint_bytes(const std::string& bytes) {
  if (bytes.size() < 8) throw FormatError("checkpoint shorter than its 8-byte header length");
  const auto header_len = get_u64_le(bytes);
  if (header_len > bytes.size() - 8) throw FormatError("checkpoint header length exceeds file size");
  json header;
  try {
    header = json::parse(bytes.begin() + 8, bytes.begin() + std::ptrdiff_t(8 + header_len));
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }

  Checkpoint ckpt;
  try {
    if (header.at("schema_version").get<int>() != kCheckpointSchemaVersion) {
      throw FormatError("unsupported checkpoint schema_version " + header.at("schema_version").dump());
    }
    ckpt.config = config_from_json_value(header.at("config"));
    const auto& state = header.at("train_state");
    ckpt.optimizer.kind = kind_from_name(state.at("optimizer").get<std::string>());
    ckpt.optimizer.step = state.at("step").get<std::size_t>();

    const std::size_t body = 8 + header_len;
    std::uint64_t expected_offset = 0;
    for (const auto& t : header.at("tensors")) {
      const auto name = t.at("name").get<std::string>();
      if (t.at("dtype").get<std::string>() != "f32") throw FormatError("tensor " + name + " is not f32");
      const auto shape = t.at("shape").get<Shape>();
      const auto offset = t.at("byte_offset").get<std::uint64_t>();
      if (offset != expected_offset) {
        throw FormatError("tensor " + name + " at byte_offset " + std::to_string(offset) + ", expected " +
                          std::to_string(expected_offset));
      }
      const std::size_t n = shape_size(shape);
      if (n == 0 && !shape.empty()) throw FormatError("tensor " + name + " has an empty extent");
      expected_offset += std::uint64_t(n) * 4;
      if (body + expected_offset > bytes.size()) throw FormatError("checkpoint body truncated in tensor " + name);
      Tensor<float> tensor(shape);
      get_f32_le(bytes.data() + body + offset, tensor.data());

      std::map<std::string, Tensor<float>>* target = &ckpt.params.tensors;
      std::string key = name;
      if (name.rfind("opt/m/", 0) == 0) {
        target = &ckpt.optimizer.first;
        key = name.substr(6);
      } else if (name.rfind("opt/v/", 0) == 0) {
        target = &ckpt.optimizer.second;
        key = name.substr(6);
      }
      if (!target->emplace(key, std::move(tensor)).second) throw FormatError("duplicate tensor " + name);
    }
    if (body + expected_offset != bytes.size()) {
      throw FormatError("checkpoint has " + std::to_string(bytes.size() - body - expected_offset) +
                        " trailing bytes");
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed checkpoint header: ") + e.what());
  } catch (const DimensionError& e) {
    throw FormatError(std::string("malformed checkpoint tensor: ") + e.what());
  }

  const auto specs = param_specs(ckpt.config);
  if (ckpt.params.tensors.size() != specs.size()) {
    throw FormatError("checkpoint holds " + std::to_string(ckpt.params.tensors.size()) + " parameters, config needs " +
                      std::to_string(specs.size()));
  }
  for (const auto& spec : specs) {
    auto it = ckpt.params.tensors.find(spec.name);
    if (it == ckpt.params.tensors.end()) throw FormatError("checkpoint is missing " + spec.name);
    if (it->second.shape() != spec.shape) {
      throw FormatError(spec.name + " has shape " + shape_str(it->second.shape()) + ", config needs " +
                        shape_str(spec.shape));
    }
  }
  for (const auto* opt : {&ckpt.optimizer.first, &ckpt.optimizer.second}) {
    for (const auto& [name, t] : *opt) {
      if (!ckpt.params.contains(name) || ckpt.params.at(name).shape() != t.shape()) {
        throw FormatError("optimizer tensor " + name + " does not match a parameter");
      }
    }
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = save_checkpoint_bytes(ckpt);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) throw Error("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_checkpoint_bytes(ss.str());
}

}  // namespace mixer
