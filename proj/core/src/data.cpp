// Copyright (c) 2026 The Mixer Authors
// SPDX-License-Identifier: Apache-2.0

#include "mixer/data.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>

namespace mixer {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

Dataset decode_cifar10_records(std::span<const std::uint8_t> bytes, Split split) {
  constexpr std::size_t kSide = 32;
  constexpr std::size_t kPlane = kSide * kSide;
  if (bytes.size() % kCifarRecordBytes != 0) {
    const std::size_t offset = bytes.size() - bytes.size() % kCifarRecordBytes;
    throw FormatError("truncated CIFAR-10 record at byte offset " + std::to_string(offset) + " (" +
                      std::to_string(bytes.size() - offset) + " of " + std::to_string(kCifarRecordBytes) +
                      " bytes)");
  }
  const std::size_t n = bytes.size() / kCifarRecordBytes;
  if (n == 0) throw FormatError("empty CIFAR-10 buffer");
  Dataset ds;
  ds.split = split;
  ds.num_classes = 10;
  ds.images = Tensor<float>(Shape{n, kSide, kSide, 3});
  ds.labels.resize(n);
  float* out = ds.images.ptr();
  for (std::size_t r = 0; r < n; ++r) {
    const std::uint8_t* rec = bytes.data() + r * kCifarRecordBytes;
    if (rec[0] >= 10) {
      throw FormatError("corrupt CIFAR-10 label " + std::to_string(rec[0]) + " at byte offset " +
                        std::to_string(r * kCifarRecordBytes));
    }
    ds.labels[r] = rec[0];
    const std::uint8_t* planes = rec + 1;
    float* img = out + r * kPlane * 3;
    for (std::size_t i = 0; i < kPlane; ++i)
      for (std::size_t c = 0; c < 3; ++c) img[i * 3 + c] = float(planes[c * kPlane + i]) / 255.0f;
  }
  return ds;
}

namespace {

Dataset concat(std::vector<Dataset> parts) {
  std::size_t n = 0;
  for (const auto& p : parts) n += p.size();
  Dataset out;
  out.split = parts.front().split;
  out.num_classes = parts.front().num_classes;
  Shape shape = parts.front().images.shape();
  shape[0] = n;
  std::vector<float> data;
  data.reserve(shape_size(shape));
  for (auto& p : parts) {
    data.insert(data.end(), p.images.data().begin(), p.images.data().end());
    out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
  }
  out.images = Tensor<float>(std::move(shape), std::move(data));
  return out;
}

Dataset load_cifar_file(const std::filesystem::path& path, Split split) {
  if (!std::filesystem::exists(path)) throw FormatError("missing CIFAR-10 file " + path.string());
  const auto bytes = read_file(path);
  if (bytes.size() != kCifarRecordBytes * kCifarBatchRecords) {
    throw FormatError(path.string() + ": expected " + std::to_string(kCifarRecordBytes * kCifarBatchRecords) +
                      " bytes, got " + std::to_string(bytes.size()));
  }
  return decode_cifar10_records(bytes, split);
}

std::uint32_t read_be32(std::span<const std::uint8_t> b, std::size_t off) {
  return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) | (std::uint32_t(b[off + 2]) << 8) |
         std::uint32_t(b[off + 3]);
}

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;
constexpr std::size_t kPaddedSide = 32;

}  // namespace

DatasetPair load_cifar10(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw FormatError("CIFAR-10 directory not found: " + dir.string());
  std::vector<Dataset> train;
  for (int i = 1; i <= 5; ++i) {
    train.push_back(load_cifar_file(dir / ("data_batch_" + std::to_string(i) + ".bin"), Split::train));
  }
  std::vector<Dataset> test;
  test.push_back(load_cifar_file(dir / "test_batch.bin", Split::test));
  return {concat(std::move(train)), concat(std::move(test))};
}

Tensor<float> decode_idx_images(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16) throw FormatError("IDX image header truncated");
  const auto magic = read_be32(bytes, 0);
  if (magic != kIdxImagesMagic) throw FormatError("bad IDX image magic " + std::to_string(magic));
  const std::size_t n = read_be32(bytes, 4);
  const std::size_t rows = read_be32(bytes, 8);
  const std::size_t cols = read_be32(bytes, 12);
  if (n == 0) throw FormatError("IDX image file holds 0 items: empty dataset");
  if (rows == 0 || cols == 0 || rows > kPaddedSide || cols > kPaddedSide) {
    throw FormatError("IDX images must be at most 32x32, got " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  if (bytes.size() != 16 + n * rows * cols) {
    throw FormatError("IDX image payload is " + std::to_string(bytes.size() - 16) + " bytes, header implies " +
                      std::to_string(n * rows * cols));
  }
  const std::size_t top = (kPaddedSide - rows) / 2;
  const std::size_t left = (kPaddedSide - cols) / 2;
  Tensor<float> images(Shape{n, kPaddedSide, kPaddedSide, 3});
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* src = bytes.data() + 16 + i * rows * cols;
    float* dst = images.ptr() + i * kPaddedSide * kPaddedSide * 3;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) {
        const float v = float(src[r * cols + c]) / 255.0f;
        float* px = dst + ((top + r) * kPaddedSide + left + c) * 3;
        px[0] = px[1] = px[2] = v;
      }
  }
  return images;
}

std::vector<int> decode_idx_labels(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) throw FormatError("IDX label header truncated");
  const auto magic = read_be32(bytes, 0);
  if (magic != kIdxLabelsMagic) throw FormatError("bad IDX label magic " + std::to_string(magic));
  const std::size_t n = read_be32(bytes, 4);
  if (n == 0) throw FormatError("IDX label file holds 0 items: empty dataset");
  if (bytes.size() != 8 + n) throw FormatError("IDX label payload does not match header count");
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = bytes[8 + i];
    if (labels[i] >= 10) throw FormatError("IDX label " + std::to_string(labels[i]) + " out of range");
  }
  return labels;
}

DatasetPair load_mnist(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw FormatError("MNIST directory not found: " + dir.string());
  auto load = [&](const char* images, const char* labels, Split split) {
    Dataset ds;
    ds.split = split;
    ds.num_classes = 10;
    ds.images = decode_idx_images(read_file(dir / images));
    ds.labels = decode_idx_labels(read_file(dir / labels));
    if (ds.labels.size() != ds.images.dim(0)) throw FormatError("MNIST image and label counts differ");
    return ds;
  };
  return {load("train-images-idx3-ubyte", "train-labels-idx1-ubyte", Split::train),
          load("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte", Split::test)};
}

Dataset make_synthetic(std::size_t n, std::size_t height, std::size_t width, std::size_t channels,
                       std::size_t num_classes, std::uint64_t seed, Split split) {
  if (n == 0 || num_classes == 0) throw ContractError("synthetic dataset needs n > 0 and classes > 0");
  const std::size_t per = height * width * channels;
  Rng template_rng(seed);
  std::uniform_real_distribution<float> uni(0.0f, 1.0f);
  std::vector<float> templates(num_classes * per);
  for (auto& v : templates) v = uni(template_rng);

  Rng rng(seed ^ (split == Split::train ? 0x9e3779b97f4a7c15ULL : 0xc2b2ae3d27d4eb4fULL));
  std::normal_distribution<float> noise(0.0f, 0.3f);
  Dataset ds;
  ds.split = split;
  ds.num_classes = num_classes;
  ds.images = Tensor<float>(Shape{n, height, width, channels});
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = i % num_classes;
    ds.labels[i] = int(label);
    float* img = ds.images.ptr() + i * per;
    const float* tpl = templates.data() + label * per;
    for (std::size_t j = 0; j < per; ++j) img[j] = std::clamp(tpl[j] + noise(rng), 0.0f, 1.0f);
  }
  return ds;
}

void normalize_inplace(Tensor<float>& images) {
  for (auto& v : images.data()) v = (v - 0.5f) / 0.5f;
}

Tensor<float> augment_with(const Tensor<float>& image, bool flip, std::size_t dy, std::size_t dx) {
  if (image.rank() != 3) throw DimensionError("augment expects [H, W, ch], got " + shape_str(image.shape()));
  const std::size_t h = image.dim(0);
  const std::size_t w = image.dim(1);
  const std::size_t ch = image.dim(2);
  if (dy > 2 * kCropPad || dx > 2 * kCropPad) throw ContractError("crop offset out of range");
  if (h <= kCropPad || w <= kCropPad) throw DimensionError("image too small for reflect padding");
  auto reflect = [](std::ptrdiff_t i, std::ptrdiff_t n) {
    if (i < 0) return -i;
    if (i >= n) return 2 * n - 2 - i;
    return i;
  };
  Tensor<float> out(image.shape());
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const auto sy = reflect(std::ptrdiff_t(y + dy) - std::ptrdiff_t(kCropPad), std::ptrdiff_t(h));
      auto sx = reflect(std::ptrdiff_t(x + dx) - std::ptrdiff_t(kCropPad), std::ptrdiff_t(w));
      if (flip) sx = std::ptrdiff_t(w) - 1 - sx;
      std::copy_n(image.ptr() + (std::size_t(sy) * w + std::size_t(sx)) * ch, ch, out.ptr() + (y * w + x) * ch);
    }
  return out;
}

Tensor<float> augment(const Tensor<float>& image, Rng& rng) {
  std::bernoulli_distribution coin(0.5);
  std::uniform_int_distribution<std::size_t> offset(0, 2 * kCropPad);
  const bool flip = coin(rng);
  const std::size_t dy = offset(rng);
  const std::size_t dx = offset(rng);
  return augment_with(image, flip, dy, dx);
}

PermKind perm_kind_from_string(const std::string& name) {
  if (name == "none") return PermKind::none;
  if (name == "patch") return PermKind::patch;
  if (name == "global") return PermKind::global;
  throw ConfigError("unknown permutation kind '" + name + "' (none, patch, global)");
}

PermSpec build_perm_pipeline(PermKind kind, const MixerConfig& geometry, std::uint64_t seed) {
  PermSpec spec = PermSpec::identity(geometry);
  Rng rng(seed);
  switch (kind) {
    case PermKind::none:
      break;
    case PermKind::patch:
      std::shuffle(spec.token_perm.begin(), spec.token_perm.end(), rng);
      std::shuffle(spec.pixel_perm.begin(), spec.pixel_perm.end(), rng);
      break;
    case PermKind::global: {
      auto perm = identity_permutation(geometry.image_h * geometry.image_w * geometry.channels);
      std::shuffle(perm.begin(), perm.end(), rng);
      spec.global_perm = std::move(perm);
      break;
    }
  }
  return spec;
}

Tensor<float> gather_images(const Dataset& ds, std::span<const std::size_t> idx) {
  Shape shape = ds.images.shape();
  const std::size_t per = ds.images.size() / shape[0];
  shape[0] = idx.size();
  std::vector<float> data(idx.size() * per);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= ds.size()) throw ContractError("dataset index out of range");
    std::copy_n(ds.images.ptr() + idx[i] * per, per, data.data() + i * per);
  }
  return Tensor<float>(std::move(shape), std::move(data));
}

}  // namespace mixer
