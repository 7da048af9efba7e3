// Copyright (c) 2026 The Mixer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mixer/config.hpp"
#include "mixer/model.hpp"
#include "mixer/surgery.hpp"
#include "mixer/tensor.hpp"

namespace mixer {

enum class Split { train, test };

/// Decoded images [N, H, W, ch] with values in [0, 1] and labels in [0, K).
struct Dataset {
  Tensor<float> images;
  std::vector<int> labels;
  Split split = Split::train;
  std::size_t num_classes = 10;

  std::size_t size() const { return labels.size(); }
  std::size_t height() const { return images.dim(1); }
  std::size_t width() const { return images.dim(2); }
  std::size_t channels() const { return images.dim(3); }
};

struct DatasetPair {
  Dataset train;
  Dataset test;
};

inline constexpr std::size_t kCifarRecordBytes = 3073;
inline constexpr std::size_t kCifarBatchRecords = 10000;

/// Decodes CIFAR-10 binary records (1 label byte, then 1024 bytes each of
/// the R, G and B planes, row-major 32x32). Throws FormatError when the
/// buffer does not hold a whole number of records, naming the byte offset of
/// the truncated record, and when a label is 10 or larger.
Dataset decode_cifar10_records(std::span<const std::uint8_t> bytes, Split split);

/// Reads data_batch_1.bin ... data_batch_5.bin and test_batch.bin. Every file
/// must hold exactly 10000 records.
DatasetPair load_cifar10(const std::filesystem::path& dir);

/// Decodes an IDX image file (magic 0x00000803) into [N, 32, 32, 3]: the
/// grayscale image is zero-padded to 32x32 and replicated to 3 channels.
Tensor<float> decode_idx_images(std::span<const std::uint8_t> bytes);
/// Decodes an IDX label file (magic 0x00000801).
std::vector<int> decode_idx_labels(std::span<const std::uint8_t> bytes);

/// Reads train-images-idx3-ubyte / train-labels-idx1-ubyte and the t10k pair.
DatasetPair load_mnist(const std::filesystem::path& dir);

/// Class-conditional random images for smoke runs and tests: each class has
/// a fixed random template, examples are template plus noise, clipped to [0,1].
Dataset make_synthetic(std::size_t n, std::size_t height, std::size_t width, std::size_t channels,
                       std::size_t num_classes, std::uint64_t seed, Split split = Split::train);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

/// Maps [0, 1] pixels to [-1, 1] with fixed constants (x - 0.5) / 0.5.
void normalize_inplace(Tensor<float>& images);

inline constexpr std::size_t kCropPad = 4;

/// Deterministic augmentation of one image [H, W, ch]: optional horizontal
/// flip, then a crop at offset (dy, dx) of the reflect-padded (pad 4) image.
/// dy = dx = 4 is the centred crop.
Tensor<float> augment_with(const Tensor<float>& image, bool flip, std::size_t dy, std::size_t dx);
/// Random flip with probability 0.5 and uniformly random crop offset.
Tensor<float> augment(const Tensor<float>& image, Rng& rng);

enum class PermKind { none, patch, global };
PermKind perm_kind_from_string(const std::string& name);

/// Seeded input permutation used for every image of a run.
PermSpec build_perm_pipeline(PermKind kind, const MixerConfig& geometry, std::uint64_t seed);

/// Copy of images [idx...] into a new batch tensor, plus their labels.
Tensor<float> gather_images(const Dataset& ds, std::span<const std::size_t> idx);

}  // namespace mixer
