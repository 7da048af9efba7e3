// Copyright (c) 2026 The Mixer Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "mixer/data.hpp"
#include "mixer/errors.hpp"
#include "test_util.hpp"

namespace mixer {
namespace {

using testing::random_tensor;

std::vector<std::uint8_t> cifar_record(std::uint8_t label, std::uint8_t seed) {
  std::vector<std::uint8_t> rec(kCifarRecordBytes);
  rec[0] = label;
  for (std::size_t i = 1; i < rec.size(); ++i) rec[i] = std::uint8_t((i * 31 + seed) % 256);
  return rec;
}

TEST(Cifar, DecodesPlanarRecords) {
  auto bytes = cifar_record(3, 0);
  const auto second = cifar_record(9, 7);
  bytes.insert(bytes.end(), second.begin(), second.end());
  const auto ds = decode_cifar10_records(bytes, Split::test);
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.labels, (std::vector<int>{3, 9}));
  EXPECT_EQ(ds.images.shape(), (Shape{2, 32, 32, 3}));
  EXPECT_EQ(ds.split, Split::test);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t y : {0u, 5u, 31u})
      for (std::size_t x : {0u, 17u, 31u})
        for (std::size_t c = 0; c < 3; ++c) {
          const std::uint8_t raw = bytes[r * kCifarRecordBytes + 1 + c * 1024 + y * 32 + x];
          EXPECT_EQ(ds.images.at({r, y, x, c}), float(raw) / 255.0f);
        }
}

TEST(Cifar, TruncationNamesByteOffset) {
  auto bytes = cifar_record(1, 0);
  bytes.resize(kCifarRecordBytes + 100);
  try {
    decode_cifar10_records(bytes, Split::train);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("offset 3073"), std::string::npos) << e.what();
  }
}

TEST(Cifar, LabelTenIsCorrupt) {
  EXPECT_THROW(decode_cifar10_records(cifar_record(10, 0), Split::train), FormatError);
  EXPECT_THROW(decode_cifar10_records({}, Split::train), FormatError);
}

TEST(Cifar, MissingDirectoryIsFormatError) {
  EXPECT_THROW(load_cifar10("/nonexistent/cifar"), FormatError);
}

std::vector<std::uint8_t> be32(std::uint32_t v) {
  return {std::uint8_t(v >> 24), std::uint8_t(v >> 16), std::uint8_t(v >> 8), std::uint8_t(v)};
}

std::vector<std::uint8_t> idx_images(std::uint32_t magic, std::uint32_t n, std::uint32_t rows, std::uint32_t cols) {
  std::vector<std::uint8_t> out;
  for (auto v : {magic, n, rows, cols}) {
    const auto b = be32(v);
    out.insert(out.end(), b.begin(), b.end());
  }
  for (std::size_t i = 0; i < std::size_t(n) * rows * cols; ++i) out.push_back(std::uint8_t(i % 251));
  return out;
}

TEST(Idx, PadsAndReplicatesChannels) {
  const auto bytes = idx_images(0x803, 2, 28, 28);
  const auto images = decode_idx_images(bytes);
  EXPECT_EQ(images.shape(), (Shape{2, 32, 32, 3}));
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_EQ(images.at({0, 0, 0, c}), 0.0f);
    EXPECT_EQ(images.at({1, 31, 31, c}), 0.0f);
    EXPECT_EQ(images.at({0, 2, 2, c}), float(bytes[16]) / 255.0f);
    EXPECT_EQ(images.at({1, 2 + 5, 2 + 9, c}), float(bytes[16 + 784 + 5 * 28 + 9]) / 255.0f);
  }
}

TEST(Idx, Errors) {
  EXPECT_THROW(decode_idx_images(idx_images(0x801, 1, 28, 28)), FormatError);
  EXPECT_THROW(decode_idx_images(idx_images(0x803, 0, 28, 28)), FormatError);
  auto short_payload = idx_images(0x803, 2, 28, 28);
  short_payload.pop_back();
  EXPECT_THROW(decode_idx_images(short_payload), FormatError);
  EXPECT_THROW(decode_idx_images(idx_images(0x803, 1, 40, 40)), FormatError);

  std::vector<std::uint8_t> labels = be32(0x801);
  const auto n = be32(3);
  labels.insert(labels.end(), n.begin(), n.end());
  labels.insert(labels.end(), {1, 9, 0});
  EXPECT_EQ(decode_idx_labels(labels), (std::vector<int>{1, 9, 0}));
  labels.back() = 12;
  EXPECT_THROW(decode_idx_labels(labels), FormatError);
  auto empty = be32(0x801);
  const auto zero = be32(0);
  empty.insert(empty.end(), zero.begin(), zero.end());
  EXPECT_THROW(decode_idx_labels(empty), FormatError);
}

TEST(Idx, LoadsFromDirectory) {
  const auto dir = std::filesystem::temp_directory_path() / "mixer_idx_test";
  std::filesystem::create_directories(dir);
  auto write = [&](const char* name, const std::vector<std::uint8_t>& bytes) {
    std::ofstream(dir / name, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  };
  auto labels = be32(0x801);
  const auto two = be32(2);
  labels.insert(labels.end(), two.begin(), two.end());
  labels.insert(labels.end(), {4, 7});
  write("train-images-idx3-ubyte", idx_images(0x803, 2, 28, 28));
  write("train-labels-idx1-ubyte", labels);
  write("t10k-images-idx3-ubyte", idx_images(0x803, 2, 28, 28));
  write("t10k-labels-idx1-ubyte", labels);
  const auto pair = load_mnist(dir);
  EXPECT_EQ(pair.train.size(), 2u);
  EXPECT_EQ(pair.test.labels, (std::vector<int>{4, 7}));
  EXPECT_EQ(pair.test.split, Split::test);
  std::filesystem::remove_all(dir);
}

TEST(Augment, CentredCropWithoutFlipIsIdentity) {
  const auto image = random_tensor<float>({32, 32, 3}, 1);
  EXPECT_EQ(augment_with(image, false, 4, 4), image);
}

TEST(Augment, FlipMirrorsColumnsAndShiftReflects) {
  const auto image = random_tensor<float>({8, 8, 2}, 2);
  const auto flipped = augment_with(image, true, 4, 4);
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x)
      for (std::size_t c = 0; c < 2; ++c) EXPECT_EQ(flipped.at({y, x, c}), image.at({y, 7 - x, c}));
  // Shifting up by the full pad reads row -4 which reflects to row 4.
  const auto shifted = augment_with(image, false, 0, 4);
  EXPECT_EQ(shifted.at({0, 3, 1}), image.at({4, 3, 1}));
  EXPECT_EQ(shifted.at({4, 3, 1}), image.at({0, 3, 1}));
  EXPECT_THROW(augment_with(image, false, 9, 0), ContractError);
}

TEST(Augment, RandomVersionKeepsValues) {
  Rng rng(3);
  const auto image = random_tensor<float>({16, 16, 3}, 4);
  std::multiset<float> values(image.data().begin(), image.data().end());
  for (int i = 0; i < 20; ++i) {
    const auto out = augment(image, rng);
    for (float v : out.data()) EXPECT_TRUE(values.count(v));
  }
}

TEST(Normalize, MapsUnitIntervalToSymmetric) {
  auto t = Tensor<float>::from({3}, {0.0f, 0.5f, 1.0f});
  normalize_inplace(t);
  EXPECT_EQ(t, (Tensor<float>::from({3}, {-1.0f, 0.0f, 1.0f})));
}

TEST(PermPipeline, KindsAndDeterminism) {
  const auto c = named_config("toy");
  EXPECT_EQ(build_perm_pipeline(PermKind::none, c, 1), PermSpec::identity(c));
  const auto patch = build_perm_pipeline(PermKind::patch, c, 1);
  EXPECT_EQ(patch, build_perm_pipeline(PermKind::patch, c, 1));
  EXPECT_NE(patch, build_perm_pipeline(PermKind::patch, c, 2));
  EXPECT_TRUE(is_permutation(patch.token_perm));
  EXPECT_TRUE(is_permutation(patch.pixel_perm));
  EXPECT_EQ(patch.pixel_perm.size(), 48u);
  EXPECT_FALSE(patch.global_perm.has_value());
  const auto global = build_perm_pipeline(PermKind::global, c, 1);
  ASSERT_TRUE(global.global_perm.has_value());
  EXPECT_EQ(global.global_perm->size(), 192u);
  EXPECT_TRUE(is_permutation(*global.global_perm));
  EXPECT_EQ(perm_kind_from_string("patch"), PermKind::patch);
  EXPECT_THROW(perm_kind_from_string("spiral"), ConfigError);
}

TEST(PermPipeline, PreservesPixelMultiset) {
  const auto c = named_config("toy");
  const auto x = random_tensor<float>({8, 8, 3}, 5);
  for (auto kind : {PermKind::patch, PermKind::global}) {
    const auto permuted = permute_input(x, build_perm_pipeline(kind, c, 6), c);
    std::vector<float> y(permuted.data().begin(), permuted.data().end());
    std::vector<float> a(x.data().begin(), x.data().end());
    std::sort(a.begin(), a.end());
    std::sort(y.begin(), y.end());
    EXPECT_EQ(a, y);
  }
}

TEST(Synthetic, BalancedAndDeterministic) {
  const auto a = make_synthetic(40, 8, 8, 3, 10, 1);
  const auto b = make_synthetic(40, 8, 8, 3, 10, 1);
  EXPECT_EQ(a.images, b.images);
  for (int k = 0; k < 10; ++k) EXPECT_EQ(std::count(a.labels.begin(), a.labels.end(), k), 4);
  for (float v : a.images.data()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
  EXPECT_NE(make_synthetic(40, 8, 8, 3, 10, 1, Split::test).images, a.images);
}

TEST(GatherImages, CopiesRowsInOrder) {
  const auto ds = make_synthetic(5, 8, 8, 3, 5, 2);
  const std::vector<std::size_t> idx{4, 0};
  const auto batch = gather_images(ds, idx);
  EXPECT_EQ(batch.dim(0), 2u);
  EXPECT_EQ(batch.at({0, 1, 2, 0}), ds.images.at({4, 1, 2, 0}));
  const std::vector<std::size_t> bad{5};
  EXPECT_THROW(gather_images(ds, bad), ContractError);
}

}  // namespace
}  // namespace mixer
