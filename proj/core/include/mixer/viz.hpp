// Copyright (c) 2026 The Mixer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mixer/config.hpp"
#include "mixer/model.hpp"

namespace mixer::viz {

/// 8-bit grayscale raster, row-major.
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  bool operator==(const GrayImage&) const = default;
};

/// Mean absolute discrete spatial gradient (horizontal and vertical forward
/// differences) of the grid after standardizing it to zero mean and unit
/// variance. A constant grid scores 0.
double frequency_score(std::span<const double> grid, std::size_t height, std::size_t width);

/// Cosine similarity; 0 when either vector is zero.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Display order: units sorted ascending by frequency score (ties by index),
/// then walked greedily so each unit is followed by the unused unit with the
/// most negative cosine similarity to it, when one with negative similarity
/// exists.
std::vector<std::size_t> display_order(const std::vector<std::vector<double>>& units, std::size_t height,
                                       std::size_t width);

/// Min-max scaling to [0, 255] with rounding; a constant grid maps to 128.
GrayImage quantize(std::span<const double> grid, std::size_t height, std::size_t width);

/// Tiles equally sized images ceil(sqrt(n)) per row with a 1-pixel black gap.
GrayImage contact_sheet(const std::vector<GrayImage>& tiles);

std::string encode_pgm(const GrayImage& image);
GrayImage decode_pgm(const std::string& bytes);
void write_pgm(const std::filesystem::path& path, const GrayImage& image);
GrayImage read_pgm(const std::filesystem::path& path);

/// Rows of w1 of one block as patch-grid images, in raster layout.
std::vector<std::vector<double>> token_unit_grids(const MixerParams<float>& params, const MixerConfig& config,
                                                  std::size_t block);

/// Columns of the stem kernel as P x P grids averaged over input channels.
std::vector<std::vector<double>> stem_unit_grids(const MixerParams<float>& params, const MixerConfig& config);

struct ExportResult {
  std::vector<std::filesystem::path> unit_files;  // in display order
  std::filesystem::path sheet;
  std::vector<std::size_t> order;  // order[i] is the unit shown at position i
};

/// Writes block{b}_unit{i:04}.pgm for every token-mixing hidden unit (i is the
/// display position) and block{b}_sheet.pgm. Throws ContractError for an out
/// of range block and UnsupportedError for variants without a single shared
/// token-mixing kernel.
ExportResult export_token_units(const MixerParams<float>& params, const MixerConfig& config, std::size_t block,
                                const std::filesystem::path& out_dir);

/// Writes stem_unit{i:04}.pgm for every embedding unit in channel order and
/// stem_sheet.pgm.
ExportResult export_stem_units(const MixerParams<float>& params, const MixerConfig& config,
                               const std::filesystem::path& out_dir);

}  // namespace mixer::viz
