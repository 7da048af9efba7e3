// Copyright (c) 2026 The Mixer Authors
// SPDX-License-Identifier: Apache-2.0

#include "mixer/viz.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "mixer/errors.hpp"

namespace mixer::viz {

namespace {

void check_grid(std::span<const double> grid, std::size_t height, std::size_t width) {
  if (height == 0 || width == 0 || grid.size() != height * width) {
    throw DimensionError("grid of " + std::to_string(grid.size()) + " values is not " + std::to_string(height) +
                         "x" + std::to_string(width));
  }
}

std::string numbered(const std::string& prefix, std::size_t idx) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04zu", idx);
  return prefix + buf + ".pgm";
}

ExportResult write_units(const std::vector<std::vector<double>>& grids, const std::vector<std::size_t>& order,
                         std::size_t height, std::size_t width, const std::filesystem::path& out_dir,
                         const std::string& prefix) {
  std::filesystem::create_directories(out_dir);
  ExportResult result;
  result.order = order;
  std::vector<GrayImage> tiles;
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    auto image = quantize(grids[order[pos]], height, width);
    auto path = out_dir / numbered(prefix + "_unit", pos);
    write_pgm(path, image);
    result.unit_files.push_back(std::move(path));
    tiles.push_back(std::move(image));
  }
  result.sheet = out_dir / (prefix + "_sheet.pgm");
  write_pgm(result.sheet, contact_sheet(tiles));
  return result;
}

}  // namespace

double frequency_score(std::span<const double> grid, std::size_t height, std::size_t width) {
  check_grid(grid, height, width);
  const double n = double(grid.size());
  const double mean = std::accumulate(grid.begin(), grid.end(), 0.0) / n;
  double var = 0;
  for (double v : grid) var += (v - mean) * (v - mean);
  var /= n;
  if (!(var > 0)) return 0.0;
  const double inv = 1.0 / std::sqrt(var);
  double total = 0;
  std::size_t count = 0;
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const double v = grid[y * width + x];
      if (x + 1 < width) {
        total += std::abs(grid[y * width + x + 1] - v) * inv;
        ++count;
      }
      if (y + 1 < height) {
        total += std::abs(grid[(y + 1) * width + x] - v) * inv;
        ++count;
      }
    }
  }
  return count == 0 ? 0.0 : total / double(count);
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("cosine similarity of vectors with different lengths");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<std::size_t> display_order(const std::vector<std::vector<double>>& units, std::size_t height,
                                       std::size_t width) {
  std::vector<double> scores(units.size());
  for (std::size_t i = 0; i < units.size(); ++i) scores[i] = frequency_score(units[i], height, width);
  std::vector<std::size_t> sorted(units.size());
  std::iota(sorted.begin(), sorted.end(), std::size_t{0});
  std::stable_sort(sorted.begin(), sorted.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });

  std::vector<bool> used(units.size(), false);
  std::vector<std::size_t> order;
  order.reserve(units.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const auto u = sorted[i];
    if (used[u]) continue;
    used[u] = true;
    order.push_back(u);
    double best = 0.0;
    std::size_t partner = units.size();
    for (std::size_t j = i + 1; j < sorted.size(); ++j) {
      const auto v = sorted[j];
      if (used[v]) continue;
      const double c = cosine_similarity(units[u], units[v]);
      if (c < best) {
        best = c;
        partner = v;
      }
    }
    if (partner != units.size()) {
      used[partner] = true;
      order.push_back(partner);
    }
  }
  return order;
}

GrayImage quantize(std::span<const double> grid, std::size_t height, std::size_t width) {
  check_grid(grid, height, width);
  GrayImage image{width, height, std::vector<std::uint8_t>(grid.size(), 128)};
  const auto [lo, hi] = std::minmax_element(grid.begin(), grid.end());
  const double range = *hi - *lo;
  if (!(range > 0)) return image;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    image.pixels[i] = std::uint8_t(std::lround((grid[i] - *lo) / range * 255.0));
  }
  return image;
}

GrayImage contact_sheet(const std::vector<GrayImage>& tiles) {
  if (tiles.empty()) throw ContractError("contact sheet needs at least one tile");
  const std::size_t tw = tiles[0].width, th = tiles[0].height;
  for (const auto& t : tiles) {
    if (t.width != tw || t.height != th) throw DimensionError("contact sheet tiles differ in size");
  }
  const auto per_row = std::size_t(std::ceil(std::sqrt(double(tiles.size()))));
  const std::size_t rows = (tiles.size() + per_row - 1) / per_row;
  GrayImage sheet;
  sheet.width = per_row * (tw + 1) - 1;
  sheet.height = rows * (th + 1) - 1;
  sheet.pixels.assign(sheet.width * sheet.height, 0);
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    const std::size_t ox = (i % per_row) * (tw + 1), oy = (i / per_row) * (th + 1);
    for (std::size_t y = 0; y < th; ++y) {
      std::copy_n(tiles[i].pixels.begin() + std::ptrdiff_t(y * tw), tw,
                  sheet.pixels.begin() + std::ptrdiff_t((oy + y) * sheet.width + ox));
    }
  }
  return sheet;
}

std::string encode_pgm(const GrayImage& image) {
  if (image.pixels.size() != image.width * image.height || image.pixels.empty()) {
    throw DimensionError("pgm pixel count does not match its size");
  }
  std::string out = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(image.pixels.data()), image.pixels.size());
  return out;
}

GrayImage decode_pgm(const std::string& bytes) {
  std::istringstream in(bytes);
  std::string magic;
  std::size_t width = 0, height = 0, maxval = 0;
  in >> magic;
  auto skip_comments = [&] {
    in >> std::ws;
    while (in.peek() == '#') {
      std::string line;
      std::getline(in, line);
      in >> std::ws;
    }
  };
  skip_comments();
  in >> width;
  skip_comments();
  in >> height;
  skip_comments();
  in >> maxval;
  if (magic != "P5" || !in || width == 0 || height == 0 || maxval != 255) {
    throw FormatError("not an 8-bit binary PGM");
  }
  in.get();  // single whitespace before the raster
  GrayImage image{width, height, std::vector<std::uint8_t>(width * height)};
  const auto offset = std::size_t(in.tellg());
  if (bytes.size() < offset + image.pixels.size()) {
    throw FormatError("pgm raster truncated at byte " + std::to_string(bytes.size()));
  }
  std::copy_n(bytes.begin() + std::ptrdiff_t(offset), image.pixels.size(), image.pixels.begin());
  return image;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  const auto bytes = encode_pgm(image);
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) throw Error("failed writing " + path.string());
}

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_pgm(ss.str());
}

std::vector<std::vector<double>> token_unit_grids(const MixerParams<float>& params, const MixerConfig& config,
                                                  std::size_t block) {
  if (block >= config.num_blocks) {
    throw ContractError("block " + std::to_string(block) + " out of range for " +
                        std::to_string(config.num_blocks) + " blocks");
  }
  if (config.variant.kind != VariantKind::standard) {
    throw UnsupportedError("token unit export needs the standard variant with one shared token-mixing kernel");
  }
  const auto& w1 = params.at(block_param(block, "token/w1"));
  const std::size_t s = sequence_length(config);
  if (w1.rank() != 2 || w1.dim(1) != s) throw DimensionError("token/w1 has shape " + shape_str(w1.shape()));
  const auto order = token_order(config);
  std::vector<std::vector<double>> grids(w1.dim(0), std::vector<double>(s));
  for (std::size_t u = 0; u < w1.dim(0); ++u) {
    for (std::size_t t = 0; t < s; ++t) grids[u][order[t]] = double(w1[u * s + t]);
  }
  return grids;
}

std::vector<std::vector<double>> stem_unit_grids(const MixerParams<float>& params, const MixerConfig& config) {
  const auto& w = params.at("stem/w");
  const std::size_t p = config.patch, ch = config.channels, c = config.hidden_c;
  if (w.rank() != 2 || w.dim(0) != p * p * ch || w.dim(1) != c) {
    throw DimensionError("stem/w has shape " + shape_str(w.shape()));
  }
  std::vector<std::vector<double>> grids(c, std::vector<double>(p * p, 0.0));
  for (std::size_t row = 0; row < p * p * ch; ++row) {
    const std::size_t pixel = row / ch;
    for (std::size_t j = 0; j < c; ++j) grids[j][pixel] += double(w[row * c + j]) / double(ch);
  }
  return grids;
}

ExportResult export_token_units(const MixerParams<float>& params, const MixerConfig& config, std::size_t block,
                                const std::filesystem::path& out_dir) {
  const auto grids = token_unit_grids(params, config, block);
  const std::size_t h = config.grid_h(), w = config.grid_w();
  return write_units(grids, display_order(grids, h, w), h, w, out_dir, "block" + std::to_string(block));
}

ExportResult export_stem_units(const MixerParams<float>& params, const MixerConfig& config,
                               const std::filesystem::path& out_dir) {
  const auto grids = stem_unit_grids(params, config);
  std::vector<std::size_t> order(grids.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  return write_units(grids, order, config.patch, config.patch, out_dir, "stem");
}

}  // namespace mixer::viz
