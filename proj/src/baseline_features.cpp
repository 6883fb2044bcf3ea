// Copyright 2026 The comrp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "comrp/error.hpp"
#include "comrp/feature_io.hpp"
#include "comrp/parallel.hpp"

namespace comrp {

namespace {

constexpr int kColorBins = 16;
constexpr int kOrientationBins = 8;
constexpr int kGradientGrid = 2;
constexpr int kSpatialGrid = 6;

double luma(const std::uint8_t* p) { return (0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]) / 255.0; }

double chroma(const std::uint8_t* p) {
  const auto [lo, hi] = std::minmax({p[0], p[1], p[2]});
  return (hi - lo) / 255.0;
}

// Divides by the block's L1 norm; an all-zero block is left as is.
void l1_normalize(std::span<double> block) {
  double s = 0.0;
  for (const double v : block) s += v;
  if (s <= 0.0) return;
  for (double& v : block) v /= s;
}

}  // namespace

std::vector<float> baseline_features_any(const RgbImage& img) {
  if (img.width < 3 || img.height < 3 || img.pixels.size() != 3 * std::size_t(img.width) * img.height) {
    throw BadShape("baseline features need an RGB raster of at least 3x3");
  }
  const std::uint32_t w = img.width;
  const std::uint32_t h = img.height;
  std::array<double, kBaselineDim> f{};
  std::span<double> color(f.data(), kColorBlockDim);
  std::span<double> grad(f.data() + kColorBlockDim, kGradientBlockDim);
  std::span<double> grid(f.data() + kColorBlockDim + kGradientBlockDim, kGridBlockDim);

  for (std::size_t i = 0; i < std::size_t(w) * h; ++i) {
    for (int c = 0; c < 3; ++c) color[c * kColorBins + (img.pixels[3 * i + c] >> 4)] += 1.0;
  }
  for (int c = 0; c < 3; ++c) l1_normalize(color.subspan(c * kColorBins, kColorBins));

  std::vector<double> lum(std::size_t(w) * h);
  for (std::uint32_t y = 0; y < h; ++y) {
    for (std::uint32_t x = 0; x < w; ++x) lum[std::size_t(y) * w + x] = luma(img.at(x, y));
  }
  for (std::uint32_t y = 1; y + 1 < h; ++y) {
    for (std::uint32_t x = 1; x + 1 < w; ++x) {
      const double gx = lum[std::size_t(y) * w + x + 1] - lum[std::size_t(y) * w + x - 1];
      const double gy = lum[std::size_t(y + 1) * w + x] - lum[std::size_t(y - 1) * w + x];
      const double mag = std::hypot(gx, gy);
      if (mag == 0.0) continue;
      const double angle = std::atan2(gy, gx) + std::numbers::pi;  // [0, 2pi]
      int bin = static_cast<int>(angle / (2.0 * std::numbers::pi) * kOrientationBins);
      bin = std::clamp(bin, 0, kOrientationBins - 1);
      const auto cx = static_cast<int>(std::uint64_t(x) * kGradientGrid / w);
      const auto cy = static_cast<int>(std::uint64_t(y) * kGradientGrid / h);
      grad[(cy * kGradientGrid + cx) * kOrientationBins + bin] += mag;
    }
  }
  for (int cell = 0; cell < kGradientGrid * kGradientGrid; ++cell) {
    l1_normalize(grad.subspan(cell * kOrientationBins, kOrientationBins));
  }

  for (int gy = 0; gy < kSpatialGrid; ++gy) {
    const std::uint32_t y0 = gy * h / kSpatialGrid;
    const std::uint32_t y1 = (gy + 1) * h / kSpatialGrid;
    for (int gx = 0; gx < kSpatialGrid; ++gx) {
      const std::uint32_t x0 = gx * w / kSpatialGrid;
      const std::uint32_t x1 = (gx + 1) * w / kSpatialGrid;
      double sl = 0.0, sc = 0.0;
      std::size_t n = 0;
      for (std::uint32_t y = y0; y < y1; ++y) {
        for (std::uint32_t x = x0; x < x1; ++x) {
          sl += lum[std::size_t(y) * w + x];
          sc += chroma(img.at(x, y));
          ++n;
        }
      }
      const int cell = gy * kSpatialGrid + gx;
      if (n > 0) {
        grid[2 * cell] = sl / n;
        grid[2 * cell + 1] = sc / n;
      }
    }
  }
  return {f.begin(), f.end()};
}

std::vector<float> baseline_features(const RgbImage& crop) {
  if (crop.width != kBaselineCropSize || crop.height != kBaselineCropSize) {
    throw BadShape("baseline features expect a " + std::to_string(kBaselineCropSize) + "x" +
                   std::to_string(kBaselineCropSize) + " crop, got " + std::to_string(crop.width) + "x" +
                   std::to_string(crop.height));
  }
  return baseline_features_any(crop);
}

FeaturePack baseline_pack(const std::vector<RegionCrop>& crops) {
  FeaturePack pack;
  pack.dim = kBaselineDim;
  pack.source_tag = kBaselineSourceTag;
  pack.matrix.resize(crops.size() * kBaselineDim);
  for (const auto& c : crops) pack.region_ids.push_back(c.region_id);
  parallel_for(crops.size(), [&](std::size_t i) {
    const auto f = baseline_features(crops[i].pixels);
    std::copy(f.begin(), f.end(), pack.matrix.begin() + static_cast<std::ptrdiff_t>(i * kBaselineDim));
  });
  return pack;
}

}  // namespace comrp
