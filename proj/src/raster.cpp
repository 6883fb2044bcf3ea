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

#include "comrp/raster.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "comrp/error.hpp"

namespace comrp {

RgbImage::RgbImage(std::uint32_t w, std::uint32_t h, Rgb fill)
    : width(w), height(h), pixels(3 * std::size_t(w) * h) {
  for (std::size_t i = 0; i < std::size_t(w) * h; ++i) {
    pixels[3 * i] = fill[0];
    pixels[3 * i + 1] = fill[1];
    pixels[3 * i + 2] = fill[2];
  }
}

RgbImage sub_image(const RgbImage& src, std::uint32_t x0, std::uint32_t y0, std::uint32_t x1,
                   std::uint32_t y1) {
  if (x0 >= x1 || y0 >= y1 || x1 > src.width || y1 > src.height) {
    throw BadShape("sub-image rectangle out of bounds");
  }
  RgbImage out(x1 - x0, y1 - y0);
  const std::size_t row_bytes = 3 * std::size_t(out.width);
  for (std::uint32_t y = y0; y < y1; ++y) {
    std::copy_n(src.at(x0, y), row_bytes, out.at(0, y - y0));
  }
  return out;
}

namespace {

// Source coordinate for output index i under corner alignment.
double source_coord(std::uint32_t i, std::uint32_t out_n, std::uint32_t src_n) {
  if (out_n <= 1) return 0.5 * (src_n - 1);
  return static_cast<double>(i) * (src_n - 1) / (out_n - 1);
}

}  // namespace

RgbImage resize_bilinear(const RgbImage& src, std::uint32_t out_w, std::uint32_t out_h) {
  if (src.width == 0 || src.height == 0 || out_w == 0 || out_h == 0) {
    throw BadShape("resize of an empty raster");
  }
  if (src.width == out_w && src.height == out_h) return src;
  RgbImage out(out_w, out_h);
  for (std::uint32_t oy = 0; oy < out_h; ++oy) {
    const double sy = source_coord(oy, out_h, src.height);
    const auto y0 = static_cast<std::uint32_t>(std::floor(sy));
    const std::uint32_t y1 = std::min(y0 + 1, src.height - 1);
    const double fy = sy - y0;
    for (std::uint32_t ox = 0; ox < out_w; ++ox) {
      const double sx = source_coord(ox, out_w, src.width);
      const auto x0 = static_cast<std::uint32_t>(std::floor(sx));
      const std::uint32_t x1 = std::min(x0 + 1, src.width - 1);
      const double fx = sx - x0;
      const auto* p00 = src.at(x0, y0);
      const auto* p10 = src.at(x1, y0);
      const auto* p01 = src.at(x0, y1);
      const auto* p11 = src.at(x1, y1);
      auto* q = out.at(ox, oy);
      for (int c = 0; c < 3; ++c) {
        const double top = p00[c] + fx * (p10[c] - p00[c]);
        const double bottom = p01[c] + fx * (p11[c] - p01[c]);
        const double v = top + fy * (bottom - top);
        q[c] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
      }
    }
  }
  return out;
}

}  // namespace comrp
