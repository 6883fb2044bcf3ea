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

#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace comrp {

using Rgb = std::array<std::uint8_t, 3>;

/// Interleaved 8-bit RGB raster, row-major.
struct RgbImage {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<std::uint8_t> pixels;  // 3 * width * height

  RgbImage() = default;
  RgbImage(std::uint32_t w, std::uint32_t h, Rgb fill = {0, 0, 0});

  std::uint8_t* at(std::uint32_t x, std::uint32_t y) { return &pixels[3 * (std::size_t(y) * width + x)]; }
  const std::uint8_t* at(std::uint32_t x, std::uint32_t y) const {
    return &pixels[3 * (std::size_t(y) * width + x)];
  }
  void set(std::uint32_t x, std::uint32_t y, Rgb c) {
    auto* p = at(x, y);
    p[0] = c[0];
    p[1] = c[1];
    p[2] = c[2];
  }
  bool operator==(const RgbImage&) const = default;
};

/// Single-channel 8-bit raster, row-major.
struct GrayImage {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<std::uint8_t> pixels;

  GrayImage() = default;
  GrayImage(std::uint32_t w, std::uint32_t h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(std::size_t(w) * h, fill) {}

  std::uint8_t& at(std::uint32_t x, std::uint32_t y) { return pixels[std::size_t(y) * width + x]; }
  std::uint8_t at(std::uint32_t x, std::uint32_t y) const { return pixels[std::size_t(y) * width + x]; }
  bool operator==(const GrayImage&) const = default;
};

/// Row-major boolean raster stored as 0/1 bytes.
using Bitmask = GrayImage;

/// Copies the half-open rectangle [x0,x1) x [y0,y1). The rectangle must lie
/// inside the image.
RgbImage sub_image(const RgbImage& src, std::uint32_t x0, std::uint32_t y0, std::uint32_t x1,
                   std::uint32_t y1);

/// Bilinear resize with corner-aligned sampling: output corners sample the
/// source corners exactly.
RgbImage resize_bilinear(const RgbImage& src, std::uint32_t out_w, std::uint32_t out_h);

}  // namespace comrp
