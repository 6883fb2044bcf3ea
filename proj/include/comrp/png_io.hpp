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

#include <cstdint>
#include <filesystem>
#include <vector>

#include "comrp/raster.hpp"

namespace comrp {

/// Reads any 8- or 16-bit PNG as 8-bit RGB (alpha dropped, gray expanded).
RgbImage read_png_rgb(const std::filesystem::path& path);
void write_png_rgb(const std::filesystem::path& path, const RgbImage& image);
std::vector<std::uint8_t> encode_png_rgb(const RgbImage& image);

/// Reads a single-channel 8-bit PNG. Anything else (16-bit, color, alpha)
/// raises BadDepth.
GrayImage read_png_gray(const std::filesystem::path& path);
GrayImage decode_png_gray(const std::vector<std::uint8_t>& bytes);
void write_png_gray(const std::filesystem::path& path, const GrayImage& image);
std::vector<std::uint8_t> encode_png_gray(const GrayImage& image);

}  // namespace comrp
