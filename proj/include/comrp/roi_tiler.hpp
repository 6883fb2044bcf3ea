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
#include <string>
#include <utility>
#include <vector>

#include "comrp/mask_ingest.hpp"
#include "comrp/raster.hpp"

namespace comrp {

/// Box in [0,1] coordinates of the resized detector input.
struct NormBox {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
};

struct DetectionBox {
  std::string image_id;
  NormBox box;
  double score = 0.0;
  std::string label;
  bool keep = true;
};

/// One detections document, as written by the external detector/filter.
struct DetectionFile {
  std::string image_id;
  std::uint32_t resize_long_side = 1024;
  double box_threshold = 0.35;
  double text_threshold = 0.25;
  std::vector<DetectionBox> detections;
};

struct TileOffset {
  std::uint32_t x = 0;
  std::uint32_t y = 0;
  bool operator==(const TileOffset&) const = default;
};

struct TilePlan {
  std::string source_image_id;
  std::uint32_t tile_size = 800;
  std::uint32_t resize_long_side = 1024;
  std::vector<TileOffset> tiles;
};

struct Tile {
  std::string tile_id;
  RgbImage pixels;
};

inline constexpr std::uint32_t kDefaultTileSize = 800;
inline constexpr std::uint32_t kDefaultResizeLongSide = 1024;

/// Maps a normalized detector box to original-resolution pixels. The
/// detector saw the image with its long side scaled to `resize_long_side`;
/// the inverse scale is applied uniformly, then the box is rounded outward
/// and clamped to the image.
BBox denormalize_box(const NormBox& box, std::uint32_t original_w, std::uint32_t original_h,
                     std::uint32_t resize_long_side = kDefaultResizeLongSide);

/// Inverse of denormalize_box up to rounding.
NormBox normalize_box(const BBox& box, std::uint32_t original_w, std::uint32_t original_h,
                      std::uint32_t resize_long_side = kDefaultResizeLongSide);

/// Non-overlapping grid from the box origin; the last row/column is shifted
/// inward so every tile stays inside both the box extent and the image.
TilePlan plan_tiles(const BBox& pixel_box, std::uint32_t tile_size, std::uint32_t image_w,
                    std::uint32_t image_h);

std::string tile_id(const std::string& image_id, TileOffset offset);
std::vector<Tile> cut_tiles(const RgbImage& image, const TilePlan& plan);

DetectionFile read_detection_file(const std::filesystem::path& path);
std::vector<DetectionFile> read_detection_dir(const std::filesystem::path& dir);

}  // namespace comrp
