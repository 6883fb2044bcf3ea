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

#include "comrp/roi_tiler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "comrp/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace comrp {

namespace {

// Values within this distance of an integer are snapped before outward
// rounding, so products like 0.5 * 5304 are not pushed a pixel outward by
// representation error.
constexpr double kSnap = 1e-6;

std::int64_t floor_snapped(double v) {
  const double r = std::round(v);
  return static_cast<std::int64_t>(std::abs(v - r) < kSnap ? r : std::floor(v));
}

std::int64_t ceil_snapped(double v) {
  const double r = std::round(v);
  return static_cast<std::int64_t>(std::abs(v - r) < kSnap ? r : std::ceil(v));
}

}  // namespace

BBox denormalize_box(const NormBox& box, std::uint32_t original_w, std::uint32_t original_h,
                     std::uint32_t resize_long_side) {
  if (resize_long_side == 0 || original_w == 0 || original_h == 0) {
    throw DegenerateBox("zero-sized image or resize geometry");
  }
  if (!(box.x0 < box.x1 && box.y0 < box.y1)) throw DegenerateBox("normalized box has zero or negative extent");
  const double scale = static_cast<double>(std::max(original_w, original_h)) / resize_long_side;
  const double resized_w = original_w / scale;
  const double resized_h = original_h / scale;
  const auto clamp_to = [](std::int64_t v, std::uint32_t hi) {
    return static_cast<std::uint32_t>(std::clamp<std::int64_t>(v, 0, hi));
  };
  BBox out;
  out.x_min = clamp_to(floor_snapped(box.x0 * resized_w * scale), original_w);
  out.y_min = clamp_to(floor_snapped(box.y0 * resized_h * scale), original_h);
  out.x_max = clamp_to(ceil_snapped(box.x1 * resized_w * scale), original_w);
  out.y_max = clamp_to(ceil_snapped(box.y1 * resized_h * scale), original_h);
  if (out.empty()) throw DegenerateBox("box collapses to zero area after rounding");
  return out;
}

NormBox normalize_box(const BBox& box, std::uint32_t original_w, std::uint32_t original_h,
                      std::uint32_t resize_long_side) {
  const double scale = static_cast<double>(std::max(original_w, original_h)) / resize_long_side;
  const double resized_w = original_w / scale;
  const double resized_h = original_h / scale;
  return {box.x_min / scale / resized_w, box.y_min / scale / resized_h, box.x_max / scale / resized_w,
          box.y_max / scale / resized_h};
}

namespace {

std::vector<std::uint32_t> axis_offsets(std::uint32_t lo, std::uint32_t hi, std::uint32_t tile,
                                        std::uint32_t image_extent) {
  std::vector<std::uint32_t> out;
  const std::uint32_t max_off = image_extent - tile;
  for (std::uint64_t off = lo; off < hi; off += tile) {
    std::uint64_t o = off;
    if (o + tile > hi) o = hi >= lo + tile ? hi - tile : lo;  // shift inward to the box edge
    o = std::min<std::uint64_t>(o, max_off);                   // and stay inside the image
    const auto v = static_cast<std::uint32_t>(o);
    if (out.empty() || out.back() != v) out.push_back(v);
  }
  return out;
}

}  // namespace

TilePlan plan_tiles(const BBox& pixel_box, std::uint32_t tile_size, std::uint32_t image_w,
                    std::uint32_t image_h) {
  if (tile_size == 0) throw TileExceedsImage("tile size must be positive");
  if (tile_size > image_w || tile_size > image_h) {
    throw TileExceedsImage("tile size " + std::to_string(tile_size) + " exceeds image " +
                           std::to_string(image_w) + "x" + std::to_string(image_h));
  }
  BBox box = pixel_box;
  box.x_max = std::min(box.x_max, image_w);
  box.y_max = std::min(box.y_max, image_h);
  if (box.empty()) throw DegenerateBox("box does not intersect the image");

  TilePlan plan;
  plan.tile_size = tile_size;
  for (const auto y : axis_offsets(box.y_min, box.y_max, tile_size, image_h)) {
    for (const auto x : axis_offsets(box.x_min, box.x_max, tile_size, image_w)) {
      plan.tiles.push_back({x, y});
    }
  }
  return plan;
}

std::string tile_id(const std::string& image_id, TileOffset offset) {
  return image_id + "_" + std::to_string(offset.x) + "_" + std::to_string(offset.y);
}

std::vector<Tile> cut_tiles(const RgbImage& image, const TilePlan& plan) {
  std::vector<Tile> out;
  out.reserve(plan.tiles.size());
  for (const auto& t : plan.tiles) {
    if (t.x + plan.tile_size > image.width || t.y + plan.tile_size > image.height) {
      throw TileExceedsImage("tile at " + std::to_string(t.x) + "," + std::to_string(t.y) +
                             " reads outside the image");
    }
    out.push_back({tile_id(plan.source_image_id, t),
                   sub_image(image, t.x, t.y, t.x + plan.tile_size, t.y + plan.tile_size)});
  }
  return out;
}

DetectionFile read_detection_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  DetectionFile f;
  try {
    const json j = json::parse(in);
    f.image_id = j.at("image_id").get<std::string>();
    f.resize_long_side = j.value("resize_long_side", kDefaultResizeLongSide);
    f.box_threshold = j.value("box_threshold", 0.35);
    f.text_threshold = j.value("text_threshold", 0.25);
    for (const auto& d : j.at("detections")) {
      DetectionBox b;
      b.image_id = d.value("image_id", f.image_id);
      const auto& box = d.at("box");
      if (!box.is_array() || box.size() != 4) throw FormatError("box must have 4 entries");
      b.box = {box[0].get<double>(), box[1].get<double>(), box[2].get<double>(), box[3].get<double>()};
      b.score = d.value("score", 1.0);
      b.label = d.value("label", std::string{});
      b.keep = d.value("keep", true);
      if (!(b.box.x0 < b.box.x1 && b.box.y0 < b.box.y1)) throw FormatError("detection box must satisfy x0<x1, y0<y1");
      if (b.score < 0.0 || b.score > 1.0) throw FormatError("detection score outside [0,1]");
      f.detections.push_back(std::move(b));
    }
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return f;
}

std::vector<DetectionFile> read_detection_dir(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<DetectionFile> out;
  for (const auto& f : files) out.push_back(read_detection_file(f));
  return out;
}

}  // namespace comrp
