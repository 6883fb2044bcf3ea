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
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "comrp/raster.hpp"

namespace comrp {

/// Run-length counts, row-major, alternating background/foreground and
/// starting with background. Only the first count may be zero.
using Rle = std::vector<std::uint32_t>;

/// Half-open pixel rectangle [x_min, x_max) x [y_min, y_max).
struct BBox {
  std::uint32_t x_min = 0;
  std::uint32_t y_min = 0;
  std::uint32_t x_max = 0;
  std::uint32_t y_max = 0;

  bool empty() const { return x_max <= x_min || y_max <= y_min; }
  std::uint32_t width() const { return empty() ? 0 : x_max - x_min; }
  std::uint32_t height() const { return empty() ? 0 : y_max - y_min; }
  bool operator==(const BBox&) const = default;
};

struct ImageRecord {
  std::string image_id;
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::filesystem::path path;
  bool operator==(const ImageRecord&) const = default;
};

struct MaskRecord {
  std::string mask_id;
  std::string image_id;
  Rle rle;
  std::uint32_t area = 0;
  BBox bbox;
  bool operator==(const MaskRecord&) const = default;
};

/// All proposals for one image; the on-disk unit of the mask adapter format.
struct MaskFile {
  std::string image_id;
  std::vector<MaskRecord> masks;
};

struct CoverageReport {
  std::map<std::string, double> per_image;  // image_id -> percent
  double dataset_mean = 0.0;
  std::uint64_t mask_count_total = 0;
  std::uint64_t mask_count_below_threshold = 0;
  std::uint64_t mask_count_at_or_above_threshold = 0;
  std::uint32_t threshold = 0;
};

inline constexpr std::uint32_t kDefaultAreaThreshold = 3000;
inline constexpr std::uint32_t kDefaultCropSize = 224;

Bitmask rle_decode(const Rle& rle, std::uint32_t width, std::uint32_t height);
Rle rle_encode(const Bitmask& mask);

std::uint32_t foreground_area(const Bitmask& mask);
/// Tight bound of foreground pixels; all-zero box when the mask is empty.
BBox foreground_bbox(const Bitmask& mask);

/// Builds a fully consistent record (rle, area, bbox) from a raster.
MaskRecord make_mask_record(std::string mask_id, std::string image_id, const Bitmask& mask);

/// Checks image_id, sum(rle), area and bbox against the decoded raster.
/// Throws LengthMismatch or InvalidMask.
void validate_mask(const MaskRecord& mask, const ImageRecord& image);

struct AreaFilterResult {
  std::vector<MaskRecord> kept;
  std::vector<MaskRecord> dropped;
};

/// kept = masks with area strictly greater than theta; order preserved.
AreaFilterResult filter_by_area(const std::vector<MaskRecord>& masks, std::uint32_t theta);

/// Per-image union coverage plus a small/large census against `theta`.
CoverageReport compute_coverage(const std::vector<ImageRecord>& images,
                                const std::vector<MaskRecord>& masks,
                                std::uint32_t theta = kDefaultAreaThreshold);

/// Bounding-box crop of the mask region, bilinearly resized to a square.
/// Background pixels inside the box are kept.
RgbImage crop_region(const RgbImage& image, const MaskRecord& mask,
                     std::uint32_t out_size = kDefaultCropSize);

struct RegionCrop {
  std::string region_id;
  RgbImage pixels;
};

/// Crops every mask in input order. Images are decoded from their manifest
/// paths (or taken from `pixels`, parallel to `images`), each once.
std::vector<RegionCrop> crop_regions(const std::vector<ImageRecord>& images, const std::vector<MaskRecord>& masks,
                                     std::uint32_t out_size = kDefaultCropSize);
std::vector<RegionCrop> crop_regions(const std::vector<ImageRecord>& images, const std::vector<RgbImage>& pixels,
                                     const std::vector<MaskRecord>& masks,
                                     std::uint32_t out_size = kDefaultCropSize);

/// Writes `{region_id}.png` per crop / reads every *.png back in name order.
void write_crop_dir(const std::filesystem::path& dir, const std::vector<RegionCrop>& crops);
std::vector<RegionCrop> read_crop_dir(const std::filesystem::path& dir);

// --- file formats ---------------------------------------------------------

/// Reads a JSON array of image records. Relative paths are resolved against
/// the manifest's directory.
std::vector<ImageRecord> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ImageRecord>& images);

MaskFile read_mask_file(const std::filesystem::path& path);
void write_mask_file(const std::filesystem::path& path, const MaskFile& file);
/// Every *.json file in `dir`, in sorted filename order.
std::vector<MaskFile> read_mask_dir(const std::filesystem::path& dir);
std::vector<MaskRecord> flatten(const std::vector<MaskFile>& files);

nlohmann::json to_json(const MaskRecord& mask);
MaskRecord mask_from_json(const nlohmann::json& j, const std::string& image_id);
nlohmann::json to_json(const CoverageReport& report);

const ImageRecord& find_image(const std::vector<ImageRecord>& images, const std::string& image_id);

}  // namespace comrp
