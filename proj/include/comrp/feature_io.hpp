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
#include <span>
#include <string>
#include <vector>

#include "comrp/mask_ingest.hpp"
#include "comrp/raster.hpp"

namespace comrp {

/// Per-region representation vectors, one row per region.
struct FeaturePack {
  std::uint32_t version = 1;
  std::uint32_t dim = 0;
  std::vector<std::string> region_ids;
  std::vector<float> matrix;  // region_ids.size() x dim, row-major
  std::string source_tag;

  std::uint64_t count() const { return region_ids.size(); }
  std::span<const float> row(std::size_t i) const { return {matrix.data() + i * dim, dim}; }
  bool operator==(const FeaturePack&) const = default;
};

inline constexpr std::uint32_t kFeaturePackVersion = 1;

/// Throws DimMismatch / NonFiniteValue / FormatError when the invariants
/// (matrix size, finiteness, unique ids, dim >= 1) do not hold.
void validate_pack(const FeaturePack& pack);

/// Layout: "CMRP" | u32 version | u32 dim | u64 count | f32[count*dim] |
/// JSON trailer {region_ids, source_tag} | u64 trailer length. All integers
/// and floats little-endian.
std::vector<std::uint8_t> serialize_pack(const FeaturePack& pack);
FeaturePack deserialize_pack(std::span<const std::uint8_t> bytes);

void write_pack(const std::filesystem::path& path, const FeaturePack& pack);
FeaturePack read_pack(const std::filesystem::path& path);

// --- baseline extractor ---------------------------------------------------

inline constexpr std::uint32_t kBaselineCropSize = 224;
inline constexpr std::uint32_t kBaselineDim = 152;
inline constexpr std::uint32_t kColorBlockDim = 48;     // 3 channels x 16 bins
inline constexpr std::uint32_t kGradientBlockDim = 32;  // 2x2 cells x 8 orientations
inline constexpr std::uint32_t kGridBlockDim = 72;      // 6x6 cells x (luma, chroma)
inline constexpr const char* kBaselineSourceTag = "baseline-v1";

/// Deterministic hand-crafted descriptor of a 224x224 crop:
///   [0,48)    per-channel 16-bin color histograms, L1-normalized per channel
///   [48,80)   8-bin gradient-orientation histograms (magnitude weighted,
///             central differences on luma) over a 2x2 grid, L1 per cell
///   [80,152)  6x6 grid of mean luma and mean chroma, both in [0,1]
/// All-zero blocks stay zero.
std::vector<float> baseline_features(const RgbImage& crop);

/// Baseline pack over region crops (rows in crop order).
FeaturePack baseline_pack(const std::vector<RegionCrop>& crops);

/// Same descriptor computed on a raster of any size >= 3x3. Used by the toy
/// trainer on small patches; baseline_features() is this plus a shape check.
std::vector<float> baseline_features_any(const RgbImage& raster);

}  // namespace comrp
