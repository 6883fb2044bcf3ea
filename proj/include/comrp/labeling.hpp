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
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "comrp/clustering.hpp"
#include "comrp/mask_ingest.hpp"
#include "comrp/raster.hpp"

namespace comrp {

inline constexpr std::uint8_t kIgnoreLabel = 255;

/// Class index for a cluster, or nullopt for DISCARD.
using ClassAssignment = std::optional<std::uint8_t>;

/// Human decisions mapping raw cluster ids to semantic classes.
struct MergeMap {
  std::vector<std::string> classes;
  std::map<std::uint32_t, ClassAssignment> mapping;
  std::string created_by;
  std::string created_at;
  bool operator==(const MergeMap&) const = default;
};

/// Per-pixel class raster; kIgnoreLabel marks unlabeled pixels.
struct LabelMap {
  std::string image_id;
  GrayImage labels;
  bool operator==(const LabelMap&) const = default;
};

struct LabeledMask {
  const MaskRecord* mask = nullptr;
  std::uint8_t class_index = 0;
};

/// Throws UnmappedCluster (cluster ids of `model` missing from the map) or
/// InvalidMergeMap (unknown cluster ids, class index out of range, too many
/// classes).
void validate_merge(const MergeMap& merge, const ClusterModel& model);

/// region_id -> class, DISCARD regions map to nullopt.
std::map<std::string, ClassAssignment> apply_merge(const ClusterModel& model, const MergeMap& merge);

/// Paints masks in descending area order so smaller masks end on top; among
/// equal areas the lexicographically smaller mask_id is painted last.
/// Unpainted pixels keep kIgnoreLabel. Throws ForeignMask.
LabelMap rasterize(const ImageRecord& image, const std::vector<LabeledMask>& masks);

/// Convenience: rasterize one image's proposals under a region->class map.
/// Regions absent from the map or discarded are not painted.
LabelMap rasterize_image(const ImageRecord& image, const std::vector<MaskRecord>& masks,
                         const std::map<std::string, ClassAssignment>& region_classes);

/// Rasterizes every image and writes `{image_id}.png` into `out_dir`.
void rasterize_dataset(const std::vector<ImageRecord>& images, const std::vector<MaskRecord>& masks,
                       const std::map<std::string, ClassAssignment>& region_classes,
                       const std::filesystem::path& out_dir);

void write_label_png(const LabelMap& label, const std::filesystem::path& path);
LabelMap read_label_png(const std::filesystem::path& path, std::string image_id = {});
std::filesystem::path label_path(const std::filesystem::path& dir, const std::string& image_id);

nlohmann::json to_json(const MergeMap& merge);
MergeMap merge_map_from_json(const nlohmann::json& j);
MergeMap read_merge_map(const std::filesystem::path& path);
/// Writes through a temporary file and rename, so readers never see a
/// partial document.
void write_merge_map_atomic(const std::filesystem::path& path, const MergeMap& merge);

}  // namespace comrp
