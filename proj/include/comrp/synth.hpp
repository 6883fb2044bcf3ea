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

#include "comrp/clustering.hpp"
#include "comrp/labeling.hpp"
#include "comrp/mask_ingest.hpp"
#include "comrp/raster.hpp"

namespace comrp {

enum class ShapeFamily { background_plane, stripe, blob, thin_bar, small_disc };

struct SynthClass {
  std::string name;
  Rgb color;
  ShapeFamily shape;
};

struct MaskNoise {
  double split_prob = 0.0;     // chance an object yields two masks instead of one
  std::uint32_t dilate_px = 0;  // each mask grows by a random 0..dilate_px pixels
};

struct SynthConfig {
  std::uint64_t seed = 7;
  std::uint32_t n_images = 40;
  std::uint32_t image_size = 256;
  std::vector<SynthClass> classes = default_classes();
  MaskNoise mask_noise;

  static std::vector<SynthClass> default_classes();
};

struct SynthDataset {
  std::vector<std::string> class_names;
  std::vector<ImageRecord> images;
  std::vector<RgbImage> pixels;
  std::vector<GrayImage> ground_truth;
  std::vector<MaskFile> masks;
  std::map<std::string, std::uint8_t> region_classes;  // mask_id -> true class
  std::uint64_t object_count = 0;
};

/// Deterministic in `cfg.seed`. Object layout and mask noise use separate
/// random streams, so changing mask_noise never moves objects.
SynthDataset generate(const SynthConfig& cfg);

/// Writes manifest.json, classes.json, region_classes.json, images/, gt/ and
/// masks/ under `dir`. Image paths in the manifest are relative.
void write_dataset(const SynthDataset& ds, const std::filesystem::path& dir);

std::string to_string(ShapeFamily s);

/// Scripted stand-in for the human merge step: every cluster goes to the
/// most frequent true class among its regions (lowest class index on ties).
MergeMap majority_merge_map(const ClusterModel& model, const std::map<std::string, std::uint8_t>& region_classes,
                            const std::vector<std::string>& class_names);

}  // namespace comrp
