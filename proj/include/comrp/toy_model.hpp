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
#include <optional>
#include <vector>

#include "comrp/raster.hpp"
#include "comrp/selftrain.hpp"

namespace comrp {

/// Desk-scale stand-in for a segmentation network: one prototype per class
/// in patch-feature space, with a per-class acceptance radius.
struct ToyModel {
  std::uint32_t n_classes = 0;
  std::uint32_t patch = 9;
  double center_weight = 4.0;
  std::vector<std::optional<std::vector<double>>> prototypes;  // nullopt: class never seen
  std::vector<double> radii;
};

struct ToyTrainOptions {
  std::uint64_t seed = 0;
  std::uint32_t samples_per_class_per_image = 200;
  std::uint32_t patch = 9;
  double center_weight = 4.0;
  double radius_margin = 1.5;
};

/// Patch descriptor at (x, y): baseline features of the patch (edges
/// replicated) followed by the center pixel color scaled by center_weight.
std::vector<double> patch_feature(const RgbImage& image, std::uint32_t x, std::uint32_t y, std::uint32_t patch,
                                  double center_weight);

ToyModel toy_train(const TrainManifest& manifest, const ToyTrainOptions& options = {});
GrayImage toy_predict(const ToyModel& model, const RgbImage& image);

void write_toy_model(const std::filesystem::path& dir, const ToyModel& model);
ToyModel read_toy_model(const std::filesystem::path& dir);

}  // namespace comrp
