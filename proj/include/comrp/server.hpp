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
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "comrp/clustering.hpp"
#include "comrp/labeling.hpp"
#include "comrp/mask_ingest.hpp"
#include "comrp/metrics.hpp"
#include "comrp/raster.hpp"

namespace comrp {

/// Everything the review service serves, loaded once at start-up.
struct ServerInputs {
  ClusterModel model;
  std::vector<ImageRecord> images;
  std::vector<MaskRecord> masks;
  MergeMap initial_merge;  // all clusters DISCARD when no merge file exists yet
  std::filesystem::path merge_path;
  std::optional<std::filesystem::path> gt_dir;
  std::optional<std::filesystem::path> ui_dir;
};

ServerInputs load_server_inputs(const std::filesystem::path& model_path, const std::filesystem::path& masks_dir,
                                const std::filesystem::path& manifest_path, const std::filesystem::path& merge_path,
                                std::optional<std::filesystem::path> gt_dir = std::nullopt,
                                std::optional<std::filesystem::path> ui_dir = std::nullopt);

/// Fixed tint for class `c` in previews.
Rgb class_color(std::uint8_t c);

/// 50/50 blend of the image with each labeled pixel's class tint; ignore
/// pixels are copied unchanged.
RgbImage blend_preview(const RgbImage& image, const GrayImage& labels);

/// HTTP review service.
///
///   GET /api/clusters                  cluster cards (size, exemplars, mapping)
///   GET /api/mergemap                  {"revision", "merge_map"}
///   PUT /api/mergemap                  X-Expected-Revision header; 409 stale, 422 invalid
///   GET /api/regions/{mask_id}/crop.png
///   GET /api/images/{image_id}/preview
///   GET /api/metrics                   404 without dev ground truth
///
/// Every JSON or image response carries the merge-map revision it was built
/// from in the X-Revision header. Readers take an immutable snapshot, so a
/// concurrent write never produces a mixed response.
class ReviewServer {
 public:
  explicit ReviewServer(ServerInputs inputs);
  ~ReviewServer();
  ReviewServer(const ReviewServer&) = delete;
  ReviewServer& operator=(const ReviewServer&) = delete;

  /// Binds to `port` (0 picks a free one) and returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop(); call after bind().
  void listen();
  void stop();

  std::uint64_t revision() const;
  MergeMap merge_map() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace comrp
