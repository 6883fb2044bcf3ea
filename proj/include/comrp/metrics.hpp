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
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "comrp/raster.hpp"

namespace comrp {

/// counts(gt, pred) over n_classes rows and n_classes + 1 columns; the extra
/// column tallies valid ground-truth pixels left unlabeled (255) by the
/// prediction. Ground-truth ignore pixels are only counted in
/// ignored_pixels.
struct ConfusionMatrix {
  std::uint32_t n_classes = 0;
  std::vector<std::uint64_t> counts;
  std::uint64_t ignored_pixels = 0;

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::uint32_t n) : n_classes(n), counts(std::size_t(n) * (n + 1), 0) {}

  std::uint32_t unlabeled_column() const { return n_classes; }
  std::uint64_t& at(std::uint32_t gt, std::uint32_t pred) { return counts[std::size_t(gt) * (n_classes + 1) + pred]; }
  std::uint64_t at(std::uint32_t gt, std::uint32_t pred) const {
    return counts[std::size_t(gt) * (n_classes + 1) + pred];
  }
  std::uint64_t total() const;

  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
  bool operator==(const ConfusionMatrix&) const = default;
};

struct MetricsReport {
  std::vector<double> per_class_iou;  // percent; 0 where not present
  std::vector<bool> per_class_presence;
  std::vector<double> per_class_accuracy;  // binary (TP+TN)/all per class, percent
  double miou = 0.0;
  double pixel_accuracy = 0.0;
  std::vector<std::string> class_names;
};

/// Adds one image pair. Throws ShapeMismatch and LabelOutOfRange.
void accumulate(ConfusionMatrix& conf, const GrayImage& gt, const GrayImage& pred);
ConfusionMatrix confusion(const GrayImage& gt, const GrayImage& pred, std::uint32_t n_classes);

/// 100 * TP / (TP + FP + FN); nullopt when the class is absent from both
/// ground truth and prediction. Unlabeled predictions count as FN.
std::optional<double> iou(const ConfusionMatrix& conf, std::uint32_t c);

/// 100 * trace / total over valid ground-truth pixels. Throws EmptyMatrix.
double pixel_accuracy(const ConfusionMatrix& conf);

/// Per-class binary accuracy 100 * (TP + TN) / total.
std::vector<double> per_class_accuracy(const ConfusionMatrix& conf);

MetricsReport report(const ConfusionMatrix& conf, std::vector<std::string> class_names = {});

/// Accumulates every `*.png` in gt_dir against the same-named file in
/// pred_dir. Per-image matrices are computed in parallel and summed in
/// filename order.
ConfusionMatrix evaluate_dirs(const std::filesystem::path& gt_dir, const std::filesystem::path& pred_dir,
                              std::uint32_t n_classes);

/// Class names from a JSON array, or from an object carrying "classes"
/// (a merge map works).
std::vector<std::string> read_class_names(const std::filesystem::path& path);

nlohmann::json to_json(const MetricsReport& r);
nlohmann::json to_json(const ConfusionMatrix& m);

}  // namespace comrp
