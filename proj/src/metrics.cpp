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

#include "comrp/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "comrp/error.hpp"
#include "comrp/parallel.hpp"
#include "comrp/png_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace comrp {

namespace {
constexpr std::uint8_t kIgnore = 255;
}

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.n_classes != n_classes) throw ShapeMismatch("confusion matrices have different class counts");
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
  ignored_pixels += other.ignored_pixels;
  return *this;
}

void accumulate(ConfusionMatrix& conf, const GrayImage& gt, const GrayImage& pred) {
  if (gt.width != pred.width || gt.height != pred.height) {
    throw ShapeMismatch("ground truth is " + std::to_string(gt.width) + "x" + std::to_string(gt.height) +
                        ", prediction is " + std::to_string(pred.width) + "x" + std::to_string(pred.height));
  }
  const std::uint32_t n = conf.n_classes;
  for (std::size_t p = 0; p < gt.pixels.size(); ++p) {
    const std::uint8_t g = gt.pixels[p];
    const std::uint8_t q = pred.pixels[p];
    if ((g != kIgnore && g >= n) || (q != kIgnore && q >= n)) {
      throw LabelOutOfRange("label " + std::to_string(g != kIgnore && g >= n ? g : q) + " at pixel " +
                            std::to_string(p) + " is outside [0," + std::to_string(n) + ")");
    }
    if (g == kIgnore) {
      ++conf.ignored_pixels;
      continue;
    }
    ++conf.at(g, q == kIgnore ? n : q);
  }
}

ConfusionMatrix confusion(const GrayImage& gt, const GrayImage& pred, std::uint32_t n_classes) {
  ConfusionMatrix m(n_classes);
  accumulate(m, gt, pred);
  return m;
}

std::optional<double> iou(const ConfusionMatrix& conf, std::uint32_t c) {
  const std::uint32_t n = conf.n_classes;
  const std::uint64_t tp = conf.at(c, c);
  std::uint64_t fp = 0, fn = 0;
  for (std::uint32_t g = 0; g < n; ++g)
    if (g != c) fp += conf.at(g, c);
  for (std::uint32_t p = 0; p <= n; ++p)
    if (p != c) fn += conf.at(c, p);
  const std::uint64_t denom = tp + fp + fn;
  if (denom == 0) return std::nullopt;
  return 100.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

double pixel_accuracy(const ConfusionMatrix& conf) {
  const std::uint64_t total = conf.total();
  if (total == 0) throw EmptyMatrix("no valid pixels were accumulated");
  std::uint64_t trace = 0;
  for (std::uint32_t c = 0; c < conf.n_classes; ++c) trace += conf.at(c, c);
  return 100.0 * static_cast<double>(trace) / static_cast<double>(total);
}

std::vector<double> per_class_accuracy(const ConfusionMatrix& conf) {
  const std::uint64_t total = conf.total();
  if (total == 0) throw EmptyMatrix("no valid pixels were accumulated");
  std::vector<double> out;
  for (std::uint32_t c = 0; c < conf.n_classes; ++c) {
    std::uint64_t fp = 0, fn = 0;
    for (std::uint32_t g = 0; g < conf.n_classes; ++g)
      if (g != c) fp += conf.at(g, c);
    for (std::uint32_t p = 0; p <= conf.n_classes; ++p)
      if (p != c) fn += conf.at(c, p);
    // TP + TN = everything that is neither a false positive nor a false negative.
    out.push_back(100.0 * static_cast<double>(total - fp - fn) / static_cast<double>(total));
  }
  return out;
}

MetricsReport report(const ConfusionMatrix& conf, std::vector<std::string> class_names) {
  MetricsReport r;
  r.class_names = std::move(class_names);
  double sum = 0.0;
  std::size_t present = 0;
  for (std::uint32_t c = 0; c < conf.n_classes; ++c) {
    const auto v = iou(conf, c);
    r.per_class_iou.push_back(v.value_or(0.0));
    r.per_class_presence.push_back(v.has_value());
    if (v) {
      sum += *v;
      ++present;
    }
  }
  r.miou = present ? sum / static_cast<double>(present) : 0.0;
  r.pixel_accuracy = pixel_accuracy(conf);
  r.per_class_accuracy = per_class_accuracy(conf);
  return r;
}

ConfusionMatrix evaluate_dirs(const fs::path& gt_dir, const fs::path& pred_dir, std::uint32_t n_classes) {
  if (!fs::is_directory(gt_dir)) throw IoError("not a directory: " + gt_dir.string());
  std::vector<fs::path> names;
  for (const auto& e : fs::directory_iterator(gt_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") names.push_back(e.path().filename());
  }
  std::sort(names.begin(), names.end());
  std::vector<ConfusionMatrix> parts(names.size(), ConfusionMatrix(n_classes));
  parallel_for(names.size(), [&](std::size_t i) {
    const fs::path pred = pred_dir / names[i];
    if (!fs::exists(pred)) throw IoError("missing prediction " + pred.string());
    accumulate(parts[i], read_png_gray(gt_dir / names[i]), read_png_gray(pred));
  });
  ConfusionMatrix total(n_classes);
  for (const auto& p : parts) total += p;
  return total;
}

std::vector<std::string> read_class_names(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    const json j = json::parse(in);
    if (j.is_array()) return j.get<std::vector<std::string>>();
    return j.at("classes").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

json to_json(const MetricsReport& r) {
  return {{"classes", r.class_names},
          {"per_class_iou", r.per_class_iou},
          {"per_class_presence", r.per_class_presence},
          {"per_class_accuracy", r.per_class_accuracy},
          {"miou", r.miou},
          {"pixel_accuracy", r.pixel_accuracy}};
}

json to_json(const ConfusionMatrix& m) {
  json rows = json::array();
  for (std::uint32_t g = 0; g < m.n_classes; ++g) {
    rows.push_back(std::vector<std::uint64_t>(m.counts.begin() + std::ptrdiff_t(g) * (m.n_classes + 1),
                                              m.counts.begin() + std::ptrdiff_t(g + 1) * (m.n_classes + 1)));
  }
  return {{"n_classes", m.n_classes}, {"counts", rows}, {"ignored_pixels", m.ignored_pixels}};
}

}  // namespace comrp
