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

#include "comrp/toy_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <string>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "comrp/error.hpp"
#include "comrp/feature_io.hpp"
#include "comrp/parallel.hpp"
#include "comrp/png_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace comrp {

namespace {

constexpr std::uint8_t kIgnore = 255;

RgbImage extract_patch(const RgbImage& image, std::uint32_t cx, std::uint32_t cy, std::uint32_t patch) {
  RgbImage out(patch, patch);
  const int half = static_cast<int>(patch / 2);
  for (std::uint32_t py = 0; py < patch; ++py) {
    const int sy = std::clamp(static_cast<int>(cy) + static_cast<int>(py) - half, 0, static_cast<int>(image.height) - 1);
    for (std::uint32_t px = 0; px < patch; ++px) {
      const int sx = std::clamp(static_cast<int>(cx) + static_cast<int>(px) - half, 0, static_cast<int>(image.width) - 1);
      const auto* s = image.at(sx, sy);
      out.set(px, py, {s[0], s[1], s[2]});
    }
  }
  return out;
}

std::vector<double> describe(const RgbImage& patch, double center_weight) {
  const auto base = baseline_features_any(patch);
  std::vector<double> f(base.begin(), base.end());
  const auto* c = patch.at(patch.width / 2, patch.height / 2);
  for (int k = 0; k < 3; ++k) f.push_back(center_weight * c[k] / 255.0);
  return f;
}

double sqdist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

std::uint8_t classify(const ToyModel& model, const std::vector<double>& f) {
  std::uint8_t best = kIgnore;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::uint32_t c = 0; c < model.n_classes; ++c) {
    if (!model.prototypes[c]) continue;
    const double d = std::sqrt(sqdist(f, *model.prototypes[c]));
    if (d > model.radii[c]) continue;
    if (d < best_d) {
      best_d = d;
      best = static_cast<std::uint8_t>(c);
    }
  }
  return best;
}

}  // namespace

std::vector<double> patch_feature(const RgbImage& image, std::uint32_t x, std::uint32_t y, std::uint32_t patch,
                                  double center_weight) {
  return describe(extract_patch(image, x, y, patch), center_weight);
}

ToyModel toy_train(const TrainManifest& manifest, const ToyTrainOptions& options) {
  if (options.patch < 3 || options.patch % 2 == 0) throw ConfigError("toy patch size must be odd and >= 3");
  const auto n = static_cast<std::uint32_t>(manifest.classes.size());
  if (n == 0 || n > kIgnore) throw ConfigError("toy trainer needs between 1 and 255 classes");

  struct Samples {
    std::vector<std::vector<std::vector<double>>> per_class;
  };
  const auto& items = manifest.train;
  std::vector<Samples> per_image(items.size());
  parallel_for(items.size(), [&](std::size_t i) {
    const RgbImage img = read_png_rgb(items[i].image);
    const GrayImage lab = read_png_gray(items[i].label);
    if (img.width != lab.width || img.height != lab.height) {
      throw ShapeMismatch("label " + items[i].label.string() + " does not match its image");
    }
    std::vector<std::vector<std::uint32_t>> positions(n);
    for (std::uint32_t p = 0; p < lab.pixels.size(); ++p) {
      const std::uint8_t v = lab.pixels[p];
      if (v == kIgnore) continue;
      if (v >= n) throw LabelOutOfRange("training label " + std::to_string(v) + " >= " + std::to_string(n));
      positions[v].push_back(p);
    }
    std::mt19937_64 rng(options.seed * 0x100000001B3ull + i);
    auto& out = per_image[i].per_class;
    out.resize(n);
    for (std::uint32_t c = 0; c < n; ++c) {
      std::vector<std::uint32_t> picked;
      std::sample(positions[c].begin(), positions[c].end(), std::back_inserter(picked),
                  options.samples_per_class_per_image, rng);
      for (const auto p : picked) {
        out[c].push_back(patch_feature(img, p % img.width, p / img.width, options.patch, options.center_weight));
      }
    }
  });

  ToyModel model;
  model.n_classes = n;
  model.patch = options.patch;
  model.center_weight = options.center_weight;
  model.prototypes.assign(n, std::nullopt);
  model.radii.assign(n, 0.0);
  for (std::uint32_t c = 0; c < n; ++c) {
    std::vector<double> sum;
    std::size_t count = 0;
    for (const auto& im : per_image) {
      for (const auto& f : im.per_class[c]) {
        if (sum.empty()) sum.assign(f.size(), 0.0);
        for (std::size_t d = 0; d < f.size(); ++d) sum[d] += f[d];
        ++count;
      }
    }
    if (count == 0) continue;
    for (double& v : sum) v /= static_cast<double>(count);
    double radius = 0.0;
    for (const auto& im : per_image)
      for (const auto& f : im.per_class[c]) radius = std::max(radius, std::sqrt(sqdist(f, sum)));
    model.prototypes[c] = std::move(sum);
    model.radii[c] = options.radius_margin * radius + 1e-9;
  }
  return model;
}

GrayImage toy_predict(const ToyModel& model, const RgbImage& image) {
  GrayImage out(image.width, image.height, kIgnore);
  const std::size_t blocks = std::min<std::size_t>(thread_count(), image.height);
  parallel_for(blocks, [&](std::size_t b) {
    std::unordered_map<std::string, std::uint8_t> cache;
    const std::uint32_t y0 = static_cast<std::uint32_t>(b * image.height / blocks);
    const std::uint32_t y1 = static_cast<std::uint32_t>((b + 1) * image.height / blocks);
    for (std::uint32_t y = y0; y < y1; ++y) {
      for (std::uint32_t x = 0; x < image.width; ++x) {
        const RgbImage patch = extract_patch(image, x, y, model.patch);
        std::string key(patch.pixels.begin(), patch.pixels.end());
        const auto it = cache.find(key);
        if (it != cache.end()) {
          out.at(x, y) = it->second;
          continue;
        }
        const std::uint8_t label = classify(model, describe(patch, model.center_weight));
        cache.emplace(std::move(key), label);
        out.at(x, y) = label;
      }
    }
  });
  return out;
}

void write_toy_model(const fs::path& dir, const ToyModel& model) {
  fs::create_directories(dir);
  json protos = json::array();
  for (const auto& p : model.prototypes) protos.push_back(p ? json(*p) : json(nullptr));
  const json j = {{"kind", "toy-prototype-v1"},
                  {"n_classes", model.n_classes},
                  {"patch", model.patch},
                  {"center_weight", model.center_weight},
                  {"prototypes", protos},
                  {"radii", model.radii}};
  std::ofstream out(dir / "model.json", std::ios::trunc);
  if (!out) throw IoError("cannot write " + (dir / "model.json").string());
  out << j.dump() << '\n';
}

ToyModel read_toy_model(const fs::path& dir) {
  const fs::path path = fs::is_directory(dir) ? dir / "model.json" : dir;
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  ToyModel m;
  try {
    const json j = json::parse(in);
    if (j.at("kind") != "toy-prototype-v1") throw FormatError("not a toy model");
    m.n_classes = j.at("n_classes").get<std::uint32_t>();
    m.patch = j.at("patch").get<std::uint32_t>();
    m.center_weight = j.at("center_weight").get<double>();
    for (const auto& p : j.at("prototypes")) {
      m.prototypes.push_back(p.is_null() ? std::nullopt : std::optional(p.get<std::vector<double>>()));
    }
    m.radii = j.at("radii").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (m.prototypes.size() != m.n_classes || m.radii.size() != m.n_classes) {
    throw FormatError(path.string() + ": prototype/radius count does not match n_classes");
  }
  return m;
}

}  // namespace comrp
