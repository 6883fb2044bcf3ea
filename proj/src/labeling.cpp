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

#include "comrp/labeling.hpp"

#include <algorithm>
#include <fstream>
#include <unordered_map>

#include "comrp/error.hpp"
#include "comrp/parallel.hpp"
#include "comrp/png_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace comrp {

void validate_merge(const MergeMap& merge, const ClusterModel& model) {
  if (merge.classes.size() > kIgnoreLabel) {
    throw InvalidMergeMap("at most " + std::to_string(kIgnoreLabel) + " classes are supported");
  }
  std::vector<std::uint32_t> missing;
  for (std::uint32_t c = 0; c < model.k; ++c) {
    if (!merge.mapping.contains(c)) missing.push_back(c);
  }
  if (!missing.empty()) throw UnmappedCluster(std::move(missing));
  for (const auto& [c, cls] : merge.mapping) {
    if (c >= model.k) throw InvalidMergeMap("cluster " + std::to_string(c) + " does not exist in the model");
    if (cls && *cls >= merge.classes.size()) {
      throw InvalidMergeMap("cluster " + std::to_string(c) + " maps to class index " + std::to_string(*cls) +
                            " but only " + std::to_string(merge.classes.size()) + " classes exist");
    }
  }
}

std::map<std::string, ClassAssignment> apply_merge(const ClusterModel& model, const MergeMap& merge) {
  validate_merge(merge, model);
  std::map<std::string, ClassAssignment> out;
  for (const auto& [region, c] : model.assignments) out.emplace(region, merge.mapping.at(c));
  return out;
}

LabelMap rasterize(const ImageRecord& image, const std::vector<LabeledMask>& masks) {
  std::vector<LabeledMask> order = masks;
  for (const auto& lm : order) {
    if (lm.mask->image_id != image.image_id) {
      throw ForeignMask("mask " + lm.mask->mask_id + " belongs to image " + lm.mask->image_id + ", not " +
                        image.image_id);
    }
  }
  std::sort(order.begin(), order.end(), [](const LabeledMask& a, const LabeledMask& b) {
    if (a.mask->area != b.mask->area) return a.mask->area > b.mask->area;
    return a.mask->mask_id > b.mask->mask_id;
  });
  LabelMap out{image.image_id, GrayImage(image.width, image.height, kIgnoreLabel)};
  for (const auto& lm : order) {
    const Bitmask b = rle_decode(lm.mask->rle, image.width, image.height);
    for (std::size_t p = 0; p < b.pixels.size(); ++p) {
      if (b.pixels[p]) out.labels.pixels[p] = lm.class_index;
    }
  }
  return out;
}

LabelMap rasterize_image(const ImageRecord& image, const std::vector<MaskRecord>& masks,
                         const std::map<std::string, ClassAssignment>& region_classes) {
  std::vector<LabeledMask> labeled;
  for (const auto& m : masks) {
    const auto it = region_classes.find(m.mask_id);
    if (it == region_classes.end() || !it->second) continue;
    labeled.push_back({&m, *it->second});
  }
  return rasterize(image, labeled);
}

void rasterize_dataset(const std::vector<ImageRecord>& images, const std::vector<MaskRecord>& masks,
                       const std::map<std::string, ClassAssignment>& region_classes, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  std::unordered_map<std::string, std::vector<MaskRecord>> by_image;
  for (const auto& m : masks) by_image[m.image_id].push_back(m);
  for (const auto& [id, ms] : by_image) find_image(images, id);  // UnknownImage on dangling ids
  parallel_for(images.size(), [&](std::size_t i) {
    const auto& im = images[i];
    static const std::vector<MaskRecord> none;
    const auto it = by_image.find(im.image_id);
    const LabelMap lm = rasterize_image(im, it == by_image.end() ? none : it->second, region_classes);
    write_label_png(lm, label_path(out_dir, im.image_id));
  });
}

fs::path label_path(const fs::path& dir, const std::string& image_id) { return dir / (image_id + ".png"); }

void write_label_png(const LabelMap& label, const fs::path& path) { write_png_gray(path, label.labels); }

LabelMap read_label_png(const fs::path& path, std::string image_id) {
  if (image_id.empty()) image_id = path.stem().string();
  return {std::move(image_id), read_png_gray(path)};
}

json to_json(const MergeMap& merge) {
  json mapping = json::object();
  for (const auto& [c, cls] : merge.mapping) {
    mapping[std::to_string(c)] = cls ? json(*cls) : json("DISCARD");
  }
  return {{"classes", merge.classes},
          {"mapping", mapping},
          {"created_by", merge.created_by},
          {"created_at", merge.created_at}};
}

MergeMap merge_map_from_json(const json& j) {
  MergeMap m;
  try {
    m.classes = j.at("classes").get<std::vector<std::string>>();
    m.created_by = j.value("created_by", std::string{});
    m.created_at = j.value("created_at", std::string{});
    for (const auto& [key, v] : j.at("mapping").items()) {
      std::size_t used = 0;
      const unsigned long id = std::stoul(key, &used);
      if (used != key.size()) throw InvalidMergeMap("cluster id '" + key + "' is not an integer");
      ClassAssignment cls;
      if (v.is_string()) {
        if (v.get<std::string>() != "DISCARD") {
          throw InvalidMergeMap("cluster " + key + ": expected a class index or \"DISCARD\"");
        }
      } else {
        const auto idx = v.get<std::int64_t>();
        if (idx < 0 || idx >= static_cast<std::int64_t>(m.classes.size())) {
          throw InvalidMergeMap("cluster " + key + " maps to class index " + std::to_string(idx) + " out of range");
        }
        cls = static_cast<std::uint8_t>(idx);
      }
      m.mapping[static_cast<std::uint32_t>(id)] = cls;
    }
  } catch (const json::exception& e) {
    throw InvalidMergeMap(std::string("bad merge map: ") + e.what());
  } catch (const std::logic_error&) {
    throw InvalidMergeMap("merge map cluster ids must be integers");
  }
  return m;
}

MergeMap read_merge_map(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return merge_map_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_merge_map_atomic(const fs::path& path, const MergeMap& merge) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << to_json(merge).dump(2) << '\n';
    out.flush();
    if (!out) throw IoError("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

}  // namespace comrp
