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

#include "comrp/mask_ingest.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>
#include <unordered_map>

#include "comrp/error.hpp"
#include "comrp/parallel.hpp"
#include "comrp/png_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace comrp {

Bitmask rle_decode(const Rle& rle, std::uint32_t width, std::uint32_t height) {
  const std::uint64_t total = std::uint64_t(width) * height;
  const std::uint64_t sum = std::accumulate(rle.begin(), rle.end(), std::uint64_t{0});
  if (sum != total) {
    throw LengthMismatch("rle covers " + std::to_string(sum) + " pixels, raster has " +
                         std::to_string(total));
  }
  Bitmask out(width, height, 0);
  std::size_t pos = 0;
  for (std::size_t i = 0; i < rle.size(); ++i) {
    if (i % 2 == 1) std::fill_n(out.pixels.begin() + static_cast<std::ptrdiff_t>(pos), rle[i], 1);
    pos += rle[i];
  }
  return out;
}

Rle rle_encode(const Bitmask& mask) {
  Rle out;
  std::uint8_t current = 0;
  std::uint32_t run = 0;
  for (const std::uint8_t px : mask.pixels) {
    const std::uint8_t v = px ? 1 : 0;
    if (v != current) {
      out.push_back(run);
      run = 0;
      current = v;
    }
    ++run;
  }
  if (run > 0 || out.empty()) out.push_back(run);
  return out;
}

std::uint32_t foreground_area(const Bitmask& mask) {
  return static_cast<std::uint32_t>(
      std::count_if(mask.pixels.begin(), mask.pixels.end(), [](std::uint8_t v) { return v != 0; }));
}

BBox foreground_bbox(const Bitmask& mask) {
  BBox box{mask.width, mask.height, 0, 0};
  bool any = false;
  for (std::uint32_t y = 0; y < mask.height; ++y) {
    for (std::uint32_t x = 0; x < mask.width; ++x) {
      if (!mask.at(x, y)) continue;
      any = true;
      box.x_min = std::min(box.x_min, x);
      box.y_min = std::min(box.y_min, y);
      box.x_max = std::max(box.x_max, x + 1);
      box.y_max = std::max(box.y_max, y + 1);
    }
  }
  return any ? box : BBox{};
}

MaskRecord make_mask_record(std::string mask_id, std::string image_id, const Bitmask& mask) {
  MaskRecord rec;
  rec.mask_id = std::move(mask_id);
  rec.image_id = std::move(image_id);
  rec.rle = rle_encode(mask);
  rec.area = foreground_area(mask);
  rec.bbox = foreground_bbox(mask);
  return rec;
}

void validate_mask(const MaskRecord& mask, const ImageRecord& image) {
  if (mask.image_id != image.image_id) {
    throw InvalidMask("mask " + mask.mask_id + " references image " + mask.image_id + ", not " +
                      image.image_id);
  }
  const Bitmask raster = rle_decode(mask.rle, image.width, image.height);
  const std::uint32_t area = foreground_area(raster);
  if (area != mask.area) {
    throw InvalidMask("mask " + mask.mask_id + ": stored area " + std::to_string(mask.area) +
                      " != decoded area " + std::to_string(area));
  }
  if (foreground_bbox(raster) != mask.bbox) {
    throw InvalidMask("mask " + mask.mask_id + ": stored bbox is not the tight foreground bound");
  }
  for (std::size_t i = 1; i < mask.rle.size(); ++i) {
    if (mask.rle[i] == 0) throw InvalidMask("mask " + mask.mask_id + ": zero-length run after the first");
  }
}

AreaFilterResult filter_by_area(const std::vector<MaskRecord>& masks, std::uint32_t theta) {
  AreaFilterResult out;
  for (const auto& m : masks) (m.area > theta ? out.kept : out.dropped).push_back(m);
  return out;
}

const ImageRecord& find_image(const std::vector<ImageRecord>& images, const std::string& image_id) {
  for (const auto& im : images) {
    if (im.image_id == image_id) return im;
  }
  throw UnknownImage("unknown image_id '" + image_id + "'");
}

CoverageReport compute_coverage(const std::vector<ImageRecord>& images,
                                const std::vector<MaskRecord>& masks, std::uint32_t theta) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < images.size(); ++i) index.emplace(images[i].image_id, i);

  std::vector<std::vector<const MaskRecord*>> by_image(images.size());
  CoverageReport report;
  report.threshold = theta;
  for (const auto& m : masks) {
    const auto it = index.find(m.image_id);
    if (it == index.end()) throw UnknownImage("mask " + m.mask_id + " references unknown image '" + m.image_id + "'");
    by_image[it->second].push_back(&m);
    ++report.mask_count_total;
    // Census uses the same strict rule as filter_by_area.
    if (m.area > theta) {
      ++report.mask_count_at_or_above_threshold;
    } else {
      ++report.mask_count_below_threshold;
    }
  }

  std::vector<double> coverage(images.size(), 0.0);
  parallel_for(images.size(), [&](std::size_t i) {
    const auto& im = images[i];
    if (by_image[i].empty()) return;
    std::vector<std::uint8_t> uni(std::size_t(im.width) * im.height, 0);
    for (const MaskRecord* m : by_image[i]) {
      const Bitmask b = rle_decode(m->rle, im.width, im.height);
      for (std::size_t p = 0; p < uni.size(); ++p) uni[p] |= b.pixels[p];
    }
    const auto covered = std::count(uni.begin(), uni.end(), std::uint8_t{1});
    coverage[i] = 100.0 * static_cast<double>(covered) / static_cast<double>(uni.size());
  });

  double sum = 0.0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    report.per_image[images[i].image_id] = coverage[i];
    sum += coverage[i];
  }
  report.dataset_mean = images.empty() ? 0.0 : sum / static_cast<double>(images.size());
  return report;
}

RgbImage crop_region(const RgbImage& image, const MaskRecord& mask, std::uint32_t out_size) {
  if (mask.area == 0 || mask.bbox.empty()) throw EmptyMask("mask " + mask.mask_id + " has no foreground");
  const auto& b = mask.bbox;
  const RgbImage box = sub_image(image, b.x_min, b.y_min, b.x_max, b.y_max);
  return resize_bilinear(box, out_size, out_size);
}

namespace {

std::vector<RegionCrop> crop_with(const std::vector<ImageRecord>& images, const std::vector<MaskRecord>& masks,
                                  std::uint32_t out_size,
                                  const std::function<RgbImage(std::size_t)>& load) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < images.size(); ++i) index.emplace(images[i].image_id, i);
  std::vector<std::vector<std::size_t>> by_image(images.size());
  for (std::size_t m = 0; m < masks.size(); ++m) {
    const auto it = index.find(masks[m].image_id);
    if (it == index.end()) throw UnknownImage("mask " + masks[m].mask_id + " references unknown image '" + masks[m].image_id + "'");
    by_image[it->second].push_back(m);
  }
  std::vector<RegionCrop> out(masks.size());
  parallel_for(images.size(), [&](std::size_t i) {
    if (by_image[i].empty()) return;
    const RgbImage img = load(i);
    if (img.width != images[i].width || img.height != images[i].height) {
      throw BadShape("image " + images[i].image_id + " does not match its manifest size");
    }
    for (const std::size_t m : by_image[i]) out[m] = {masks[m].mask_id, crop_region(img, masks[m], out_size)};
  });
  return out;
}

}  // namespace

std::vector<RegionCrop> crop_regions(const std::vector<ImageRecord>& images, const std::vector<MaskRecord>& masks,
                                     std::uint32_t out_size) {
  return crop_with(images, masks, out_size, [&](std::size_t i) { return read_png_rgb(images[i].path); });
}

std::vector<RegionCrop> crop_regions(const std::vector<ImageRecord>& images, const std::vector<RgbImage>& pixels,
                                     const std::vector<MaskRecord>& masks, std::uint32_t out_size) {
  if (pixels.size() != images.size()) throw BadShape("pixels must be parallel to images");
  return crop_with(images, masks, out_size, [&](std::size_t i) { return pixels[i]; });
}

void write_crop_dir(const fs::path& dir, const std::vector<RegionCrop>& crops) {
  fs::create_directories(dir);
  parallel_for(crops.size(), [&](std::size_t i) { write_png_rgb(dir / (crops[i].region_id + ".png"), crops[i].pixels); });
}

std::vector<RegionCrop> read_crop_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<RegionCrop> out(files.size());
  parallel_for(files.size(), [&](std::size_t i) { out[i] = {files[i].stem().string(), read_png_rgb(files[i])}; });
  return out;
}

// --- JSON ------------------------------------------------------------------

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace

std::vector<ImageRecord> read_manifest(const fs::path& path) {
  const json j = read_json(path);
  if (!j.is_array()) throw FormatError(path.string() + ": manifest must be a JSON array");
  const fs::path base = path.parent_path();
  std::vector<ImageRecord> out;
  std::set<std::string> seen;
  try {
    for (const auto& e : j) {
      ImageRecord rec;
      rec.image_id = e.at("image_id").get<std::string>();
      rec.width = e.at("width").get<std::uint32_t>();
      rec.height = e.at("height").get<std::uint32_t>();
      rec.path = e.at("path").get<std::string>();
      if (rec.path.is_relative()) rec.path = base / rec.path;
      if (rec.width == 0 || rec.height == 0) throw FormatError("image " + rec.image_id + " has zero size");
      if (!seen.insert(rec.image_id).second) throw FormatError("duplicate image_id " + rec.image_id);
      out.push_back(std::move(rec));
    }
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return out;
}

void write_manifest(const fs::path& path, const std::vector<ImageRecord>& images) {
  json j = json::array();
  for (const auto& im : images) {
    j.push_back({{"image_id", im.image_id},
                 {"width", im.width},
                 {"height", im.height},
                 {"path", im.path.generic_string()}});
  }
  write_json(path, j);
}

json to_json(const MaskRecord& m) {
  return {{"mask_id", m.mask_id},
          {"rle", m.rle},
          {"area", m.area},
          {"bbox", {m.bbox.x_min, m.bbox.y_min, m.bbox.x_max, m.bbox.y_max}}};
}

MaskRecord mask_from_json(const json& j, const std::string& image_id) {
  MaskRecord m;
  m.mask_id = j.at("mask_id").get<std::string>();
  m.image_id = image_id;
  m.rle = j.at("rle").get<Rle>();
  m.area = j.at("area").get<std::uint32_t>();
  const auto& b = j.at("bbox");
  if (!b.is_array() || b.size() != 4) throw FormatError("bbox must have 4 entries");
  m.bbox = {b[0].get<std::uint32_t>(), b[1].get<std::uint32_t>(), b[2].get<std::uint32_t>(),
            b[3].get<std::uint32_t>()};
  return m;
}

MaskFile read_mask_file(const fs::path& path) {
  const json j = read_json(path);
  MaskFile f;
  try {
    f.image_id = j.at("image_id").get<std::string>();
    for (const auto& m : j.at("masks")) f.masks.push_back(mask_from_json(m, f.image_id));
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return f;
}

void write_mask_file(const fs::path& path, const MaskFile& file) {
  json masks = json::array();
  for (const auto& m : file.masks) masks.push_back(to_json(m));
  write_json(path, {{"image_id", file.image_id}, {"masks", masks}});
}

std::vector<MaskFile> read_mask_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<MaskFile> out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back(read_mask_file(f));
  return out;
}

std::vector<MaskRecord> flatten(const std::vector<MaskFile>& files) {
  std::vector<MaskRecord> out;
  for (const auto& f : files) out.insert(out.end(), f.masks.begin(), f.masks.end());
  return out;
}

json to_json(const CoverageReport& r) {
  return {{"per_image", r.per_image},
          {"dataset_mean", r.dataset_mean},
          {"mask_count_total", r.mask_count_total},
          {"mask_count_below_threshold", r.mask_count_below_threshold},
          {"mask_count_at_or_above_threshold", r.mask_count_at_or_above_threshold},
          {"threshold", r.threshold}};
}

}  // namespace comrp
