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

#include "comrp/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "comrp/error.hpp"
#include "comrp/png_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace comrp {

std::vector<SynthClass> SynthConfig::default_classes() {
  return {
      {"road", {110, 110, 110}, ShapeFamily::background_plane},
      {"white_marking", {240, 240, 240}, ShapeFamily::stripe},
      {"yellow_marking", {230, 190, 30}, ShapeFamily::thin_bar},
      {"crack_sealing", {35, 35, 35}, ShapeFamily::blob},
      {"traffic_cone", {250, 100, 20}, ShapeFamily::small_disc},
  };
}

std::string to_string(ShapeFamily s) {
  switch (s) {
    case ShapeFamily::background_plane: return "background_plane";
    case ShapeFamily::stripe: return "stripe";
    case ShapeFamily::blob: return "blob";
    case ShapeFamily::thin_bar: return "thin_bar";
    case ShapeFamily::small_disc: return "small_disc";
  }
  return "?";
}

namespace {

struct Object {
  std::uint8_t class_index;
  Bitmask pixels;
};

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t image, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(image), static_cast<std::uint32_t>(stream)};
  std::uint32_t parts[2];
  seq.generate(parts, parts + 2);
  return (std::uint64_t(parts[0]) << 32) | parts[1];
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

bool overlaps(const BBox& a, const BBox& b, std::uint32_t margin) {
  return !(a.x_max + margin <= b.x_min || b.x_max + margin <= a.x_min || a.y_max + margin <= b.y_min ||
           b.y_max + margin <= a.y_min);
}

// Candidate shape of a family, or an empty mask when it does not fit.
Bitmask draw_shape(ShapeFamily family, std::uint32_t size, std::mt19937_64& rng) {
  Bitmask m(size, size, 0);
  const int s = static_cast<int>(size);
  switch (family) {
    case ShapeFamily::background_plane:
      break;
    case ShapeFamily::stripe: {
      const int width = uniform_int(rng, 10, 16);
      const int pos = uniform_int(rng, 0, s - width);
      const bool horizontal = uniform_int(rng, 0, 1) == 0;
      for (int a = 0; a < s; ++a)
        for (int b = pos; b < pos + width; ++b) {
          if (horizontal) {
            m.at(a, b) = 1;
          } else {
            m.at(b, a) = 1;
          }
        }
      break;
    }
    case ShapeFamily::thin_bar: {
      const int width = uniform_int(rng, 3, 4);
      const int length = uniform_int(rng, std::min(50, s / 2), std::min(110, s - 2));
      const bool horizontal = uniform_int(rng, 0, 1) == 0;
      const int w = horizontal ? length : width;
      const int h = horizontal ? width : length;
      const int x = uniform_int(rng, 0, s - w);
      const int y = uniform_int(rng, 0, s - h);
      for (int yy = y; yy < y + h; ++yy)
        for (int xx = x; xx < x + w; ++xx) m.at(xx, yy) = 1;
      break;
    }
    case ShapeFamily::blob:
    case ShapeFamily::small_disc: {
      const bool disc = family == ShapeFamily::small_disc;
      const int rx = disc ? uniform_int(rng, 5, 9) : uniform_int(rng, 14, 30);
      const int ry = disc ? rx : uniform_int(rng, 14, 30);
      const int cx = uniform_int(rng, rx, s - 1 - rx);
      const int cy = uniform_int(rng, ry, s - 1 - ry);
      for (int y = cy - ry; y <= cy + ry; ++y)
        for (int x = cx - rx; x <= cx + rx; ++x) {
          const double dx = double(x - cx) / (rx + 0.5);
          const double dy = double(y - cy) / (ry + 0.5);
          if (dx * dx + dy * dy <= 1.0) m.at(x, y) = 1;
        }
      break;
    }
  }
  return m;
}

std::pair<int, int> object_count_range(ShapeFamily f) {
  switch (f) {
    case ShapeFamily::background_plane: return {1, 1};
    case ShapeFamily::stripe: return {1, 1};
    case ShapeFamily::blob: return {1, 1};
    case ShapeFamily::thin_bar: return {1, 2};
    case ShapeFamily::small_disc: return {1, 2};
  }
  return {1, 1};
}

Bitmask dilate(const Bitmask& m, std::uint32_t r) {
  if (r == 0) return m;
  Bitmask out(m.width, m.height, 0);
  for (std::uint32_t y = 0; y < m.height; ++y)
    for (std::uint32_t x = 0; x < m.width; ++x) {
      if (!m.at(x, y)) continue;
      const std::uint32_t x0 = x >= r ? x - r : 0, y0 = y >= r ? y - r : 0;
      const std::uint32_t x1 = std::min(m.width - 1, x + r), y1 = std::min(m.height - 1, y + r);
      for (std::uint32_t yy = y0; yy <= y1; ++yy)
        for (std::uint32_t xx = x0; xx <= x1; ++xx) out.at(xx, yy) = 1;
    }
  return out;
}

// Cuts a region across the long axis of its bbox; both halves are non-empty
// because the box is tight.
std::pair<Bitmask, Bitmask> split(const Bitmask& m, std::mt19937_64& rng) {
  const BBox b = foreground_bbox(m);
  const bool along_x = b.width() >= b.height();
  const std::uint32_t lo = along_x ? b.x_min : b.y_min;
  const std::uint32_t len = along_x ? b.width() : b.height();
  const double frac = std::uniform_real_distribution<double>(0.3, 0.7)(rng);
  const std::uint32_t cut = lo + std::clamp<std::uint32_t>(static_cast<std::uint32_t>(len * frac), 1, len - 1);
  Bitmask a(m.width, m.height, 0), c(m.width, m.height, 0);
  for (std::uint32_t y = 0; y < m.height; ++y)
    for (std::uint32_t x = 0; x < m.width; ++x) {
      if (!m.at(x, y)) continue;
      ((along_x ? x : y) < cut ? a : c).at(x, y) = 1;
    }
  return {a, c};
}

}  // namespace

SynthDataset generate(const SynthConfig& cfg) {
  if (cfg.classes.empty() || cfg.classes.front().shape != ShapeFamily::background_plane) {
    throw ConfigError("the first synthetic class must be the background_plane");
  }
  if (cfg.classes.size() > 255) throw ConfigError("too many synthetic classes");
  if (cfg.image_size < 64) throw ConfigError("synthetic images must be at least 64 px");
  if (cfg.mask_noise.split_prob < 0.0 || cfg.mask_noise.split_prob > 1.0) {
    throw ConfigError("split_prob must lie in [0,1]");
  }
  for (std::size_t a = 0; a < cfg.classes.size(); ++a)
    for (std::size_t b = a + 1; b < cfg.classes.size(); ++b)
      if (cfg.classes[a].color == cfg.classes[b].color) throw ConfigError("synthetic class colors must be distinct");

  SynthDataset ds;
  for (const auto& c : cfg.classes) ds.class_names.push_back(c.name);
  const std::uint32_t S = cfg.image_size;
  constexpr std::uint32_t margin = 2;

  for (std::uint32_t i = 0; i < cfg.n_images; ++i) {
    char id_buf[32];
    std::snprintf(id_buf, sizeof id_buf, "synth_%04u", i);
    const std::string image_id = id_buf;
    std::mt19937_64 layout(stream_seed(cfg.seed, i, 1));
    std::mt19937_64 noise(stream_seed(cfg.seed, i, 2));

    std::vector<Object> objects;
    std::vector<BBox> placed;
    for (std::size_t c = 1; c < cfg.classes.size(); ++c) {
      const auto [lo, hi] = object_count_range(cfg.classes[c].shape);
      const int count = uniform_int(layout, lo, hi);
      for (int n = 0; n < count; ++n) {
        for (int attempt = 0; attempt < 200; ++attempt) {
          Bitmask shape = draw_shape(cfg.classes[c].shape, S, layout);
          const BBox b = foreground_bbox(shape);
          if (b.empty()) break;
          const bool clash =
              std::any_of(placed.begin(), placed.end(), [&](const BBox& p) { return overlaps(p, b, margin); });
          if (clash) continue;
          placed.push_back(b);
          objects.push_back({static_cast<std::uint8_t>(c), std::move(shape)});
          break;
        }
      }
    }
    // Background plane: whatever no foreground object covers.
    Bitmask background(S, S, 1);
    for (const auto& o : objects)
      for (std::size_t p = 0; p < o.pixels.pixels.size(); ++p)
        if (o.pixels.pixels[p]) background.pixels[p] = 0;
    objects.insert(objects.begin(), Object{0, std::move(background)});

    RgbImage img(S, S, cfg.classes[0].color);
    GrayImage gt(S, S, 0);
    for (const auto& o : objects) {
      for (std::uint32_t y = 0; y < S; ++y)
        for (std::uint32_t x = 0; x < S; ++x) {
          if (!o.pixels.at(x, y)) continue;
          img.set(x, y, cfg.classes[o.class_index].color);
          gt.at(x, y) = o.class_index;
        }
    }

    MaskFile mf{image_id, {}};
    for (const auto& o : objects) {
      std::vector<Bitmask> parts;
      const bool do_split = std::uniform_real_distribution<double>(0.0, 1.0)(noise) < cfg.mask_noise.split_prob;
      if (do_split) {
        auto [a, b] = split(o.pixels, noise);
        parts.push_back(std::move(a));
        parts.push_back(std::move(b));
      } else {
        parts.push_back(o.pixels);
      }
      for (auto& part : parts) {
        const auto r = static_cast<std::uint32_t>(uniform_int(noise, 0, static_cast<int>(cfg.mask_noise.dilate_px)));
        char mid[48];
        std::snprintf(mid, sizeof mid, "%s_m%03zu", image_id.c_str(), mf.masks.size());
        mf.masks.push_back(make_mask_record(mid, image_id, dilate(part, r)));
        ds.region_classes[mid] = o.class_index;
      }
    }
    ds.object_count += objects.size();
    ds.images.push_back({image_id, S, S, fs::path("images") / (image_id + ".png")});
    ds.pixels.push_back(std::move(img));
    ds.ground_truth.push_back(std::move(gt));
    ds.masks.push_back(std::move(mf));
  }
  return ds;
}

void write_dataset(const SynthDataset& ds, const fs::path& dir) {
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "gt");
  fs::create_directories(dir / "masks");
  for (std::size_t i = 0; i < ds.images.size(); ++i) {
    const auto& id = ds.images[i].image_id;
    write_png_rgb(dir / "images" / (id + ".png"), ds.pixels[i]);
    write_png_gray(dir / "gt" / (id + ".png"), ds.ground_truth[i]);
    write_mask_file(dir / "masks" / (id + ".json"), ds.masks[i]);
  }
  write_manifest(dir / "manifest.json", ds.images);
  std::ofstream(dir / "classes.json") << json(ds.class_names).dump(2) << '\n';
  std::ofstream(dir / "region_classes.json") << json(ds.region_classes).dump(2) << '\n';
}

MergeMap majority_merge_map(const ClusterModel& model, const std::map<std::string, std::uint8_t>& region_classes,
                            const std::vector<std::string>& class_names) {
  std::vector<std::vector<std::uint64_t>> votes(model.k, std::vector<std::uint64_t>(class_names.size(), 0));
  for (const auto& [region, c] : model.assignments) {
    const auto it = region_classes.find(region);
    if (it == region_classes.end()) continue;
    ++votes.at(c).at(it->second);
  }
  MergeMap merge;
  merge.classes = class_names;
  merge.created_by = "majority-vote script";
  for (std::uint32_t c = 0; c < model.k; ++c) {
    const auto& v = votes[c];
    const auto best = std::max_element(v.begin(), v.end());
    if (best == v.end() || *best == 0) {
      merge.mapping[c] = std::nullopt;
    } else {
      merge.mapping[c] = static_cast<std::uint8_t>(best - v.begin());
    }
  }
  return merge;
}

}  // namespace comrp
