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

#include "comrp/server.hpp"

#include <algorithm>
#include <list>
#include <mutex>
#include <unordered_map>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "comrp/error.hpp"
#include "comrp/png_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace comrp {

ServerInputs load_server_inputs(const fs::path& model_path, const fs::path& masks_dir, const fs::path& manifest_path,
                                const fs::path& merge_path, std::optional<fs::path> gt_dir,
                                std::optional<fs::path> ui_dir) {
  ServerInputs in;
  in.model = read_model(model_path);
  in.images = read_manifest(manifest_path);
  in.masks = flatten(read_mask_dir(masks_dir));
  in.merge_path = merge_path;
  if (fs::exists(merge_path)) {
    in.initial_merge = read_merge_map(merge_path);
  } else {
    for (std::uint32_t c = 0; c < in.model.k; ++c) in.initial_merge.mapping[c] = std::nullopt;
  }
  in.gt_dir = std::move(gt_dir);
  in.ui_dir = std::move(ui_dir);
  return in;
}

Rgb class_color(std::uint8_t c) {
  static constexpr std::array<Rgb, 12> kPalette{{{230, 25, 75},
                                                 {60, 180, 75},
                                                 {255, 225, 25},
                                                 {0, 130, 200},
                                                 {245, 130, 48},
                                                 {145, 30, 180},
                                                 {70, 240, 240},
                                                 {240, 50, 230},
                                                 {210, 245, 60},
                                                 {250, 190, 212},
                                                 {0, 128, 128},
                                                 {170, 110, 40}}};
  if (c < kPalette.size()) return kPalette[c];
  // Beyond the palette: a multiplicative hash spread over the RGB cube.
  const std::uint32_t h = (c + 1u) * 2654435761u;
  return {static_cast<std::uint8_t>(h >> 24), static_cast<std::uint8_t>(h >> 16), static_cast<std::uint8_t>(h >> 8)};
}

RgbImage blend_preview(const RgbImage& image, const GrayImage& labels) {
  if (image.width != labels.width || image.height != labels.height) {
    throw ShapeMismatch("preview label raster does not match the image");
  }
  RgbImage out = image;
  for (std::size_t i = 0; i < labels.pixels.size(); ++i) {
    const std::uint8_t l = labels.pixels[i];
    if (l == kIgnoreLabel) continue;
    const Rgb tint = class_color(l);
    for (int k = 0; k < 3; ++k) {
      out.pixels[3 * i + k] = static_cast<std::uint8_t>((out.pixels[3 * i + k] + tint[k] + 1) / 2);
    }
  }
  return out;
}

namespace {

struct Snapshot {
  std::uint64_t revision = 0;
  MergeMap merge;
  std::map<std::string, ClassAssignment> region_classes;
};

constexpr std::size_t kPreviewCacheCapacity = 64;

/// Least-recently-used cache of encoded previews keyed by (image_id, revision).
class PreviewCache {
 public:
  std::optional<std::string> get(const std::string& key) {
    std::lock_guard lock(mu_);
    const auto it = index_.find(key);
    if (it == index_.end()) return std::nullopt;
    order_.splice(order_.begin(), order_, it->second);
    return it->second->second;
  }

  void put(const std::string& key, std::string value) {
    std::lock_guard lock(mu_);
    if (const auto it = index_.find(key); it != index_.end()) {
      order_.splice(order_.begin(), order_, it->second);
      return;
    }
    order_.emplace_front(key, std::move(value));
    index_[key] = order_.begin();
    if (order_.size() > kPreviewCacheCapacity) {
      index_.erase(order_.back().first);
      order_.pop_back();
    }
  }

 private:
  std::mutex mu_;
  std::list<std::pair<std::string, std::string>> order_;
  std::unordered_map<std::string, std::list<std::pair<std::string, std::string>>::iterator> index_;
};

json assignment_json(const MergeMap& merge, std::uint32_t cluster) {
  const auto it = merge.mapping.find(cluster);
  if (it == merge.mapping.end()) return nullptr;
  return it->second ? json(*it->second) : json("DISCARD");
}

std::string bytes_of(const std::vector<std::uint8_t>& v) { return {v.begin(), v.end()}; }

}  // namespace

struct ReviewServer::Impl {
  ServerInputs in;
  std::mutex run_mu;
  bool listening = false;
  bool stop_requested = false;
  std::map<std::string, std::size_t> image_index;
  std::map<std::string, std::size_t> mask_index;
  std::map<std::string, std::vector<MaskRecord>> masks_by_image;

  mutable std::mutex snapshot_mu;
  std::shared_ptr<const Snapshot> snapshot;
  std::mutex writer_mu;

  PreviewCache previews;
  std::mutex metrics_mu;
  std::optional<std::pair<std::uint64_t, std::string>> metrics_cache;

  httplib::Server http;

  explicit Impl(ServerInputs inputs) : in(std::move(inputs)) {
    for (std::size_t i = 0; i < in.images.size(); ++i) image_index[in.images[i].image_id] = i;
    for (std::size_t i = 0; i < in.masks.size(); ++i) {
      mask_index[in.masks[i].mask_id] = i;
      masks_by_image[in.masks[i].image_id].push_back(in.masks[i]);
    }
    auto s = std::make_shared<Snapshot>();
    s->merge = in.initial_merge;
    s->region_classes = make_region_classes(s->merge);
    snapshot = std::move(s);
    routes();
  }

  // Tolerates partially mapped clusters so a fresh session can preview
  // before every cluster has been decided.
  std::map<std::string, ClassAssignment> make_region_classes(const MergeMap& merge) const {
    std::map<std::string, ClassAssignment> out;
    for (const auto& [region, cluster] : in.model.assignments) {
      const auto it = merge.mapping.find(cluster);
      out[region] = it == merge.mapping.end() ? std::nullopt : it->second;
    }
    return out;
  }

  std::shared_ptr<const Snapshot> current() const {
    std::lock_guard lock(snapshot_mu);
    return snapshot;
  }

  static void send_json(httplib::Response& res, int status, const json& body, std::uint64_t revision) {
    res.status = status;
    res.set_header("X-Revision", std::to_string(revision));
    res.set_content(body.dump(), "application/json");
  }

  static void send_error(httplib::Response& res, int status, const std::string& kind, const std::string& message,
                         std::uint64_t revision, json extra = json::object()) {
    extra["error"] = kind;
    extra["message"] = message;
    send_json(res, status, extra, revision);
  }

  LabelMap labels_for(const Snapshot& s, const ImageRecord& image) const {
    static const std::vector<MaskRecord> kNone;
    const auto it = masks_by_image.find(image.image_id);
    return rasterize_image(image, it == masks_by_image.end() ? kNone : it->second, s.region_classes);
  }

  void get_clusters(httplib::Response& res) {
    const auto s = current();
    const auto sizes = in.model.cluster_sizes();
    json out = json::array();
    for (std::uint32_t c = 0; c < in.model.k; ++c) {
      const auto ex = in.model.exemplars.find(c);
      out.push_back({{"cluster_id", c},
                     {"size", sizes[c]},
                     {"exemplars", ex == in.model.exemplars.end() ? json::array() : json(ex->second)},
                     {"mapping", assignment_json(s->merge, c)}});
    }
    send_json(res, 200, out, s->revision);
  }

  void get_mergemap(httplib::Response& res) {
    const auto s = current();
    send_json(res, 200, {{"revision", s->revision}, {"merge_map", to_json(s->merge)}}, s->revision);
  }

  void put_mergemap(const httplib::Request& req, httplib::Response& res) {
    std::lock_guard writer(writer_mu);
    const auto s = current();
    if (!req.has_header("X-Expected-Revision")) {
      send_error(res, 428, "MissingRevision", "X-Expected-Revision header is required", s->revision);
      return;
    }
    std::uint64_t expected = 0;
    try {
      expected = std::stoull(req.get_header_value("X-Expected-Revision"));
    } catch (const std::exception&) {
      send_error(res, 400, "BadRequest", "X-Expected-Revision must be an integer", s->revision);
      return;
    }
    if (expected != s->revision) {
      send_error(res, 409, "StaleRevision", "merge map was modified concurrently", s->revision,
                 {{"revision", s->revision}});
      return;
    }
    MergeMap merge;
    try {
      const json body = json::parse(req.body);
      merge = merge_map_from_json(body.contains("merge_map") ? body.at("merge_map") : body);
    } catch (const InvalidMergeMap& e) {
      send_error(res, 422, e.kind(), e.what(), s->revision, {{"missing", json::array()}});
      return;
    } catch (const std::exception& e) {
      send_error(res, 400, "BadRequest", e.what(), s->revision);
      return;
    }
    try {
      validate_merge(merge, in.model);
    } catch (const UnmappedCluster& e) {
      send_error(res, 422, e.kind(), e.what(), s->revision, {{"missing", e.missing()}});
      return;
    } catch (const Error& e) {
      send_error(res, 422, e.kind(), e.what(), s->revision, {{"missing", json::array()}});
      return;
    }
    write_merge_map_atomic(in.merge_path, merge);
    auto next = std::make_shared<Snapshot>();
    next->revision = s->revision + 1;
    next->region_classes = make_region_classes(merge);
    next->merge = std::move(merge);
    {
      std::lock_guard lock(snapshot_mu);
      snapshot = next;
    }
    send_json(res, 200, {{"revision", next->revision}}, next->revision);
  }

  void get_crop(const std::string& mask_id, httplib::Response& res) {
    const auto s = current();
    const auto it = mask_index.find(mask_id);
    if (it == mask_index.end()) {
      send_error(res, 404, "UnknownMask", "no mask " + mask_id, s->revision);
      return;
    }
    const MaskRecord& mask = in.masks[it->second];
    const auto img = image_index.find(mask.image_id);
    if (img == image_index.end()) {
      send_error(res, 404, "UnknownImage", "mask refers to unknown image " + mask.image_id, s->revision);
      return;
    }
    const RgbImage pixels = read_png_rgb(in.images[img->second].path);
    res.set_header("X-Revision", std::to_string(s->revision));
    res.set_content(bytes_of(encode_png_rgb(crop_region(pixels, mask, kDefaultCropSize))), "image/png");
  }

  void get_preview(const std::string& image_id, httplib::Response& res) {
    const auto s = current();
    const auto it = image_index.find(image_id);
    if (it == image_index.end()) {
      send_error(res, 404, "UnknownImage", "no image " + image_id, s->revision);
      return;
    }
    const std::string key = image_id + "@" + std::to_string(s->revision);
    auto png = previews.get(key);
    if (!png) {
      const ImageRecord& image = in.images[it->second];
      const RgbImage pixels = read_png_rgb(image.path);
      png = bytes_of(encode_png_rgb(blend_preview(pixels, labels_for(*s, image).labels)));
      previews.put(key, *png);
    }
    res.set_header("X-Revision", std::to_string(s->revision));
    res.set_content(*png, "image/png");
  }

  // Sums per-image confusion matrices over the ground-truth files in sorted
  // name order, as the batch evaluator does.
  std::string compute_metrics(const Snapshot& s) {
    const auto n = static_cast<std::uint32_t>(s.merge.classes.size());
    std::vector<fs::path> names;
    for (const auto& e : fs::directory_iterator(*in.gt_dir)) {
      if (e.is_regular_file() && e.path().extension() == ".png") names.push_back(e.path().filename());
    }
    std::sort(names.begin(), names.end());
    ConfusionMatrix total(n);
    for (const auto& name : names) {
      const auto it = image_index.find(name.stem().string());
      if (it == image_index.end()) throw IoError("ground truth " + name.string() + " has no image");
      const GrayImage gt = read_png_gray(*in.gt_dir / name);
      ConfusionMatrix part(n);
      accumulate(part, gt, labels_for(s, in.images[it->second]).labels);
      total += part;
    }
    return to_json(report(total, s.merge.classes)).dump();
  }

  void get_metrics(httplib::Response& res) {
    const auto s = current();
    if (!in.gt_dir) {
      send_error(res, 404, "NoGroundTruth", "server started without dev ground truth", s->revision);
      return;
    }
    std::string body;
    {
      std::lock_guard lock(metrics_mu);
      if (metrics_cache && metrics_cache->first == s->revision) body = metrics_cache->second;
    }
    if (body.empty()) {
      try {
        body = compute_metrics(*s);
      } catch (const Error& e) {
        // Typically ground-truth labels outside the current class list.
        send_error(res, 422, e.kind(), e.what(), s->revision);
        return;
      }
      std::lock_guard lock(metrics_mu);
      metrics_cache = {s->revision, body};
    }
    res.set_header("X-Revision", std::to_string(s->revision));
    res.set_content(body, "application/json");
  }

  void routes() {
    http.Get("/api/clusters", [this](const httplib::Request&, httplib::Response& res) { get_clusters(res); });
    http.Get("/api/mergemap", [this](const httplib::Request&, httplib::Response& res) { get_mergemap(res); });
    http.Put("/api/mergemap",
             [this](const httplib::Request& req, httplib::Response& res) { put_mergemap(req, res); });
    http.Get(R"(/api/regions/([^/]+)/crop\.png)", [this](const httplib::Request& req, httplib::Response& res) {
      get_crop(req.matches[1], res);
    });
    http.Get(R"(/api/images/([^/]+)/preview)", [this](const httplib::Request& req, httplib::Response& res) {
      get_preview(req.matches[1], res);
    });
    http.Get("/api/metrics", [this](const httplib::Request&, httplib::Response& res) { get_metrics(res); });
    http.set_exception_handler([this](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      const auto rev = current()->revision;
      try {
        std::rethrow_exception(ep);
      } catch (const Error& e) {
        send_error(res, 500, e.kind(), e.what(), rev);
      } catch (const std::exception& e) {
        send_error(res, 500, "Internal", e.what(), rev);
      }
    });
    if (in.ui_dir && fs::is_directory(*in.ui_dir)) http.set_mount_point("/", in.ui_dir->string());
  }
};

ReviewServer::ReviewServer(ServerInputs inputs) : impl_(std::make_unique<Impl>(std::move(inputs))) {}
ReviewServer::~ReviewServer() { stop(); }

int ReviewServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->http.bind_to_any_port(host);
    if (bound < 0) throw IoError("cannot bind " + host);
    return bound;
  }
  if (!impl_->http.bind_to_port(host, port)) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void ReviewServer::listen() {
  {
    std::lock_guard lock(impl_->run_mu);
    if (impl_->stop_requested) return;
    impl_->listening = true;
  }
  impl_->http.listen_after_bind();
}

// A stop() racing a listen() that has not yet entered its accept loop waits
// for the loop to start, since stopping an idle httplib server is a no-op.
void ReviewServer::stop() {
  if (!impl_) return;
  std::lock_guard lock(impl_->run_mu);
  impl_->stop_requested = true;
  if (!impl_->listening) return;
  impl_->http.wait_until_ready();
  impl_->http.stop();
}

std::uint64_t ReviewServer::revision() const { return impl_->current()->revision; }

MergeMap ReviewServer::merge_map() const { return impl_->current()->merge; }

}  // namespace comrp
