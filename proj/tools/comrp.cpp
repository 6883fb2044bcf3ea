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

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "comrp/clustering.hpp"
#include "comrp/error.hpp"
#include "comrp/feature_io.hpp"
#include "comrp/labeling.hpp"
#include "comrp/mask_ingest.hpp"
#include "comrp/metrics.hpp"
#include "comrp/parallel.hpp"
#include "comrp/png_io.hpp"
#include "comrp/roi_tiler.hpp"
#include "comrp/selftrain.hpp"
#include "comrp/server.hpp"
#include "comrp/synth.hpp"
#include "comrp/toy_model.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace comrp;

namespace {

void emit_json(const json& j, const std::string& out) {
  if (out.empty() || out == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  if (const auto parent = fs::path(out).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream f(out, std::ios::trunc);
  if (!f) throw IoError("cannot write " + out);
  f << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::vector<MaskRecord> load_masks(const std::string& dir) { return flatten(read_mask_dir(dir)); }

ReviewServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"comrp: region-proposal pseudo-labeling toolkit"};
  app.require_subcommand(1);
  unsigned threads = 0;
  app.add_option("--threads", threads, "worker threads (0 = all cores)");

  // ---- masks ----------------------------------------------------------------
  auto* masks = app.add_subcommand("masks", "mask proposal utilities");
  masks->require_subcommand(1);

  std::string manifest, masks_dir, out;
  std::uint32_t theta = kDefaultAreaThreshold;

  auto* m_validate = masks->add_subcommand("validate", "check RLE, area and bbox of every mask");
  m_validate->add_option("--manifest", manifest)->required();
  m_validate->add_option("--masks", masks_dir)->required();
  m_validate->add_option("--out", out);

  auto* m_filter = masks->add_subcommand("filter", "keep masks with area > theta");
  m_filter->add_option("--masks", masks_dir)->required();
  m_filter->add_option("--theta", theta);
  m_filter->add_option("--out", out, "output mask directory")->required();

  auto* m_coverage = masks->add_subcommand("coverage", "per-image union coverage and area census");
  m_coverage->add_option("--manifest", manifest)->required();
  m_coverage->add_option("--masks", masks_dir)->required();
  m_coverage->add_option("--theta", theta);
  m_coverage->add_option("--out", out);

  std::uint32_t crop_size = kDefaultCropSize;
  auto* m_crops = masks->add_subcommand("crops", "write bbox crops of every mask");
  m_crops->add_option("--manifest", manifest)->required();
  m_crops->add_option("--masks", masks_dir)->required();
  m_crops->add_option("--size", crop_size);
  m_crops->add_option("--out", out)->required();

  // ---- tile -----------------------------------------------------------------
  std::string detections_dir;
  std::uint32_t tile_size = kDefaultTileSize;
  auto* tile = app.add_subcommand("tile", "cut kept detection boxes into square tiles");
  tile->add_option("--manifest", manifest)->required();
  tile->add_option("--detections", detections_dir)->required();
  tile->add_option("--tile-size", tile_size);
  tile->add_option("--out", out)->required();

  // ---- features -------------------------------------------------------------
  auto* features = app.add_subcommand("features", "feature packs");
  features->require_subcommand(1);
  std::string crops_dir, pack_path;
  auto* f_extract = features->add_subcommand("extract-baseline", "baseline descriptors of region crops");
  f_extract->add_option("--crops", crops_dir)->required();
  f_extract->add_option("--out", out)->required();
  auto* f_validate = features->add_subcommand("validate", "check a .cmrp pack");
  f_validate->add_option("pack", pack_path)->required();

  // ---- cluster --------------------------------------------------------------
  ClusterConfig ccfg;
  std::string method = "spectral", affinity = "rbf_dense", linkage = "average";
  std::optional<double> sigma;
  auto* cluster_cmd = app.add_subcommand("cluster", "cluster a feature pack");
  cluster_cmd->add_option("--features", pack_path)->required();
  cluster_cmd->add_option("--method", method)->check(CLI::IsMember({"spectral", "kmeans", "kmedoids", "agglomerative"}));
  cluster_cmd->add_option("--k", ccfg.k);
  cluster_cmd->add_option("--seed", ccfg.seed);
  cluster_cmd->add_option("--affinity", affinity)->check(CLI::IsMember({"rbf_dense", "knn_graph"}));
  cluster_cmd->add_option("--knn", ccfg.spectral.knn);
  cluster_cmd->add_option("--sigma", sigma, "RBF width (default: median pairwise distance)");
  cluster_cmd->add_option("--linkage", linkage)->check(CLI::IsMember({"average", "ward"}));
  cluster_cmd->add_option("--max-exact-n", ccfg.max_exact_n);
  cluster_cmd->add_option("--n-init", ccfg.n_init);
  cluster_cmd->add_flag("--l2-normalize", ccfg.l2_normalize);
  cluster_cmd->add_option("--out", out)->required();

  // ---- rasterize / eval -----------------------------------------------------
  std::string model_path, merge_path;
  auto* rasterize_cmd = app.add_subcommand("rasterize", "paint pseudo-label PNGs under a merge map");
  rasterize_cmd->add_option("--model", model_path)->required();
  rasterize_cmd->add_option("--merge", merge_path)->required();
  rasterize_cmd->add_option("--masks", masks_dir)->required();
  rasterize_cmd->add_option("--manifest", manifest)->required();
  rasterize_cmd->add_option("--out", out)->required();

  std::string gt_dir, pred_dir, classes_path;
  auto* eval_cmd = app.add_subcommand("eval", "confusion-matrix metrics of predictions vs ground truth");
  eval_cmd->add_option("--gt", gt_dir)->required();
  eval_cmd->add_option("--pred", pred_dir)->required();
  eval_cmd->add_option("--classes", classes_path)->required();
  eval_cmd->add_option("--out", out);

  // ---- loop / toy trainer ---------------------------------------------------
  std::string config_path, labels_dir;
  auto* loop_cmd = app.add_subcommand("loop", "self-training loop driver");
  loop_cmd->add_option("--config", config_path)->required();
  loop_cmd->add_option("--labels", labels_dir)->required();

  std::uint64_t toy_seed = 0;
  auto* toy_train_cmd = app.add_subcommand("toy-train", "built-in prototype trainer");
  toy_train_cmd->add_option("--manifest", manifest, "training manifest")->required();
  toy_train_cmd->add_option("--labels", labels_dir, "accepted for template symmetry; labels come from the manifest");
  toy_train_cmd->add_option("--seed", toy_seed);
  toy_train_cmd->add_option("--out", out)->required();

  std::string images_path;
  auto* toy_predict_cmd = app.add_subcommand("toy-predict", "built-in prototype predictor");
  toy_predict_cmd->add_option("--model", model_path)->required();
  toy_predict_cmd->add_option("--images", images_path, "image manifest")->required();
  toy_predict_cmd->add_option("--out", out)->required();

  // ---- serve ----------------------------------------------------------------
  std::string host = "127.0.0.1", ui_dir;
  int port = 8787;
  auto* serve_cmd = app.add_subcommand("serve", "HTTP review service");
  serve_cmd->add_option("--model", model_path)->required();
  serve_cmd->add_option("--masks", masks_dir)->required();
  serve_cmd->add_option("--manifest", manifest)->required();
  serve_cmd->add_option("--merge", merge_path)->required();
  serve_cmd->add_option("--gt", gt_dir);
  serve_cmd->add_option("--ui", ui_dir, "directory with the built UI bundle");
  serve_cmd->add_option("--host", host);
  serve_cmd->add_option("--port", port);

  // ---- synth / merge-oracle -------------------------------------------------
  SynthConfig scfg;
  auto* synth_cmd = app.add_subcommand("synth", "generate the synthetic road fixture");
  synth_cmd->add_option("--seed", scfg.seed);
  synth_cmd->add_option("--n", scfg.n_images);
  synth_cmd->add_option("--size", scfg.image_size);
  synth_cmd->add_option("--split-prob", scfg.mask_noise.split_prob)->check(CLI::Range(0.0, 1.0));
  synth_cmd->add_option("--dilate", scfg.mask_noise.dilate_px);
  synth_cmd->add_option("--out", out)->required();

  std::string regions_path;
  auto* oracle_cmd = app.add_subcommand("merge-oracle", "majority-vote merge map from known region classes");
  oracle_cmd->add_option("--model", model_path)->required();
  oracle_cmd->add_option("--regions", regions_path, "region_classes.json")->required();
  oracle_cmd->add_option("--classes", classes_path)->required();
  oracle_cmd->add_option("--out", out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    set_thread_count(threads);

    if (*m_validate) {
      const auto images = read_manifest(manifest);
      const auto all = load_masks(masks_dir);
      json errors = json::array();
      for (const auto& m : all) {
        try {
          validate_mask(m, find_image(images, m.image_id));
        } catch (const Error& e) {
          errors.push_back({{"mask_id", m.mask_id}, {"error", e.kind()}, {"message", e.what()}});
        }
      }
      emit_json({{"masks", all.size()}, {"invalid", errors.size()}, {"errors", errors}}, out);
      return errors.empty() ? 0 : 1;
    }
    if (*m_filter) {
      fs::create_directories(out);
      std::uint64_t kept = 0, dropped = 0;
      for (auto file : read_mask_dir(masks_dir)) {
        auto r = filter_by_area(file.masks, theta);
        kept += r.kept.size();
        dropped += r.dropped.size();
        file.masks = std::move(r.kept);
        write_mask_file(fs::path(out) / (file.image_id + ".json"), file);
      }
      emit_json({{"theta", theta}, {"kept", kept}, {"dropped", dropped}}, "");
      return 0;
    }
    if (*m_coverage) {
      emit_json(to_json(compute_coverage(read_manifest(manifest), load_masks(masks_dir), theta)), out);
      return 0;
    }
    if (*m_crops) {
      write_crop_dir(out, crop_regions(read_manifest(manifest), load_masks(masks_dir), crop_size));
      return 0;
    }
    if (*tile) {
      const auto images = read_manifest(manifest);
      fs::create_directories(out);
      json plans = json::array();
      std::set<std::string> written;
      for (const auto& det : read_detection_dir(detections_dir)) {
        const ImageRecord& image = find_image(images, det.image_id);
        std::optional<RgbImage> pixels;
        for (const auto& d : det.detections) {
          if (!d.keep) continue;
          const BBox box = denormalize_box(d.box, image.width, image.height, det.resize_long_side);
          const TilePlan plan = [&] {
            TilePlan p = plan_tiles(box, tile_size, image.width, image.height);
            p.source_image_id = image.image_id;
            p.resize_long_side = det.resize_long_side;
            return p;
          }();
          if (!pixels) pixels = read_png_rgb(image.path);
          json offsets = json::array();
          for (const auto& t : cut_tiles(*pixels, plan)) {
            if (written.insert(t.tile_id).second) write_png_rgb(fs::path(out) / (t.tile_id + ".png"), t.pixels);
          }
          for (const auto& o : plan.tiles) offsets.push_back({o.x, o.y});
          plans.push_back({{"source_image_id", plan.source_image_id},
                           {"tile_size", plan.tile_size},
                           {"resize_long_side", plan.resize_long_side},
                           {"box", {box.x_min, box.y_min, box.x_max, box.y_max}},
                           {"tiles", offsets}});
        }
      }
      emit_json(plans, (fs::path(out) / "tiles.json").string());
      return 0;
    }
    if (*f_extract) {
      write_pack(out, baseline_pack(read_crop_dir(crops_dir)));
      return 0;
    }
    if (*f_validate) {
      const FeaturePack pack = read_pack(pack_path);
      emit_json({{"ok", true},
                 {"version", pack.version},
                 {"dim", pack.dim},
                 {"count", pack.count()},
                 {"source_tag", pack.source_tag}},
                "");
      return 0;
    }
    if (*cluster_cmd) {
      ccfg.method = parse_method(method);
      ccfg.spectral.affinity = affinity == "knn_graph" ? AffinityKind::knn_graph : AffinityKind::rbf_dense;
      ccfg.spectral.fixed_sigma = sigma;
      ccfg.agglo_linkage = linkage == "ward" ? Linkage::ward : Linkage::average;
      const ClusterModel model = cluster(read_pack(pack_path), ccfg);
      for (const auto& w : model.warnings) std::cerr << "warning: " << w << '\n';
      write_model(out, model);
      return 0;
    }
    if (*rasterize_cmd) {
      const ClusterModel model = read_model(model_path);
      const MergeMap merge = read_merge_map(merge_path);
      validate_merge(merge, model);
      rasterize_dataset(read_manifest(manifest), load_masks(masks_dir), apply_merge(model, merge), out);
      return 0;
    }
    if (*eval_cmd) {
      const auto names = read_class_names(classes_path);
      const auto conf = evaluate_dirs(gt_dir, pred_dir, static_cast<std::uint32_t>(names.size()));
      emit_json(to_json(report(conf, names)), out);
      return 0;
    }
    if (*loop_cmd) {
      const LoopResult r = run_loop(read_loop_config(config_path), labels_dir);
      json history = json::array();
      for (const auto& rec : r.history) history.push_back(to_json(rec));
      emit_json({{"best", r.best}, {"resumed", r.resumed}, {"history", history}}, "");
      return 0;
    }
    if (*toy_train_cmd) {
      ToyTrainOptions opts;
      opts.seed = toy_seed;
      write_toy_model(out, toy_train(read_train_manifest(manifest), opts));
      return 0;
    }
    if (*toy_predict_cmd) {
      const ToyModel model = read_toy_model(model_path);
      fs::create_directories(out);
      for (const auto& image : read_manifest(images_path)) {
        write_png_gray(fs::path(out) / (image.image_id + ".png"), toy_predict(model, read_png_rgb(image.path)));
      }
      return 0;
    }
    if (*serve_cmd) {
      auto inputs = load_server_inputs(model_path, masks_dir, manifest, merge_path,
                                       gt_dir.empty() ? std::nullopt : std::optional<fs::path>(gt_dir),
                                       ui_dir.empty() ? std::nullopt : std::optional<fs::path>(ui_dir));
      ReviewServer server(std::move(inputs));
      const int bound = server.bind(host, port);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "serving on http://" << host << ":" << bound << '\n';
      server.listen();
      g_server = nullptr;
      return 0;
    }
    if (*synth_cmd) {
      const SynthDataset ds = generate(scfg);
      write_dataset(ds, out);
      emit_json({{"images", ds.images.size()}, {"objects", ds.object_count}, {"masks", ds.region_classes.size()}}, "");
      return 0;
    }
    if (*oracle_cmd) {
      std::map<std::string, std::uint8_t> regions = read_json(regions_path).get<std::map<std::string, std::uint8_t>>();
      const MergeMap merge =
          majority_merge_map(read_model(model_path), regions, read_class_names(classes_path));
      write_merge_map_atomic(out, merge);
      return 0;
    }
  } catch (const TrainerFailed& e) {
    std::cerr << "error [" << e.kind() << "]: " << e.what() << '\n';
    return 3;
  } catch (const Error& e) {
    std::cerr << "error [" << e.kind() << "]: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
