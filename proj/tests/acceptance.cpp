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

// Acceptance driver: prints one PASS/FAIL line per acceptance criterion and
// exits non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "comrp/clustering.hpp"
#include "comrp/content_hash.hpp"
#include "comrp/eigen_symmetric.hpp"
#include "comrp/error.hpp"
#include "comrp/labeling.hpp"
#include "comrp/mask_ingest.hpp"
#include "comrp/metrics.hpp"
#include "comrp/png_io.hpp"
#include "comrp/selftrain.hpp"
#include "comrp/synth.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

#ifndef COMRP_CLI
#error "COMRP_CLI must name the comrp executable"
#endif

using namespace comrp;
namespace fs = std::filesystem;
using nlohmann::json;
using comrp::testing::TempDir;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  double time_limit_s;  // 0: no limit
  std::function<Outcome()> run;
};

/// Collects failed checks; the first failure message becomes the detail.
class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok && first_failure_.empty()) first_failure_ = what;
    ok_ = ok_ && ok;
  }
  Outcome done(const std::string& summary) const { return {ok_, ok_ ? summary : first_failure_}; }

 private:
  bool ok_ = true;
  std::string first_failure_;
};

std::string fmt(double v, int digits = 2) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(digits);
  s << v;
  return s.str();
}

std::string quote(const fs::path& p) { return "'" + p.string() + "'"; }

void cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("'") + COMRP_CLI + "' " + args + " >>" + quote(log) + " 2>&1";
  if (std::system(cmd.c_str()) != 0) throw std::runtime_error("command failed: comrp " + args);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

double report_miou(const fs::path& report) { return json::parse(slurp(report)).at("miou").get<double>(); }

/// synth -> crops -> baseline features -> spectral over-clustering ->
/// majority-vote merge -> rasterize -> eval, all through the CLI.
double cli_pipeline(const fs::path& dir, const std::string& synth_args, const std::string& threads = "") {
  const fs::path log = dir / "commands.log";
  const std::string t = threads.empty() ? "" : "--threads " + threads + " ";
  const auto d = [&](const char* name) { return quote(dir / name); };
  cli(t + "synth --seed 7 --n 40 " + synth_args + " --out " + d("fx"), log);
  cli(t + "masks crops --manifest " + d("fx/manifest.json") + " --masks " + d("fx/masks") + " --out " + d("crops"), log);
  cli(t + "features extract-baseline --crops " + d("crops") + " --out " + d("features.cmrp"), log);
  cli(t + "cluster --features " + d("features.cmrp") + " --method spectral --k 10 --seed 0 --out " + d("model.json"),
      log);
  cli(t + "merge-oracle --model " + d("model.json") + " --regions " + d("fx/region_classes.json") + " --classes " +
          d("fx/classes.json") + " --out " + d("merge.json"),
      log);
  cli(t + "rasterize --model " + d("model.json") + " --merge " + d("merge.json") + " --masks " + d("fx/masks") +
          " --manifest " + d("fx/manifest.json") + " --out " + d("labels"),
      log);
  cli(t + "eval --gt " + d("fx/gt") + " --pred " + d("labels") + " --classes " + d("fx/classes.json") + " --out " +
          d("report.json"),
      log);
  return report_miou(dir / "report.json");
}

Matrix random_points(std::mt19937_64& rng, std::size_t n, std::size_t dim) {
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  Matrix x(n, dim);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t d = 0; d < dim; ++d) x(i, d) = u(rng);
  return x;
}

// --- criteria ----------------------------------------------------------------

Outcome clustering_oracles() {
  Checks c;
  std::mt19937_64 rng(101);
  int medoid_cases = 0;
  for (int t = 0; t < 60; ++t) {
    const std::size_t n = 4 + rng() % 7;
    const std::uint32_t k = 2 + static_cast<std::uint32_t>(rng() % 3);
    const Matrix x = random_points(rng, n, 2 + rng() % 2);
    const auto r = kmedoids(x, k, t);
    const double opt = oracle::optimal_medoid_cost(x, k);
    c.expect(std::abs(r.cost - opt) <= 1e-9 * std::max(1.0, opt),
             "k-medoids cost " + fmt(r.cost, 6) + " vs optimal " + fmt(opt, 6) + " (n=" + std::to_string(n) + ")");
    c.expect(std::abs(oracle::medoid_cost(x, r.medoids) - r.cost) <= 1e-9 * std::max(1.0, opt),
             "k-medoids reported cost disagrees with its medoids");
    ++medoid_cases;
  }

  double worst_ratio = 0.0;
  int kmeans_runs = 0;
  for (int fixture = 0; fixture < 10; ++fixture) {
    const std::size_t n = 4 + rng() % 5;
    const std::uint32_t k = 2 + static_cast<std::uint32_t>(rng() % 2);
    const Matrix x = random_points(rng, n, 2);
    const double opt = oracle::optimal_kmeans_inertia(x, k);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto r = kmeans(x, k, seed);
      const double ratio = r.inertia / std::max(opt, 1e-12);
      worst_ratio = std::max(worst_ratio, ratio);
      c.expect(r.inertia <= 1.05 * opt + 1e-12, "k-means inertia " + fmt(r.inertia, 6) + " > 1.05 x optimal " +
                                                    fmt(opt, 6) + " (seed " + std::to_string(seed) + ")");
      ++kmeans_runs;
    }
  }

  int graphs = 0;
  for (int t = 0; t < 50; ++t) {
    const std::uint32_t blocks = 2 + static_cast<std::uint32_t>(rng() % 4);
    const auto g = oracle::random_block_graph(rng, blocks, 3, 12);
    const auto r = spectral_from_affinity(g.affinity, blocks, t);
    c.expect(oracle::same_partition(r.labels, g.component),
             "spectral split block graph " + std::to_string(t) + " incorrectly");
    ++graphs;
  }
  return c.done(std::to_string(medoid_cases) + " k-medoids fixtures exact, " + std::to_string(kmeans_runs) +
                " k-means runs worst " + fmt(worst_ratio, 4) + "x optimal, " + std::to_string(graphs) +
                " block graphs recovered");
}

Outcome eigensolver() {
  Checks c;
  std::mt19937_64 rng(202);
  double worst_residual = 0.0, worst_orth = 0.0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 1 + rng() % 64;
    const Matrix a = oracle::random_symmetric(rng, n);
    const double norm = oracle::frobenius(a);
    const auto e = eig_symmetric(a);
    for (std::size_t j = 0; j < n; ++j) {
      double r2 = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        double av = 0.0;
        for (std::size_t m = 0; m < n; ++m) av += a(i, m) * e.vectors(m, j);
        r2 += oracle::sq(av - e.values[j] * e.vectors(i, j));
      }
      worst_residual = std::max(worst_residual, std::sqrt(r2) / norm);
    }
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = 0; q < n; ++q) {
        double dot = 0.0;
        for (std::size_t i = 0; i < n; ++i) dot += e.vectors(i, p) * e.vectors(i, q);
        worst_orth = std::max(worst_orth, std::abs(dot - (p == q ? 1.0 : 0.0)));
      }
    c.expect(std::is_sorted(e.values.begin(), e.values.end()), "eigenvalues not ascending");
  }
  c.expect(worst_residual <= 1e-8, "residual " + std::to_string(worst_residual) + " > 1e-8 ||A||_F");
  c.expect(worst_orth <= 1e-8, "V^T V deviates from I by " + std::to_string(worst_orth));
  std::ostringstream s;
  s << "100 matrices, max residual/||A||_F " << worst_residual << ", max |V^T V - I| " << worst_orth;
  return c.done(s.str());
}

Outcome metrics_oracle() {
  Checks c;
  std::mt19937_64 rng(303);
  const auto random_labels = [&](std::uint32_t w, std::uint32_t h, std::uint32_t n, double ignore) {
    GrayImage g(w, h);
    std::bernoulli_distribution skip(ignore);
    for (auto& p : g.pixels) p = skip(rng) ? 255 : static_cast<std::uint8_t>(rng() % n);
    return g;
  };
  const auto rel = [](double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); };
  int compared = 0;
  for (int t = 0; t < 200; ++t) {
    const std::uint32_t n = 2 + rng() % 6;
    const std::uint32_t w = 4 + rng() % 28, h = 4 + rng() % 28;
    const GrayImage gt = random_labels(w, h, n, 0.1), pred = random_labels(w, h, n, 0.15);
    const auto conf = confusion(gt, pred, n);
    const auto naive = oracle::naive_scores(gt, pred, n);
    c.expect(rel(pixel_accuracy(conf), naive.pixel_accuracy) <= 1e-12, "PA mismatch on pair " + std::to_string(t));
    for (std::uint32_t k = 0; k < n; ++k) {
      const auto v = iou(conf, k);
      c.expect(v.has_value() == !std::isnan(naive.iou[k]), "presence mismatch on pair " + std::to_string(t));
      if (v) c.expect(rel(*v, naive.iou[k]) <= 1e-12, "IoU mismatch on pair " + std::to_string(t));
    }
    ++compared;
  }

  std::vector<std::pair<GrayImage, GrayImage>> batch;
  for (int i = 0; i < 30; ++i) batch.emplace_back(random_labels(16, 12, 5, 0.1), random_labels(16, 12, 5, 0.1));
  ConfusionMatrix reference(5);
  for (const auto& [g, p] : batch) accumulate(reference, g, p);
  for (int round = 0; round < 10; ++round) {
    std::shuffle(batch.begin(), batch.end(), rng);
    const std::size_t cut = rng() % batch.size();
    ConfusionMatrix left(5), right(5);
    for (std::size_t i = 0; i < batch.size(); ++i) accumulate(i < cut ? left : right, batch[i].first, batch[i].second);
    right += left;
    c.expect(right == reference, "shuffled accumulation changed the matrix");
  }
  return c.done(std::to_string(compared) + " random pairs equal to per-pixel sets within 1e-12; 10 shuffled batches identical");
}

Outcome codecs() {
  Checks c;
  std::mt19937_64 rng(404);
  for (int t = 0; t < 1000; ++t) {
    const std::uint32_t w = 1 + rng() % 64, h = 1 + rng() % 64;
    Bitmask m(w, h, 0);
    std::bernoulli_distribution on(std::uniform_real_distribution<double>(0, 1)(rng));
    for (auto& p : m.pixels) p = on(rng);
    const Rle rle = rle_encode(m);
    std::vector<std::uint8_t> expanded;
    for (std::size_t i = 0; i < rle.size(); ++i) expanded.insert(expanded.end(), rle[i], std::uint8_t(i % 2));
    c.expect(expanded == m.pixels, "RLE encoding wrong for raster " + std::to_string(t));
    c.expect(rle_decode(rle, w, h) == m, "RLE round trip failed for raster " + std::to_string(t));
  }
  TempDir dir;
  for (int t = 0; t < 1000; ++t) {
    const std::uint32_t w = 1 + rng() % 48, h = 1 + rng() % 48;
    GrayImage g(w, h);
    for (auto& p : g.pixels) p = static_cast<std::uint8_t>(rng());
    c.expect(decode_png_gray(encode_png_gray(g)) == g, "gray PNG round trip failed for raster " + std::to_string(t));
    const RgbImage rgb = comrp::testing::random_rgb(w, h, rng);
    write_png_rgb(dir / "c.png", rgb);
    c.expect(read_png_rgb(dir / "c.png") == rgb, "RGB PNG round trip failed for raster " + std::to_string(t));
  }
  return c.done("1000 RLE masks, 1000 gray and 1000 RGB PNG rasters round trip exactly");
}

Outcome synthetic_end_to_end() {
  Checks c;
  TempDir dir;
  const double miou0 = cli_pipeline(dir.path(), "");
  c.expect(miou0 >= 90.0, "clustering-stage mIoU " + fmt(miou0) + " < 90");

  const std::string cli_path = COMRP_CLI;
  const json loop = {
      {"max_iters", 1},
      {"plateau_eps", 0.0},
      {"trainer_cmd", "'" + cli_path + "' toy-train --manifest {manifest} --labels {labels} --out {out}"},
      {"predictor_cmd", "'" + cli_path + "' toy-predict --model {model} --images {images} --out {out}"},
      {"dev_gt_dir", "fx/gt"},
      {"workdir", "work"},
      {"manifest", "fx/manifest.json"},
      {"classes", "fx/classes.json"}};
  std::ofstream(dir / "loop.json") << loop.dump(2);
  cli("loop --config " + quote(dir / "loop.json") + " --labels " + quote(dir / "labels"), dir / "commands.log");
  std::vector<double> series;
  std::ifstream log(dir / "work/loop.jsonl");
  for (std::string line; std::getline(log, line);) series.push_back(json::parse(line).at("metrics").at("miou"));
  c.expect(series.size() == 2, "loop log has " + std::to_string(series.size()) + " records, expected 2");
  if (series.size() == 2) {
    c.expect(std::abs(series[0] - miou0) < 1e-9, "loop iteration 0 disagrees with eval");
    c.expect(series[1] >= series[0] - 1.0, "toy iteration mIoU " + fmt(series[1]) + " < " + fmt(series[0]) + " - 1");
  }
  return c.done("clustering-stage mIoU " + fmt(miou0) + ", after one toy iteration " +
                (series.size() == 2 ? fmt(series[1]) : std::string("?")));
}

Outcome over_segmentation() {
  Checks c;
  TempDir dir;
  const double miou = cli_pipeline(dir.path(), "--split-prob 1");
  const auto ds_masks = flatten(read_mask_dir(dir / "fx/masks"));
  c.expect(miou >= 85.0, "mIoU " + fmt(miou) + " < 85 with every object split");
  return c.done("split_prob 1.0: " + std::to_string(ds_masks.size()) + " masks, mIoU " + fmt(miou));
}

Outcome coverage_and_filter() {
  Checks c;
  SynthConfig cfg;
  cfg.seed = 7;
  cfg.n_images = 40;
  cfg.mask_noise.split_prob = 0.3;
  cfg.mask_noise.dilate_px = 2;
  const auto ds = generate(cfg);
  const auto masks = flatten(ds.masks);
  const auto cov = compute_coverage(ds.images, masks);

  double sum = 0.0;
  for (std::size_t i = 0; i < ds.images.size(); ++i) {
    const auto& im = ds.images[i];
    std::vector<std::uint8_t> covered(std::size_t(im.width) * im.height, 0);
    for (const auto& m : ds.masks[i].masks) {
      // Brute force: expand the row-major RLE run by run.
      std::size_t p = 0;
      for (std::size_t r = 0; r < m.rle.size(); ++r)
        for (std::uint32_t j = 0; j < m.rle[r]; ++j, ++p)
          if (r % 2) covered[p] = 1;
    }
    const auto count = std::count(covered.begin(), covered.end(), 1);
    const double expected = 100.0 * double(count) / double(covered.size());
    c.expect(cov.per_image.at(im.image_id) == expected, "coverage of " + im.image_id + " differs from brute force");
    sum += expected;
  }
  c.expect(cov.dataset_mean == sum / double(ds.images.size()), "dataset mean coverage differs");

  std::uint32_t theta = UINT32_MAX;
  for (const auto& m : masks) theta = std::min(theta, m.area);
  const auto filtered = filter_by_area(masks, theta);
  std::size_t expect_kept = 0;
  for (const auto& m : masks) expect_kept += m.area > theta;
  c.expect(filtered.kept.size() == expect_kept, "filter kept the wrong number of masks");
  c.expect(filtered.kept.size() + filtered.dropped.size() == masks.size(), "filter lost masks");
  c.expect(!filtered.dropped.empty(), "the smallest mask was not dropped");
  for (const auto& m : filtered.dropped) c.expect(m.area <= theta, "dropped a mask above theta");
  for (const auto& m : filtered.kept) c.expect(m.area > theta, "kept a mask at or below theta");
  return c.done(std::to_string(ds.images.size()) + " images match brute-force unions (mean " +
                fmt(cov.dataset_mean) + "%); theta=" + std::to_string(theta) + " dropped " +
                std::to_string(filtered.dropped.size()) + " of " + std::to_string(masks.size()));
}

Outcome loop_mechanics() {
  Checks c;
  TempDir dir;
  fs::create_directories(dir / "gt");
  write_png_gray(dir / "gt/img.png", GrayImage(100, 100, 0));
  write_manifest(dir / "manifest.json", {{"img", 100, 100, "img.png"}});
  // Painting the first n of 10000 pixels scores mIoU n / 100.
  const auto paint = [](const fs::path& d, std::size_t n) {
    fs::create_directories(d);
    GrayImage g(100, 100, kIgnoreLabel);
    std::fill(g.pixels.begin(), g.pixels.begin() + std::ptrdiff_t(n), 0);
    write_png_gray(d / "img.png", g);
  };
  paint(dir / "initial", 7204);

  LoopConfig cfg;
  cfg.plateau_eps = 0.1;
  cfg.trainer_cmd = "cp {labels}/*.png {out}/ # {manifest}";
  cfg.predictor_cmd = "cp {model}/*.png {out}/ # {images}";
  cfg.dev_gt_dir = dir / "gt";
  cfg.images_manifest = dir / "manifest.json";
  cfg.classes = {"road"};
  const std::vector<std::size_t> series{7204, 8864, 8923, 8930};
  const auto scripted = [&](const LoopConfig& lc, std::uint32_t iter, const fs::path&) {
    IterationRecord r;
    r.label_dir = "iter_" + std::to_string(iter) + "/labels";
    paint(lc.workdir / r.label_dir, series.at(iter));
    r.label_hash = sha256_tree(lc.workdir / r.label_dir);
    r.metrics = report(evaluate_dirs(*lc.dev_gt_dir, lc.workdir / r.label_dir, 1));
    return r;
  };

  cfg.max_iters = 2;
  cfg.workdir = dir / "series";
  const auto result = run_loop(cfg, dir / "initial", scripted);
  c.expect(result.history.size() == 3, "series [72.04, 88.64, 89.23] did not stop at max_iters = 2");
  c.expect(!plateau_reached(72.04, 88.64, cfg.plateau_eps) && !plateau_reached(88.64, 89.23, cfg.plateau_eps),
           "plateau rule fires inside the improving series");
  if (result.history.size() == 3) {
    c.expect(std::abs(result.history[2].metrics->miou - 89.23) < 1e-9, "series mIoU values not reproduced");
  }

  cfg.max_iters = 5;
  cfg.workdir = dir / "flat";
  const auto flat = run_loop(cfg, dir / "initial");
  c.expect(flat.history.size() == 2, "non-improving trainer ran " + std::to_string(flat.history.size() - 1) +
                                         " iterations instead of 1");
  c.expect(flat.best == 0, "non-improving run should keep iteration 0 as best");

  cfg.max_iters = 3;
  cfg.workdir = dir / "resume";
  run_loop(cfg, dir / "initial", scripted);
  const std::string full_log = slurp(cfg.workdir / "loop.jsonl");
  int calls = 0;
  const auto counting = [&](const LoopConfig& lc, std::uint32_t iter, const fs::path& p) {
    ++calls;
    return scripted(lc, iter, p);
  };
  const auto again = run_loop(cfg, dir / "initial", counting);
  c.expect(calls == 0 && again.resumed == 4, "resume reran completed iterations");
  c.expect(slurp(cfg.workdir / "loop.jsonl") == full_log, "resume changed the iteration log");

  // Interrupted after iteration 1: the resumed log keeps the surviving lines byte-for-byte.
  cfg.workdir = dir / "interrupted";
  const auto crash = [&](const LoopConfig& lc, std::uint32_t iter, const fs::path& p) -> IterationRecord {
    if (iter == 2) throw std::runtime_error("interrupted");
    return scripted(lc, iter, p);
  };
  try {
    run_loop(cfg, dir / "initial", crash);
  } catch (const std::runtime_error&) {
  }
  const std::string partial = slurp(cfg.workdir / "loop.jsonl");
  calls = 0;
  run_loop(cfg, dir / "initial", counting);
  const std::string resumed = slurp(cfg.workdir / "loop.jsonl");
  c.expect(calls == 2, "interrupted run resumed with " + std::to_string(calls) + " new iterations, expected 2");
  c.expect(resumed.compare(0, partial.size(), partial) == 0, "resume rewrote earlier log lines");
  return c.done("series stops at max_iters only; flat trainer stops after 1 iteration; resume keeps logs byte-identical");
}

Outcome determinism() {
  Checks c;
  TempDir a, b, d;
  cli_pipeline(a.path(), "--split-prob 0.3 --dilate 1", "1");
  cli_pipeline(b.path(), "--split-prob 0.3 --dilate 1", "4");
  cli_pipeline(d.path(), "--split-prob 0.3 --dilate 1", "4");
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a.path())) {
    if (!e.is_regular_file() || e.path().filename() == "commands.log") continue;
    const auto rel = fs::relative(e.path(), a.path());
    const std::string bytes = slurp(e.path());
    c.expect(fs::exists(b.path() / rel) && slurp(b.path() / rel) == bytes,
             rel.string() + " differs between 1 and 4 threads");
    c.expect(fs::exists(d.path() / rel) && slurp(d.path() / rel) == bytes, rel.string() + " differs between runs");
    ++files;
  }
  c.expect(files > 100, "pipeline produced only " + std::to_string(files) + " artifacts");
  return c.done(std::to_string(files) + " artifacts byte-identical across 3 runs (1 and 4 threads)");
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"clustering oracle suite", 60.0, clustering_oracles},
      {"eigensolver residual and orthonormality", 10.0, eigensolver},
      {"metrics oracle and batch-order independence", 0.0, metrics_oracle},
      {"RLE and PNG codecs", 0.0, codecs},
      {"synthetic end-to-end", 300.0, synthetic_end_to_end},
      {"over-segmentation robustness", 0.0, over_segmentation},
      {"coverage and area filter", 0.0, coverage_and_filter},
      {"loop mechanics", 0.0, loop_mechanics},
      {"determinism", 0.0, determinism},
  };
  int failures = 0;
  for (const auto& crit : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = crit.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (o.pass && crit.time_limit_s > 0 && secs > crit.time_limit_s) {
      o = {false, "took " + fmt(secs) + " s, limit " + fmt(crit.time_limit_s, 0) + " s"};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << crit.name << ": " << o.detail << " [" << fmt(secs) << " s]"
              << std::endl;
  }
  std::cout << (failures ? std::to_string(failures) + " criteria failed" : std::string("all criteria passed"))
            << std::endl;
  return failures ? 1 : 0;
}
