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

#include "comrp/selftrain.hpp"

#include <fcntl.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include "comrp/content_hash.hpp"
#include "comrp/error.hpp"
#include "comrp/parallel.hpp"
#include "comrp/png_io.hpp"

extern char** environ;

namespace fs = std::filesystem;
using nlohmann::json;

namespace comrp {

// --- manifest ----------------------------------------------------------------

TrainManifest make_manifest(const std::vector<ImageRecord>& images, const fs::path& label_dir,
                            std::vector<std::string> classes, std::uint64_t split_seed, double val_fraction) {
  if (val_fraction < 0.0 || val_fraction > 1.0) throw ConfigError("val_fraction must lie in [0,1]");
  std::vector<ManifestItem> items;
  for (const auto& im : images) {
    items.push_back({im.image_id, fs::absolute(im.path), fs::absolute(label_dir / (im.image_id + ".png"))});
  }
  const auto by_id = [](const ManifestItem& a, const ManifestItem& b) { return a.image_id < b.image_id; };
  std::sort(items.begin(), items.end(), by_id);
  std::mt19937_64 rng(split_seed);
  std::shuffle(items.begin(), items.end(), rng);
  const auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(items.size()) * val_fraction));

  TrainManifest m;
  m.classes = std::move(classes);
  m.split_seed = split_seed;
  m.val_fraction = val_fraction;
  m.val.assign(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(n_val));
  m.train.assign(items.begin() + static_cast<std::ptrdiff_t>(n_val), items.end());
  std::sort(m.train.begin(), m.train.end(), by_id);
  std::sort(m.val.begin(), m.val.end(), by_id);
  return m;
}

namespace {

json items_json(const std::vector<ManifestItem>& items) {
  json out = json::array();
  for (const auto& it : items) {
    out.push_back({{"image_id", it.image_id}, {"image", it.image.string()}, {"label", it.label.string()}});
  }
  return out;
}

std::vector<ManifestItem> items_from_json(const json& j) {
  std::vector<ManifestItem> out;
  for (const auto& e : j) {
    out.push_back({e.at("image_id").get<std::string>(), e.at("image").get<std::string>(),
                   e.at("label").get<std::string>()});
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("short write to " + path.string());
}

}  // namespace

void write_train_manifest(const fs::path& path, const TrainManifest& m) {
  const json j = {{"classes", m.classes},
                  {"n_classes", m.classes.size()},
                  {"split_seed", m.split_seed},
                  {"val_fraction", m.val_fraction},
                  {"train", items_json(m.train)},
                  {"val", items_json(m.val)}};
  write_text(path, j.dump(2) + "\n");
}

TrainManifest read_train_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  TrainManifest m;
  try {
    const json j = json::parse(in);
    m.classes = j.at("classes").get<std::vector<std::string>>();
    m.split_seed = j.value("split_seed", std::uint64_t{0});
    m.val_fraction = j.value("val_fraction", 0.0);
    m.train = items_from_json(j.at("train"));
    m.val = items_from_json(j.value("val", json::array()));
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return m;
}

TrainManifest emit_manifest(const std::vector<ImageRecord>& images, const fs::path& label_dir,
                            std::vector<std::string> classes, std::uint64_t split_seed, double val_fraction,
                            const fs::path& out) {
  TrainManifest m = make_manifest(images, label_dir, std::move(classes), split_seed, val_fraction);
  write_train_manifest(out, m);
  return m;
}

// --- config ------------------------------------------------------------------

void validate_loop_config(const LoopConfig& cfg) {
  if (cfg.max_iters == 0) throw ConfigError("max_iters must be >= 1");
  if (cfg.classes.empty()) throw ConfigError("loop config needs at least one class");
  for (const char* ph : {"{manifest}", "{labels}", "{out}"}) {
    if (cfg.trainer_cmd.find(ph) == std::string::npos) {
      throw ConfigError(std::string("trainer_cmd lacks placeholder ") + ph);
    }
  }
  for (const char* ph : {"{model}", "{images}", "{out}"}) {
    if (cfg.predictor_cmd.find(ph) == std::string::npos) {
      throw ConfigError(std::string("predictor_cmd lacks placeholder ") + ph);
    }
  }
}

LoopConfig read_loop_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  const fs::path base = path.parent_path();
  const auto resolve = [&](const std::string& p) { return fs::path(p).is_relative() ? base / p : fs::path(p); };
  LoopConfig cfg;
  try {
    const json j = json::parse(in);
    cfg.max_iters = j.value("max_iters", cfg.max_iters);
    cfg.plateau_eps = j.value("plateau_eps", cfg.plateau_eps);
    cfg.trainer_cmd = j.value("trainer_cmd", std::string{});
    cfg.predictor_cmd = j.value("predictor_cmd", std::string{});
    if (j.contains("dev_gt_dir") && !j.at("dev_gt_dir").is_null()) {
      cfg.dev_gt_dir = resolve(j.at("dev_gt_dir").get<std::string>());
    }
    cfg.workdir = resolve(j.at("workdir").get<std::string>());
    cfg.images_manifest = resolve(j.at("manifest").get<std::string>());
    const auto& classes = j.at("classes");
    if (classes.is_array()) {
      cfg.classes = classes.get<std::vector<std::string>>();
    } else {
      const fs::path cp = resolve(classes.get<std::string>());
      std::ifstream cin(cp);
      if (!cin) throw IoError("cannot open " + cp.string());
      const json cj = json::parse(cin);
      cfg.classes = (cj.is_array() ? cj : cj.at("classes")).get<std::vector<std::string>>();
    }
    cfg.split_seed = j.value("split_seed", cfg.split_seed);
    cfg.val_fraction = j.value("val_fraction", cfg.val_fraction);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  if (const char* t = std::getenv("COMRP_TRAINER_CMD"); t && *t) cfg.trainer_cmd = t;
  if (const char* p = std::getenv("COMRP_PREDICTOR_CMD"); p && *p) cfg.predictor_cmd = p;
  validate_loop_config(cfg);
  return cfg;
}

// --- records -----------------------------------------------------------------

json to_json(const IterationRecord& r) {
  return {{"iter", r.iter},
          {"label_dir", r.label_dir},
          {"label_hash", r.label_hash},
          {"model_ref", r.model_ref},
          {"metrics", r.metrics ? to_json(*r.metrics) : json(nullptr)},
          {"wall_time", r.wall_time}};
}

IterationRecord iteration_record_from_json(const json& j) {
  IterationRecord r;
  r.iter = j.at("iter").get<std::uint32_t>();
  r.label_dir = j.at("label_dir").get<std::string>();
  r.label_hash = j.at("label_hash").get<std::string>();
  r.model_ref = j.value("model_ref", std::string{});
  r.wall_time = j.value("wall_time", 0.0);
  if (j.contains("metrics") && !j.at("metrics").is_null()) {
    const auto& m = j.at("metrics");
    MetricsReport rep;
    rep.class_names = m.value("classes", std::vector<std::string>{});
    rep.per_class_iou = m.at("per_class_iou").get<std::vector<double>>();
    rep.per_class_presence = m.at("per_class_presence").get<std::vector<bool>>();
    rep.per_class_accuracy = m.value("per_class_accuracy", std::vector<double>{});
    rep.miou = m.at("miou").get<double>();
    rep.pixel_accuracy = m.at("pixel_accuracy").get<double>();
    r.metrics = std::move(rep);
  }
  return r;
}

// --- processes ---------------------------------------------------------------

std::string expand_command(const std::string& tmpl, const std::vector<std::pair<std::string, std::string>>& values) {
  const auto quote = [](const std::string& s) {
    std::string q = "'";
    for (const char c : s) {
      if (c == '\'') {
        q += "'\\''";
      } else {
        q += c;
      }
    }
    return q + "'";
  };
  std::string out = tmpl;
  for (const auto& [name, value] : values) {
    const std::string ph = "{" + name + "}";
    const std::string rep = quote(value);
    for (std::size_t pos = out.find(ph); pos != std::string::npos; pos = out.find(ph, pos + rep.size())) {
      out.replace(pos, ph.size(), rep);
    }
  }
  return out;
}

int run_shell(const std::string& command, const fs::path& stdout_file, const fs::path& stderr_file) {
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_addopen(&actions, STDIN_FILENO, "/dev/null", O_RDONLY, 0);
  posix_spawn_file_actions_addopen(&actions, STDOUT_FILENO, stdout_file.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  posix_spawn_file_actions_addopen(&actions, STDERR_FILENO, stderr_file.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  const char* argv[] = {"/bin/sh", "-c", command.c_str(), nullptr};
  pid_t pid = 0;
  const int rc = posix_spawn(&pid, "/bin/sh", &actions, nullptr, const_cast<char* const*>(argv), environ);
  posix_spawn_file_actions_destroy(&actions);
  if (rc != 0) throw IoError("posix_spawn failed with code " + std::to_string(rc));
  int status = 0;
  while (waitpid(pid, &status, 0) < 0) {
    if (errno != EINTR) throw IoError("waitpid failed");
  }
  if (WIFEXITED(status)) return WEXITSTATUS(status);
  if (WIFSIGNALED(status)) return 128 + WTERMSIG(status);
  return -1;
}

namespace {

std::string tail_of(const fs::path& path, std::size_t max_bytes = 2000) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return {};
  std::stringstream ss;
  ss << in.rdbuf();
  std::string s = ss.str();
  if (s.size() > max_bytes) s = s.substr(s.size() - max_bytes);
  return s;
}

std::string iter_dir_name(std::uint32_t iter) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "iter_%03u", iter);
  return buf;
}

void run_checked(const std::string& cmd, const fs::path& dir, const std::string& stem) {
  const fs::path err = dir / (stem + ".stderr");
  const int code = run_shell(cmd, dir / (stem + ".stdout"), err);
  if (code != 0) throw TrainerFailed(code, tail_of(err));
}

std::optional<MetricsReport> score(const LoopConfig& cfg, const fs::path& labels) {
  if (!cfg.dev_gt_dir) return std::nullopt;
  const auto conf = evaluate_dirs(*cfg.dev_gt_dir, labels, static_cast<std::uint32_t>(cfg.classes.size()));
  return report(conf, cfg.classes);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

void validate_label_dir(const std::vector<ImageRecord>& images, const fs::path& dir, std::uint32_t n_classes) {
  parallel_for(images.size(), [&](std::size_t i) {
    const auto& im = images[i];
    const fs::path p = dir / (im.image_id + ".png");
    if (!fs::exists(p)) throw BadPrediction(im.image_id, "missing " + p.string());
    GrayImage g;
    try {
      g = read_png_gray(p);
    } catch (const Error& e) {
      throw BadPrediction(im.image_id, e.what());
    }
    if (g.width != im.width || g.height != im.height) {
      throw BadPrediction(im.image_id, "size " + std::to_string(g.width) + "x" + std::to_string(g.height) +
                                           " != image size " + std::to_string(im.width) + "x" +
                                           std::to_string(im.height));
    }
    for (const std::uint8_t v : g.pixels) {
      if (v != 255 && v >= n_classes) {
        throw BadPrediction(im.image_id, "label " + std::to_string(v) + " outside [0," +
                                             std::to_string(n_classes) + ") and not 255");
      }
    }
  });
}

IterationRecord run_iteration(const LoopConfig& cfg, std::uint32_t iter, const fs::path& current_labels) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto images = read_manifest(cfg.images_manifest);
  const std::string name = iter_dir_name(iter);
  const fs::path dir = cfg.workdir / name;
  fs::remove_all(dir);
  fs::create_directories(dir);

  const fs::path manifest = dir / "manifest.json";
  emit_manifest(images, current_labels, cfg.classes, cfg.split_seed, cfg.val_fraction, manifest);
  const fs::path model = dir / "model";
  const fs::path labels = dir / "labels";
  fs::create_directories(model);
  fs::create_directories(labels);

  run_checked(expand_command(cfg.trainer_cmd, {{"manifest", fs::absolute(manifest).string()},
                                               {"labels", fs::absolute(current_labels).string()},
                                               {"out", fs::absolute(model).string()}}),
              dir, "trainer");
  run_checked(expand_command(cfg.predictor_cmd, {{"model", fs::absolute(model).string()},
                                                 {"images", fs::absolute(cfg.images_manifest).string()},
                                                 {"out", fs::absolute(labels).string()}}),
              dir, "predictor");
  validate_label_dir(images, labels, static_cast<std::uint32_t>(cfg.classes.size()));

  IterationRecord r;
  r.iter = iter;
  r.label_dir = name + "/labels";
  r.label_hash = sha256_tree(labels);
  r.model_ref = name + "/model";
  r.metrics = score(cfg, labels);
  r.wall_time = seconds_since(t0);
  return r;
}

bool plateau_reached(double prev_miou, double cur_miou, double eps) { return cur_miou - prev_miou < eps; }

namespace {

bool should_stop(const std::vector<IterationRecord>& history, const LoopConfig& cfg) {
  if (history.size() >= std::size_t(cfg.max_iters) + 1) return true;
  if (history.size() < 2) return false;
  const auto& prev = history[history.size() - 2].metrics;
  const auto& cur = history.back().metrics;
  return prev && cur && plateau_reached(prev->miou, cur->miou, cfg.plateau_eps);
}

std::size_t best_of(const std::vector<IterationRecord>& history) {
  std::size_t best = history.size() - 1;
  bool have = false;
  for (std::size_t i = 0; i < history.size(); ++i) {
    if (!history[i].metrics) continue;
    if (!have || history[i].metrics->miou > history[best].metrics->miou) {
      best = i;
      have = true;
    }
  }
  return best;
}

void copy_tree(const fs::path& from, const fs::path& to) {
  fs::remove_all(to);
  fs::create_directories(to);
  fs::copy(from, to, fs::copy_options::recursive | fs::copy_options::overwrite_existing);
}

}  // namespace

LoopResult run_loop(const LoopConfig& cfg, const fs::path& initial_labels, const IterationRunner& runner) {
  validate_loop_config(cfg);
  fs::create_directories(cfg.workdir);
  const fs::path log_path = cfg.workdir / "loop.jsonl";

  // Resume: keep the longest prefix of logged iterations whose label
  // directories still hash to the recorded value.
  LoopResult result;
  std::vector<std::string> kept_lines;
  if (fs::exists(log_path)) {
    std::ifstream in(log_path);
    std::string line;
    const std::string initial_hash = sha256_tree(initial_labels);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      IterationRecord r;
      try {
        r = iteration_record_from_json(json::parse(line));
      } catch (const std::exception&) {
        break;
      }
      const fs::path dir = cfg.workdir / r.label_dir;
      if (r.iter != result.history.size() || !fs::is_directory(dir) || sha256_tree(dir) != r.label_hash) break;
      if (r.iter == 0 && r.label_hash != initial_hash) break;
      kept_lines.push_back(line);
      result.history.push_back(std::move(r));
    }
    std::string rewritten;
    for (const auto& l : kept_lines) rewritten += l + "\n";
    write_text(log_path, rewritten);
  }
  result.resumed = result.history.size();

  const auto append = [&](const IterationRecord& r) {
    std::ofstream out(log_path, std::ios::app | std::ios::binary);
    if (!out) throw IoError("cannot append to " + log_path.string());
    out << to_json(r).dump() << '\n';
  };

  if (result.history.empty()) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::string name = iter_dir_name(0);
    copy_tree(initial_labels, cfg.workdir / name / "labels");
    IterationRecord r0;
    r0.iter = 0;
    r0.label_dir = name + "/labels";
    r0.label_hash = sha256_tree(cfg.workdir / r0.label_dir);
    r0.metrics = score(cfg, cfg.workdir / r0.label_dir);
    r0.wall_time = seconds_since(t0);
    append(r0);
    result.history.push_back(std::move(r0));
  }

  while (!should_stop(result.history, cfg)) {
    const auto& prev = result.history.back();
    const auto iter = static_cast<std::uint32_t>(result.history.size());
    IterationRecord r = runner(cfg, iter, cfg.workdir / prev.label_dir);
    r.iter = iter;
    append(r);
    result.history.push_back(std::move(r));
  }
  result.best = best_of(result.history);
  return result;
}

}  // namespace comrp
