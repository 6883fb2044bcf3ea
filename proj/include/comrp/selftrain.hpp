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
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "comrp/mask_ingest.hpp"
#include "comrp/metrics.hpp"

namespace comrp {

struct ManifestItem {
  std::string image_id;
  std::filesystem::path image;
  std::filesystem::path label;
};

/// Trainer input: (image, label) pairs with a seeded train/val split.
struct TrainManifest {
  std::vector<std::string> classes;
  std::uint64_t split_seed = 0;
  double val_fraction = 0.0;
  std::vector<ManifestItem> train;
  std::vector<ManifestItem> val;
};

/// Deterministic split: images sorted by id, shuffled with split_seed, the
/// first round(n * val_fraction) go to val; both lists are re-sorted by id.
TrainManifest make_manifest(const std::vector<ImageRecord>& images, const std::filesystem::path& label_dir,
                            std::vector<std::string> classes, std::uint64_t split_seed, double val_fraction);
void write_train_manifest(const std::filesystem::path& path, const TrainManifest& manifest);
TrainManifest read_train_manifest(const std::filesystem::path& path);
/// make_manifest + write; returns the manifest written.
TrainManifest emit_manifest(const std::vector<ImageRecord>& images, const std::filesystem::path& label_dir,
                            std::vector<std::string> classes, std::uint64_t split_seed, double val_fraction,
                            const std::filesystem::path& out);

struct LoopConfig {
  std::uint32_t max_iters = 3;
  double plateau_eps = 0.1;  // mIoU points
  std::string trainer_cmd;    // placeholders {manifest} {labels} {out}
  std::string predictor_cmd;  // placeholders {model} {images} {out}
  std::optional<std::filesystem::path> dev_gt_dir;
  std::filesystem::path workdir;
  std::filesystem::path images_manifest;
  std::vector<std::string> classes;
  std::uint64_t split_seed = 0;
  double val_fraction = 0.0;
};

/// Throws ConfigError when a template lacks a placeholder or max_iters is 0.
void validate_loop_config(const LoopConfig& cfg);

/// Reads loop.json. Relative paths resolve against the config's directory;
/// "classes" may be an inline list or a path to a JSON class list.
/// COMRP_TRAINER_CMD / COMRP_PREDICTOR_CMD override the templates.
LoopConfig read_loop_config(const std::filesystem::path& path);

struct IterationRecord {
  std::uint32_t iter = 0;      // 0 = clustering-stage labels
  std::string label_dir;       // relative to the workdir
  std::string label_hash;      // sha256 over the label directory
  std::string model_ref;       // opaque; empty for iteration 0
  std::optional<MetricsReport> metrics;
  double wall_time = 0.0;      // seconds
};

nlohmann::json to_json(const IterationRecord& r);
IterationRecord iteration_record_from_json(const nlohmann::json& j);

/// Replaces `{name}` placeholders with single-quoted shell words.
std::string expand_command(const std::string& tmpl, const std::vector<std::pair<std::string, std::string>>& values);

/// Runs `/bin/sh -c command` with stdout/stderr redirected to files.
/// Returns the exit status (128 + signal for signalled children).
int run_shell(const std::string& command, const std::filesystem::path& stdout_file,
              const std::filesystem::path& stderr_file);

/// Trains on `current_labels`, predicts every image into
/// `<workdir>/iter_NNN/labels`, validates the predictions and scores them
/// against the dev ground truth when configured.
/// Throws TrainerFailed or BadPrediction.
IterationRecord run_iteration(const LoopConfig& cfg, std::uint32_t iter, const std::filesystem::path& current_labels);

/// True when `cur` improves on `prev` by less than eps mIoU points.
bool plateau_reached(double prev_miou, double cur_miou, double eps);

using IterationRunner =
    std::function<IterationRecord(const LoopConfig&, std::uint32_t, const std::filesystem::path&)>;

struct LoopResult {
  std::vector<IterationRecord> history;
  std::size_t best = 0;  // index into history
  std::size_t resumed = 0;  // records reused from an existing workdir
};

/// Iteration 0 scores `initial_labels`; each further iteration trains on the
/// previous labels. Stops after max_iters training rounds or when mIoU
/// improves by less than plateau_eps. Records are appended to
/// `<workdir>/loop.jsonl` as they complete; an existing log whose label
/// hashes still match is resumed without rerunning those iterations.
LoopResult run_loop(const LoopConfig& cfg, const std::filesystem::path& initial_labels,
                    const IterationRunner& runner = run_iteration);

/// Checks every label PNG of `images` in `dir` (presence, size, range).
void validate_label_dir(const std::vector<ImageRecord>& images, const std::filesystem::path& dir,
                        std::uint32_t n_classes);

}  // namespace comrp
