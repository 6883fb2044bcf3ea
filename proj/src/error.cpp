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

#include "comrp/error.hpp"

namespace comrp {

namespace {

std::string join_ids(const std::vector<std::uint32_t>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(ids[i]);
  }
  return out;
}

}  // namespace

NonFiniteValue::NonFiniteValue(std::uint64_t row)
    : Error("NonFiniteValue", "non-finite feature value in row " + std::to_string(row)), row_(row) {}

UnmappedCluster::UnmappedCluster(std::vector<std::uint32_t> missing)
    : Error("UnmappedCluster", "merge map does not cover clusters [" + join_ids(missing) + "]"),
      missing_(std::move(missing)) {}

TrainerFailed::TrainerFailed(int exit_code, std::string stderr_tail)
    : Error("TrainerFailed",
            "external command exited with code " + std::to_string(exit_code) + ": " + stderr_tail),
      exit_code_(exit_code),
      stderr_tail_(std::move(stderr_tail)) {}

BadPrediction::BadPrediction(std::string image_id, std::string reason)
    : Error("BadPrediction", "bad prediction for image '" + image_id + "': " + reason),
      image_id_(std::move(image_id)),
      reason_(std::move(reason)) {}

}  // namespace comrp
