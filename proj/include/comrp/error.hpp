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
#include <stdexcept>
#include <string>
#include <vector>

namespace comrp {

/// Base of every error raised by the toolkit. `kind()` is a stable
/// machine-readable tag (used by the CLI and the Python bindings).
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define COMRP_DEFINE_ERROR(Name)                                  \
  class Name : public Error {                                     \
   public:                                                        \
    explicit Name(const std::string& what) : Error(#Name, what) {} \
  };

// mask_ingest
COMRP_DEFINE_ERROR(LengthMismatch)
COMRP_DEFINE_ERROR(UnknownImage)
COMRP_DEFINE_ERROR(EmptyMask)
COMRP_DEFINE_ERROR(InvalidMask)
// roi_tiler
COMRP_DEFINE_ERROR(DegenerateBox)
COMRP_DEFINE_ERROR(TileExceedsImage)
// feature_io
COMRP_DEFINE_ERROR(BadMagic)
COMRP_DEFINE_ERROR(DimMismatch)
COMRP_DEFINE_ERROR(BadShape)
// clustering
COMRP_DEFINE_ERROR(KTooLarge)
COMRP_DEFINE_ERROR(NotSymmetric)
COMRP_DEFINE_ERROR(NoConvergence)
// labeling
COMRP_DEFINE_ERROR(ForeignMask)
COMRP_DEFINE_ERROR(BadDepth)
COMRP_DEFINE_ERROR(InvalidMergeMap)
// metrics
COMRP_DEFINE_ERROR(ShapeMismatch)
COMRP_DEFINE_ERROR(LabelOutOfRange)
COMRP_DEFINE_ERROR(EmptyMatrix)
// generic
COMRP_DEFINE_ERROR(IoError)
COMRP_DEFINE_ERROR(FormatError)
COMRP_DEFINE_ERROR(ConfigError)

#undef COMRP_DEFINE_ERROR

class NonFiniteValue : public Error {
 public:
  explicit NonFiniteValue(std::uint64_t row);
  std::uint64_t row() const noexcept { return row_; }

 private:
  std::uint64_t row_;
};

class UnmappedCluster : public Error {
 public:
  explicit UnmappedCluster(std::vector<std::uint32_t> missing);
  const std::vector<std::uint32_t>& missing() const noexcept { return missing_; }

 private:
  std::vector<std::uint32_t> missing_;
};

class TrainerFailed : public Error {
 public:
  TrainerFailed(int exit_code, std::string stderr_tail);
  int exit_code() const noexcept { return exit_code_; }
  const std::string& stderr_tail() const noexcept { return stderr_tail_; }

 private:
  int exit_code_;
  std::string stderr_tail_;
};

class BadPrediction : public Error {
 public:
  BadPrediction(std::string image_id, std::string reason);
  const std::string& image_id() const noexcept { return image_id_; }
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::string image_id_;
  std::string reason_;
};

}  // namespace comrp
