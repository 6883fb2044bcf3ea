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

#include "comrp/feature_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include <nlohmann/json.hpp>

#include "comrp/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "feature packs assume a little-endian host");

namespace comrp {

namespace {

constexpr char kMagic[4] = {'C', 'M', 'R', 'P'};
constexpr std::size_t kHeaderSize = 4 + 4 + 4 + 8;

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T get(std::span<const std::uint8_t> bytes, std::size_t offset) {
  T v;
  std::memcpy(&v, bytes.data() + offset, sizeof(T));
  return v;
}

}  // namespace

void validate_pack(const FeaturePack& pack) {
  if (pack.dim == 0) throw DimMismatch("feature dim must be >= 1");
  if (pack.matrix.size() != pack.region_ids.size() * std::size_t(pack.dim)) {
    throw DimMismatch("matrix has " + std::to_string(pack.matrix.size()) + " values, expected " +
                      std::to_string(pack.region_ids.size()) + " x " + std::to_string(pack.dim));
  }
  for (std::size_t r = 0; r < pack.region_ids.size(); ++r) {
    for (const float v : pack.row(r)) {
      if (!std::isfinite(v)) throw NonFiniteValue(r);
    }
  }
  std::set<std::string> seen;
  for (const auto& id : pack.region_ids) {
    if (!seen.insert(id).second) throw FormatError("duplicate region id '" + id + "'");
  }
}

std::vector<std::uint8_t> serialize_pack(const FeaturePack& pack) {
  validate_pack(pack);
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderSize + pack.matrix.size() * 4 + 64 * pack.region_ids.size());
  out.insert(out.end(), kMagic, kMagic + 4);
  put<std::uint32_t>(out, pack.version);
  put<std::uint32_t>(out, pack.dim);
  put<std::uint64_t>(out, pack.count());
  const auto* m = reinterpret_cast<const std::uint8_t*>(pack.matrix.data());
  out.insert(out.end(), m, m + pack.matrix.size() * sizeof(float));
  const std::string trailer = json{{"region_ids", pack.region_ids}, {"source_tag", pack.source_tag}}.dump();
  out.insert(out.end(), trailer.begin(), trailer.end());
  put<std::uint64_t>(out, trailer.size());
  return out;
}

FeaturePack deserialize_pack(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderSize + 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw BadMagic("not a CMRP feature pack");
  }
  FeaturePack pack;
  pack.version = get<std::uint32_t>(bytes, 4);
  if (pack.version != kFeaturePackVersion) {
    throw FormatError("unsupported feature pack version " + std::to_string(pack.version));
  }
  pack.dim = get<std::uint32_t>(bytes, 8);
  const auto count = get<std::uint64_t>(bytes, 12);
  if (pack.dim == 0) throw DimMismatch("feature dim must be >= 1");
  const auto trailer_len = get<std::uint64_t>(bytes, bytes.size() - 8);
  const std::uint64_t matrix_bytes = count * pack.dim * sizeof(float);
  if (count > bytes.size() || kHeaderSize + matrix_bytes + trailer_len + 8 != bytes.size()) {
    throw DimMismatch("file size does not match count=" + std::to_string(count) +
                      " dim=" + std::to_string(pack.dim));
  }
  pack.matrix.resize(count * pack.dim);
  std::memcpy(pack.matrix.data(), bytes.data() + kHeaderSize, matrix_bytes);
  for (std::uint64_t r = 0; r < count; ++r) {
    for (std::uint32_t c = 0; c < pack.dim; ++c) {
      if (!std::isfinite(pack.matrix[r * pack.dim + c])) throw NonFiniteValue(r);
    }
  }
  try {
    const auto* t = reinterpret_cast<const char*>(bytes.data() + kHeaderSize + matrix_bytes);
    const json trailer = json::parse(t, t + trailer_len);
    pack.region_ids = trailer.at("region_ids").get<std::vector<std::string>>();
    pack.source_tag = trailer.at("source_tag").get<std::string>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad feature pack trailer: ") + e.what());
  }
  if (pack.region_ids.size() != count) {
    throw DimMismatch("trailer lists " + std::to_string(pack.region_ids.size()) + " ids for " +
                      std::to_string(count) + " rows");
  }
  validate_pack(pack);
  return pack;
}

void write_pack(const fs::path& path, const FeaturePack& pack) {
  const auto bytes = serialize_pack(pack);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

FeaturePack read_pack(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return deserialize_pack(bytes);
}

}  // namespace comrp
