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
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "comrp/feature_io.hpp"
#include "comrp/matrix.hpp"

namespace comrp {

enum class ClusterMethod { spectral, kmeans, kmedoids, agglomerative };
enum class AffinityKind { rbf_dense, knn_graph };
enum class Linkage { average, ward };

struct SpectralOptions {
  AffinityKind affinity = AffinityKind::rbf_dense;
  std::optional<double> fixed_sigma;  // unset: median pairwise distance
  std::uint32_t knn = 10;
};

struct ClusterConfig {
  ClusterMethod method = ClusterMethod::spectral;
  std::uint32_t k = 20;
  std::uint64_t seed = 0;
  SpectralOptions spectral;
  Linkage agglo_linkage = Linkage::average;
  std::uint32_t max_iter = 300;
  double tol = 1e-6;
  std::uint32_t max_exact_n = 8000;
  std::uint32_t n_init = 10;          // k-means++ restarts, best inertia kept
  std::uint32_t exemplar_count = 16;
  bool l2_normalize = false;
};

// --- algorithms on a dense sample matrix (rows = samples) ------------------

struct KMeansResult {
  std::vector<std::uint32_t> labels;
  Matrix centroids;
  double inertia = 0.0;
  std::uint32_t iterations = 0;
  std::vector<double> inertia_history;  // after each assignment step of the kept run
};

/// k-means++ seeding then Lloyd iterations until every centroid moves less
/// than `tol` or `max_iter` is reached, followed by Hartigan single-point
/// transfers that only ever lower inertia. `n_init` independent seedings are
/// derived from `seed`; the lowest-inertia run wins (earliest on ties).
/// Empty clusters are reseeded with the point farthest from its centroid.
KMeansResult kmeans(const Matrix& x, std::uint32_t k, std::uint64_t seed, std::uint32_t max_iter = 300,
                    double tol = 1e-6, std::uint32_t n_init = 10);

struct KMedoidsResult {
  std::vector<std::uint32_t> labels;
  std::vector<std::size_t> medoids;  // sample indices, ascending; labels index into this
  double cost = 0.0;                 // sum of Euclidean distances to the nearest medoid
  std::uint32_t swaps = 0;
  bool exact = false;                // medoids came from exhaustive search
};

/// Operation budget under which k-medoids enumerates every medoid set.
inline constexpr std::uint64_t kMedoidsExactBudget = 2'000'000;

/// PAM: greedy BUILD, then best-improvement SWAP until no swap lowers the
/// total distance. The seed only breaks exact ties during BUILD.
///
/// PAM is a local search. When C(n, k) * n * k <= exact_budget the medoid
/// set is instead found by exhaustive enumeration (lexicographically first
/// optimum), which is the global optimum and also a SWAP fixed point. Pass
/// exact_budget = 0 to always run PAM.
KMedoidsResult kmedoids(const Matrix& x, std::uint32_t k, std::uint64_t seed, std::uint32_t max_iter = 300,
                        std::uint64_t exact_budget = kMedoidsExactBudget);

/// Bottom-up merging with Lance-Williams updates. Ties go to the
/// lexicographically smallest (i, j) pair. Labels are ordered by each
/// cluster's smallest member index.
std::vector<std::uint32_t> agglomerative(const Matrix& x, std::uint32_t k, Linkage linkage);

struct SpectralResult {
  std::vector<std::uint32_t> labels;
  Matrix embedding;  // n x k, row-normalized
  double sigma = 0.0;
  std::size_t isolated_vertices = 0;
};

/// Median of the pairwise Euclidean distances (upper triangle).
double median_pairwise_distance(const Matrix& x);

/// Affinity matrix for spectral clustering; the diagonal is zero.
Matrix build_affinity(const Matrix& x, const SpectralOptions& options, double* sigma_out = nullptr);

/// Normalized spectral clustering of a precomputed symmetric, non-negative
/// affinity matrix: eigenvectors of the k smallest eigenvalues of
/// I - D^-1/2 A D^-1/2, rows scaled to unit length, then k-means.
SpectralResult spectral_from_affinity(const Matrix& affinity, std::uint32_t k, std::uint64_t seed,
                                      std::uint32_t max_iter = 300, double tol = 1e-6,
                                      std::uint32_t n_init = 10);

SpectralResult spectral(const Matrix& x, std::uint32_t k, std::uint64_t seed, const SpectralOptions& options,
                        std::uint32_t max_iter = 300, double tol = 1e-6, std::uint32_t n_init = 10);

// --- pack-level model --------------------------------------------------------

struct ClusterModel {
  std::map<std::string, std::uint32_t> assignments;  // region_id -> cluster id in [0, k)
  std::uint32_t k = 0;                               // non-empty clusters after compaction
  Matrix centroids;                                  // k x dim
  ClusterConfig config;
  double inertia = 0.0;
  std::map<std::uint32_t, std::vector<std::string>> exemplars;
  std::vector<std::string> warnings;

  std::vector<std::uint32_t> cluster_sizes() const;
};

/// Converts a pack to a dense matrix, optionally L2-normalizing each row.
Matrix pack_matrix(const FeaturePack& pack, bool l2_normalize = false);

/// Runs the configured method. Above `max_exact_n` samples, the quadratic
/// methods (spectral, kmedoids, agglomerative) run on a seeded uniform
/// subsample and the remaining regions join the nearest centroid.
ClusterModel cluster(const FeaturePack& pack, const ClusterConfig& config);

std::string to_string(ClusterMethod m);
ClusterMethod parse_method(const std::string& s);

nlohmann::json to_json(const ClusterConfig& config);
ClusterConfig cluster_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ClusterModel& model);
ClusterModel cluster_model_from_json(const nlohmann::json& j);

void write_model(const std::filesystem::path& path, const ClusterModel& model);
ClusterModel read_model(const std::filesystem::path& path);

}  // namespace comrp
