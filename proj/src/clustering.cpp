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

#include "comrp/clustering.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "comrp/eigen_symmetric.hpp"
#include "comrp/error.hpp"
#include "comrp/parallel.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace comrp {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

void check_k(std::uint32_t k, std::size_t n) {
  if (k == 0) throw ConfigError("k must be >= 1");
  if (k > n) throw KTooLarge("k=" + std::to_string(k) + " exceeds sample count " + std::to_string(n));
}

// Nearest centroid with ties to the lowest index.
std::pair<std::uint32_t, double> nearest(std::span<const double> p, const Matrix& centroids) {
  std::uint32_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.rows(); ++c) {
    const double d = squared_distance(p, centroids.row(c));
    if (d < best_d) {
      best_d = d;
      best = static_cast<std::uint32_t>(c);
    }
  }
  return {best, best_d};
}

Matrix member_means(const Matrix& x, const std::vector<std::uint32_t>& labels, std::uint32_t k,
                    std::vector<std::size_t>* counts_out = nullptr) {
  Matrix means(k, x.cols());
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto m = means.row(labels[i]);
    const auto p = x.row(i);
    for (std::size_t d = 0; d < x.cols(); ++d) m[d] += p[d];
    ++counts[labels[i]];
  }
  for (std::uint32_t c = 0; c < k; ++c) {
    if (counts[c] == 0) continue;
    for (double& v : means.row(c)) v /= static_cast<double>(counts[c]);
  }
  if (counts_out) *counts_out = std::move(counts);
  return means;
}

Matrix kmeanspp_init(const Matrix& x, std::uint32_t k, std::mt19937_64& rng) {
  const std::size_t n = x.rows();
  Matrix centers(k, x.cols());
  std::vector<bool> chosen(n, false);
  std::size_t first = rng() % n;
  chosen[first] = true;
  std::copy(x.row(first).begin(), x.row(first).end(), centers.row(0).begin());

  std::vector<double> d2(n);
  parallel_for(n, [&](std::size_t i) { d2[i] = squared_distance(x.row(i), centers.row(0)); });

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::uint32_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (const double v : d2) total += v;
    std::size_t pick = n;
    if (total > 0.0) {
      const double target = unit(rng) * total;
      double cum = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] <= 0.0) continue;
        cum += d2[i];
        pick = i;
        if (cum > target) break;
      }
    }
    if (pick == n) {
      // Fewer distinct points than k: take the first unused sample.
      pick = static_cast<std::size_t>(std::find(chosen.begin(), chosen.end(), false) - chosen.begin());
    }
    chosen[pick] = true;
    std::copy(x.row(pick).begin(), x.row(pick).end(), centers.row(c).begin());
    parallel_for(n, [&](std::size_t i) { d2[i] = std::min(d2[i], squared_distance(x.row(i), centers.row(c))); });
  }
  return centers;
}

KMeansResult lloyd(const Matrix& x, Matrix centroids, std::uint32_t max_iter, double tol) {
  const std::size_t n = x.rows();
  const auto k = static_cast<std::uint32_t>(centroids.rows());
  KMeansResult r;
  r.labels.assign(n, 0);
  std::vector<double> dist(n, 0.0);

  const auto assign = [&] {
    parallel_for(n, [&](std::size_t i) {
      const auto [c, d] = nearest(x.row(i), centroids);
      r.labels[i] = c;
      dist[i] = d;
    });
    double inertia = 0.0;
    for (const double d : dist) inertia += d;
    return inertia;
  };

  for (r.iterations = 0; r.iterations < max_iter; ++r.iterations) {
    const double inertia = assign();
    assert(r.inertia_history.empty() || inertia <= r.inertia_history.back() * (1 + 1e-9) + 1e-12);
    r.inertia_history.push_back(inertia);

    std::vector<std::size_t> counts(k, 0);
    for (const auto l : r.labels) ++counts[l];
    std::vector<bool> taken(n, false);
    for (std::uint32_t c = 0; c < k; ++c) {
      if (counts[c] > 0) continue;
      std::size_t far = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (taken[i] || dist[i] <= 0.0 || counts[r.labels[i]] <= 1) continue;
        if (far == n || dist[i] > dist[far]) far = i;
      }
      if (far == n) continue;  // nothing to donate; the cluster stays empty
      --counts[r.labels[far]];
      r.labels[far] = c;
      counts[c] = 1;
      dist[far] = 0.0;
      taken[far] = true;
    }

    Matrix updated = member_means(x, r.labels, k);
    double shift = 0.0;
    for (std::uint32_t c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        std::copy(centroids.row(c).begin(), centroids.row(c).end(), updated.row(c).begin());
        continue;
      }
      shift = std::max(shift, std::sqrt(squared_distance(updated.row(c), centroids.row(c))));
    }
    centroids = std::move(updated);
    if (shift < tol) {
      ++r.iterations;
      break;
    }
  }
  r.inertia = assign();
  r.centroids = std::move(centroids);
  return r;
}

/// Hartigan single-point transfers on top of a Lloyd solution: point i
/// moves from cluster a to b when n_b/(n_b+1) |x_i - mu_b|^2 is smaller than
/// n_a/(n_a-1) |x_i - mu_a|^2, i.e. when the move lowers the exact
/// within-cluster sum of squares. Points are visited in index order, so the
/// result is deterministic. Every Hartigan fixed point is a Lloyd fixed
/// point, but not conversely.
void hartigan_refine(const Matrix& x, KMeansResult& r, std::uint32_t max_passes) {
  const std::size_t n = x.rows();
  const auto k = static_cast<std::uint32_t>(r.centroids.rows());
  std::vector<std::size_t> counts;
  Matrix mu = member_means(x, r.labels, k, &counts);
  bool moved_any = false;
  for (std::uint32_t pass = 0; pass < max_passes; ++pass) {
    bool moved = false;
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint32_t a = r.labels[i];
      if (counts[a] <= 1) continue;
      const double na = static_cast<double>(counts[a]);
      const double removal = na / (na - 1.0) * squared_distance(x.row(i), mu.row(a));
      std::uint32_t best = a;
      double best_cost = removal * (1.0 - 1e-12);
      for (std::uint32_t b = 0; b < k; ++b) {
        if (b == a || counts[b] == 0) continue;
        const double nb = static_cast<double>(counts[b]);
        const double cost = nb / (nb + 1.0) * squared_distance(x.row(i), mu.row(b));
        if (cost < best_cost) {
          best_cost = cost;
          best = b;
        }
      }
      if (best == a) continue;
      const double nb = static_cast<double>(counts[best]);
      for (std::size_t d = 0; d < x.cols(); ++d) {
        mu(a, d) = (na * mu(a, d) - x(i, d)) / (na - 1.0);
        mu(best, d) = (nb * mu(best, d) + x(i, d)) / (nb + 1.0);
      }
      --counts[a];
      ++counts[best];
      r.labels[i] = best;
      moved = moved_any = true;
    }
    if (!moved) break;
  }
  if (!moved_any) return;
  Matrix exact = member_means(x, r.labels, k, &counts);
  double inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i) inertia += squared_distance(x.row(i), exact.row(r.labels[i]));
  for (std::uint32_t c = 0; c < k; ++c) {
    if (counts[c] == 0) std::copy(r.centroids.row(c).begin(), r.centroids.row(c).end(), exact.row(c).begin());
  }
  r.centroids = std::move(exact);
  r.inertia = inertia;
  r.inertia_history.push_back(inertia);
}

}  // namespace

KMeansResult kmeans(const Matrix& x, std::uint32_t k, std::uint64_t seed, std::uint32_t max_iter, double tol,
                    std::uint32_t n_init) {
  check_k(k, x.rows());
  if (tol <= 0.0) throw ConfigError("tol must be > 0");
  KMeansResult best;
  bool have = false;
  for (std::uint32_t run = 0; run < std::max(1u, n_init); ++run) {
    std::mt19937_64 rng(splitmix64(seed + run));
    KMeansResult r = lloyd(x, kmeanspp_init(x, k, rng), max_iter, tol);
    hartigan_refine(x, r, max_iter);
    if (!have || r.inertia < best.inertia) {
      best = std::move(r);
      have = true;
    }
  }
  return best;
}

// --- k-medoids ---------------------------------------------------------------

namespace {

Matrix distance_matrix(const Matrix& x, bool squared) {
  const std::size_t n = x.rows();
  Matrix d(n, n);
  parallel_for(n, [&](std::size_t i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double s = squared_distance(x.row(i), x.row(j));
      d(i, j) = squared ? s : std::sqrt(s);
    }
  });
  return d;
}

}  // namespace

namespace {

// C(n, k), saturating at UINT64_MAX.
std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
  k = std::min(k, n - k);
  unsigned __int128 c = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    c = c * (n - k + i) / i;
    if (c > std::numeric_limits<std::uint64_t>::max()) return std::numeric_limits<std::uint64_t>::max();
  }
  return static_cast<std::uint64_t>(c);
}

// Lexicographically first k-subset of minimum total distance.
std::vector<std::size_t> exhaustive_medoids(const Matrix& dist, std::uint32_t k) {
  const std::size_t n = dist.rows();
  std::vector<std::size_t> pick(k);
  std::iota(pick.begin(), pick.end(), 0);
  std::vector<std::size_t> best = pick;
  double best_cost = std::numeric_limits<double>::infinity();
  while (true) {
    double cost = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      double m = std::numeric_limits<double>::infinity();
      for (const auto p : pick) m = std::min(m, dist(p, j));
      cost += m;
    }
    if (cost < best_cost) {
      best_cost = cost;
      best = pick;
    }
    std::size_t i = k;
    while (i > 0 && pick[i - 1] == n - k + (i - 1)) --i;
    if (i == 0) break;
    ++pick[i - 1];
    for (std::size_t t = i; t < k; ++t) pick[t] = pick[t - 1] + 1;
  }
  return best;
}

}  // namespace

KMedoidsResult kmedoids(const Matrix& x, std::uint32_t k, std::uint64_t seed, std::uint32_t max_iter,
                        std::uint64_t exact_budget) {
  const std::size_t n = x.rows();
  check_k(k, n);
  const Matrix dist = distance_matrix(x, false);
  std::mt19937_64 rng(splitmix64(seed));

  std::vector<bool> is_medoid(n, false);
  std::vector<std::size_t> medoids;
  std::vector<double> near(n, std::numeric_limits<double>::infinity());

  const std::uint64_t subsets = binomial(n, k);
  const bool exact = subsets <= exact_budget / std::max<std::uint64_t>(1, std::uint64_t(n) * k);
  if (exact) {
    medoids = exhaustive_medoids(dist, k);
    for (const auto m : medoids) is_medoid[m] = true;
  }

  // BUILD: repeatedly add the candidate that minimizes the total distance.
  for (std::uint32_t step = 0; step < (exact ? 0u : k); ++step) {
    std::vector<double> total(n, std::numeric_limits<double>::infinity());
    parallel_for(n, [&](std::size_t c) {
      if (is_medoid[c]) return;
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += std::min(near[j], dist(c, j));
      total[c] = s;
    });
    const double best = *std::min_element(total.begin(), total.end());
    std::vector<std::size_t> ties;
    for (std::size_t c = 0; c < n; ++c) {
      if (!is_medoid[c] && total[c] == best) ties.push_back(c);
    }
    const std::size_t pick = ties[ties.size() == 1 ? 0 : rng() % ties.size()];
    is_medoid[pick] = true;
    medoids.push_back(pick);
    for (std::size_t j = 0; j < n; ++j) near[j] = std::min(near[j], dist(pick, j));
  }

  std::vector<std::size_t> owner(n);
  std::vector<double> d1(n), d2(n);
  const auto refresh = [&] {
    double cost = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      double a = std::numeric_limits<double>::infinity(), b = a;
      std::size_t arg = 0;
      for (std::size_t m = 0; m < medoids.size(); ++m) {
        const double d = dist(medoids[m], j);
        if (d < a) {
          b = a;
          a = d;
          arg = m;
        } else if (d < b) {
          b = d;
        }
      }
      owner[j] = arg;
      d1[j] = a;
      d2[j] = b;
      cost += a;
    }
    return cost;
  };

  KMedoidsResult r;
  r.exact = exact;
  double cost = refresh();
  // SWAP: best improvement over all (medoid, non-medoid) pairs.
  for (std::uint32_t it = 0; it < max_iter; ++it) {
    std::vector<double> best_delta(medoids.size(), 0.0);
    std::vector<std::size_t> best_h(medoids.size(), n);
    parallel_for(medoids.size(), [&](std::size_t m) {
      for (std::size_t h = 0; h < n; ++h) {
        if (is_medoid[h]) continue;
        double delta = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          const double dh = dist(h, j);
          const double keep = owner[j] == m ? d2[j] : d1[j];
          delta += std::min(keep, dh) - d1[j];
        }
        if (best_h[m] == n || delta < best_delta[m]) {
          best_delta[m] = delta;
          best_h[m] = h;
        }
      }
    });
    std::size_t bm = medoids.size();
    for (std::size_t m = 0; m < medoids.size(); ++m) {
      if (best_h[m] == n) continue;
      if (bm == medoids.size() || best_delta[m] < best_delta[bm]) bm = m;
    }
    const double threshold = -1e-12 * std::max(1.0, cost);
    if (bm == medoids.size() || !(best_delta[bm] < threshold)) break;
    is_medoid[medoids[bm]] = false;
    medoids[bm] = best_h[bm];
    is_medoid[best_h[bm]] = true;
    cost = refresh();
    ++r.swaps;
  }

  std::sort(medoids.begin(), medoids.end());
  r.cost = refresh();
  r.medoids = medoids;
  r.labels.resize(n);
  for (std::size_t j = 0; j < n; ++j) r.labels[j] = static_cast<std::uint32_t>(owner[j]);
  return r;
}

// --- agglomerative -------------------------------------------------------------

std::vector<std::uint32_t> agglomerative(const Matrix& x, std::uint32_t k, Linkage linkage) {
  const std::size_t n = x.rows();
  check_k(k, n);
  Matrix d = distance_matrix(x, linkage == Linkage::ward);
  std::vector<bool> active(n, true);
  std::vector<std::size_t> size(n, 1);
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);

  // nn[i]: nearest active j > i (lowest j on ties).
  constexpr std::size_t none = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> nn(n, none);
  std::vector<double> nn_d(n, std::numeric_limits<double>::infinity());
  const auto rescan = [&](std::size_t i) {
    nn[i] = none;
    nn_d[i] = std::numeric_limits<double>::infinity();
    for (std::size_t j = i + 1; j < n; ++j) {
      if (active[j] && d(i, j) < nn_d[i]) {
        nn_d[i] = d(i, j);
        nn[i] = j;
      }
    }
  };
  parallel_for(n, rescan);

  for (std::size_t clusters = n; clusters > k; --clusters) {
    std::size_t a = none;
    for (std::size_t i = 0; i < n; ++i) {
      if (active[i] && nn[i] != none && (a == none || nn_d[i] < nn_d[a])) a = i;
    }
    const std::size_t b = nn[a];
    const double dab = d(a, b);
    const auto na = static_cast<double>(size[a]);
    const auto nb = static_cast<double>(size[b]);
    for (std::size_t m = 0; m < n; ++m) {
      if (!active[m] || m == a || m == b) continue;
      double v;
      if (linkage == Linkage::average) {
        v = (na * d(a, m) + nb * d(b, m)) / (na + nb);
      } else {
        const auto nm = static_cast<double>(size[m]);
        v = ((na + nm) * d(a, m) + (nb + nm) * d(b, m) - nm * dab) / (na + nb + nm);
      }
      d(a, m) = d(m, a) = v;
    }
    active[b] = false;
    size[a] += size[b];
    parent[b] = a;

    rescan(a);
    for (std::size_t m = 0; m < n; ++m) {
      if (!active[m] || m == a) continue;
      if (nn[m] == a || nn[m] == b) {
        rescan(m);
      } else if (m < a && (d(m, a) < nn_d[m] || (d(m, a) == nn_d[m] && a < nn[m]))) {
        nn_d[m] = d(m, a);
        nn[m] = a;
      }
    }
  }

  const auto root = [&](std::size_t i) {
    while (parent[i] != i) i = parent[i];
    return i;
  };
  std::vector<std::uint32_t> id_of_root(n, std::numeric_limits<std::uint32_t>::max());
  std::vector<std::uint32_t> labels(n);
  std::uint32_t next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = root(i);
    if (id_of_root[r] == std::numeric_limits<std::uint32_t>::max()) id_of_root[r] = next++;
    labels[i] = id_of_root[r];
  }
  return labels;
}

// --- spectral ----------------------------------------------------------------

double median_pairwise_distance(const Matrix& x) {
  const std::size_t n = x.rows();
  if (n < 2) return 0.0;
  std::vector<double> d;
  d.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) d.push_back(std::sqrt(squared_distance(x.row(i), x.row(j))));
  const std::size_t mid = d.size() / 2;
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid), d.end());
  const double upper = d[mid];
  if (d.size() % 2 == 1) return upper;
  const double lower = *std::max_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

Matrix build_affinity(const Matrix& x, const SpectralOptions& options, double* sigma_out) {
  const std::size_t n = x.rows();
  double sigma = options.fixed_sigma ? *options.fixed_sigma : median_pairwise_distance(x);
  if (!(sigma > 0.0)) sigma = 1.0;  // all samples coincide
  if (sigma_out) *sigma_out = sigma;

  const Matrix sq = distance_matrix(x, true);
  Matrix a(n, n);
  const double denom = 2.0 * sigma * sigma;
  parallel_for(n, [&](std::size_t i) {
    for (std::size_t j = 0; j < n; ++j) a(i, j) = i == j ? 0.0 : std::exp(-sq(i, j) / denom);
  });
  if (options.affinity == AffinityKind::rbf_dense) return a;

  // Keep edge (i, j) when either endpoint lists the other among its knn.
  std::vector<std::uint8_t> keep(n * n, 0);
  const std::size_t kk = std::min<std::size_t>(options.knn, n > 0 ? n - 1 : 0);
  parallel_for(n, [&](std::size_t i) {
    std::vector<std::size_t> order;
    order.reserve(n - 1);
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) order.push_back(j);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(kk), order.end(),
                      [&](std::size_t p, std::size_t q) { return sq(i, p) < sq(i, q) || (sq(i, p) == sq(i, q) && p < q); });
    for (std::size_t t = 0; t < kk; ++t) keep[i * n + order[t]] = 1;
  });
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (!keep[i * n + j] && !keep[j * n + i]) a(i, j) = 0.0;
  return a;
}

SpectralResult spectral_from_affinity(const Matrix& affinity, std::uint32_t k, std::uint64_t seed,
                                      std::uint32_t max_iter, double tol, std::uint32_t n_init) {
  const std::size_t n = affinity.rows();
  check_k(k, n);
  SpectralResult r;
  std::vector<double> inv_sqrt(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 0.0;
    for (std::size_t j = 0; j < n; ++j) deg += affinity(i, j);
    if (deg > 0.0) {
      inv_sqrt[i] = 1.0 / std::sqrt(deg);
    } else {
      ++r.isolated_vertices;
    }
  }
  Matrix lap(n, n);
  parallel_for(n, [&](std::size_t i) {
    for (std::size_t j = 0; j < n; ++j) {
      lap(i, j) = (i == j ? 1.0 : 0.0) - inv_sqrt[i] * affinity(i, j) * inv_sqrt[j];
    }
  });
  const SymmetricEigen eig = eig_symmetric(lap);

  r.embedding = Matrix(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    double norm = 0.0;
    for (std::uint32_t c = 0; c < k; ++c) {
      r.embedding(i, c) = eig.vectors(i, c);
      norm += eig.vectors(i, c) * eig.vectors(i, c);
    }
    norm = std::sqrt(norm);
    if (norm > 0.0)
      for (double& v : r.embedding.row(i)) v /= norm;
  }
  r.labels = kmeans(r.embedding, k, seed, max_iter, tol, n_init).labels;
  return r;
}

SpectralResult spectral(const Matrix& x, std::uint32_t k, std::uint64_t seed, const SpectralOptions& options,
                        std::uint32_t max_iter, double tol, std::uint32_t n_init) {
  check_k(k, x.rows());
  double sigma = 0.0;
  const Matrix a = build_affinity(x, options, &sigma);
  SpectralResult r = spectral_from_affinity(a, k, seed, max_iter, tol, n_init);
  r.sigma = sigma;
  return r;
}

// --- pack-level ------------------------------------------------------------------

std::vector<std::uint32_t> ClusterModel::cluster_sizes() const {
  std::vector<std::uint32_t> sizes(k, 0);
  for (const auto& [id, c] : assignments) ++sizes.at(c);
  return sizes;
}

Matrix pack_matrix(const FeaturePack& pack, bool l2_normalize) {
  Matrix x(pack.count(), pack.dim);
  for (std::size_t i = 0; i < pack.count(); ++i) {
    const auto src = pack.row(i);
    auto dst = x.row(i);
    double norm = 0.0;
    for (std::size_t d = 0; d < pack.dim; ++d) {
      dst[d] = src[d];
      norm += dst[d] * dst[d];
    }
    if (l2_normalize && norm > 0.0) {
      norm = std::sqrt(norm);
      for (double& v : dst) v /= norm;
    }
  }
  return x;
}

namespace {

Matrix select_rows(const Matrix& x, const std::vector<std::size_t>& rows) {
  Matrix out(rows.size(), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy(x.row(rows[i]).begin(), x.row(rows[i]).end(), out.row(i).begin());
  return out;
}

std::vector<std::uint32_t> run_method(const Matrix& x, const ClusterConfig& cfg, std::vector<std::string>& warnings,
                                      std::vector<std::size_t>* medoids) {
  switch (cfg.method) {
    case ClusterMethod::kmeans:
      return kmeans(x, cfg.k, cfg.seed, cfg.max_iter, cfg.tol, cfg.n_init).labels;
    case ClusterMethod::kmedoids: {
      auto r = kmedoids(x, cfg.k, cfg.seed, cfg.max_iter);
      *medoids = r.medoids;
      return r.labels;
    }
    case ClusterMethod::agglomerative:
      return agglomerative(x, cfg.k, cfg.agglo_linkage);
    case ClusterMethod::spectral: {
      auto r = spectral(x, cfg.k, cfg.seed, cfg.spectral, cfg.max_iter, cfg.tol, cfg.n_init);
      if (r.isolated_vertices > 0) {
        warnings.push_back("IsolatedVertex: " + std::to_string(r.isolated_vertices) +
                           " samples have zero affinity degree");
      }
      return r.labels;
    }
  }
  throw ConfigError("unknown clustering method");
}

}  // namespace

ClusterModel cluster(const FeaturePack& pack, const ClusterConfig& config) {
  const Matrix x = pack_matrix(pack, config.l2_normalize);
  const std::size_t n = x.rows();
  check_k(config.k, n);
  if (config.tol <= 0.0) throw ConfigError("tol must be > 0");

  ClusterModel model;
  model.config = config;

  std::vector<std::uint32_t> labels;
  Matrix centroids;
  const bool quadratic = config.method != ClusterMethod::kmeans;
  if (quadratic && n > config.max_exact_n) {
    if (config.k > config.max_exact_n) throw KTooLarge("k exceeds max_exact_n subsample size");
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(splitmix64(config.seed ^ 0x5u));
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(config.max_exact_n);
    std::sort(idx.begin(), idx.end());
    const Matrix sub = select_rows(x, idx);
    std::vector<std::size_t> medoids;
    const auto sub_labels = run_method(sub, config, model.warnings, &medoids);
    centroids = config.method == ClusterMethod::kmedoids ? select_rows(sub, medoids)
                                                         : member_means(sub, sub_labels, config.k);
    labels.assign(n, 0);
    std::vector<bool> in_sub(n, false);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      labels[idx[i]] = sub_labels[i];
      in_sub[idx[i]] = true;
    }
    parallel_for(n, [&](std::size_t i) {
      if (!in_sub[i]) labels[i] = nearest(x.row(i), centroids).first;
    });
    model.warnings.push_back("subsampled " + std::to_string(config.max_exact_n) + " of " + std::to_string(n) +
                             " regions for clustering");
  } else {
    std::vector<std::size_t> medoids;
    labels = run_method(x, config, model.warnings, &medoids);
    if (config.method == ClusterMethod::kmedoids) centroids = select_rows(x, medoids);
  }

  // Compact: drop empty clusters, keep relative order.
  std::vector<std::size_t> counts(config.k, 0);
  for (const auto l : labels) ++counts[l];
  std::vector<std::uint32_t> remap(config.k, 0);
  std::uint32_t k = 0;
  for (std::uint32_t c = 0; c < config.k; ++c)
    if (counts[c] > 0) remap[c] = k++;
  for (auto& l : labels) l = remap[l];
  model.k = k;

  if (config.method == ClusterMethod::kmedoids) {
    Matrix compact(k, x.cols());
    for (std::uint32_t c = 0; c < config.k; ++c)
      if (counts[c] > 0) std::copy(centroids.row(c).begin(), centroids.row(c).end(), compact.row(remap[c]).begin());
    model.centroids = std::move(compact);
  } else {
    model.centroids = member_means(x, labels, k);
  }

  std::vector<double> dist(n);
  parallel_for(n, [&](std::size_t i) { dist[i] = squared_distance(x.row(i), model.centroids.row(labels[i])); });
  for (std::size_t i = 0; i < n; ++i) {
    model.inertia += dist[i];
    model.assignments[pack.region_ids[i]] = labels[i];
  }

  std::vector<std::vector<std::size_t>> members(k);
  for (std::size_t i = 0; i < n; ++i) members[labels[i]].push_back(i);
  for (std::uint32_t c = 0; c < k; ++c) {
    auto& m = members[c];
    std::stable_sort(m.begin(), m.end(), [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
    auto& ex = model.exemplars[c];
    for (std::size_t t = 0; t < m.size() && t < config.exemplar_count; ++t) ex.push_back(pack.region_ids[m[t]]);
  }
  return model;
}

// --- JSON ------------------------------------------------------------------------

std::string to_string(ClusterMethod m) {
  switch (m) {
    case ClusterMethod::spectral: return "spectral";
    case ClusterMethod::kmeans: return "kmeans";
    case ClusterMethod::kmedoids: return "kmedoids";
    case ClusterMethod::agglomerative: return "agglomerative";
  }
  return "?";
}

ClusterMethod parse_method(const std::string& s) {
  if (s == "spectral") return ClusterMethod::spectral;
  if (s == "kmeans") return ClusterMethod::kmeans;
  if (s == "kmedoids") return ClusterMethod::kmedoids;
  if (s == "agglomerative") return ClusterMethod::agglomerative;
  throw ConfigError("unknown clustering method '" + s + "'");
}

json to_json(const ClusterConfig& c) {
  json spectral = {{"affinity", c.spectral.affinity == AffinityKind::rbf_dense ? "rbf_dense" : "knn_graph"},
                   {"knn", c.spectral.knn}};
  if (c.spectral.fixed_sigma) {
    spectral["sigma"] = *c.spectral.fixed_sigma;
  } else {
    spectral["sigma"] = "median_heuristic";
  }
  return {{"method", to_string(c.method)},
          {"k", c.k},
          {"seed", c.seed},
          {"spectral", spectral},
          {"agglo_linkage", c.agglo_linkage == Linkage::average ? "average" : "ward"},
          {"max_iter", c.max_iter},
          {"tol", c.tol},
          {"max_exact_n", c.max_exact_n},
          {"n_init", c.n_init},
          {"exemplar_count", c.exemplar_count},
          {"l2_normalize", c.l2_normalize}};
}

ClusterConfig cluster_config_from_json(const json& j) {
  ClusterConfig c;
  try {
    c.method = parse_method(j.value("method", std::string("spectral")));
    c.k = j.value("k", c.k);
    c.seed = j.value("seed", c.seed);
    if (j.contains("spectral")) {
      const auto& s = j.at("spectral");
      const auto aff = s.value("affinity", std::string("rbf_dense"));
      if (aff == "rbf_dense") {
        c.spectral.affinity = AffinityKind::rbf_dense;
      } else if (aff == "knn_graph") {
        c.spectral.affinity = AffinityKind::knn_graph;
      } else {
        throw ConfigError("unknown affinity '" + aff + "'");
      }
      c.spectral.knn = s.value("knn", c.spectral.knn);
      if (s.contains("sigma") && s.at("sigma").is_number()) c.spectral.fixed_sigma = s.at("sigma").get<double>();
    }
    const auto linkage = j.value("agglo_linkage", std::string("average"));
    if (linkage != "average" && linkage != "ward") throw ConfigError("unknown linkage '" + linkage + "'");
    c.agglo_linkage = linkage == "average" ? Linkage::average : Linkage::ward;
    c.max_iter = j.value("max_iter", c.max_iter);
    c.tol = j.value("tol", c.tol);
    c.max_exact_n = j.value("max_exact_n", c.max_exact_n);
    c.n_init = j.value("n_init", c.n_init);
    c.exemplar_count = j.value("exemplar_count", c.exemplar_count);
    c.l2_normalize = j.value("l2_normalize", c.l2_normalize);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad cluster config: ") + e.what());
  }
  return c;
}

json to_json(const ClusterModel& m) {
  json exemplars = json::object();
  for (const auto& [c, ids] : m.exemplars) exemplars[std::to_string(c)] = ids;
  json centroids = json::array();
  for (std::size_t c = 0; c < m.centroids.rows(); ++c) {
    centroids.push_back(std::vector<double>(m.centroids.row(c).begin(), m.centroids.row(c).end()));
  }
  return {{"k", m.k},
          {"assignments", m.assignments},
          {"exemplars", exemplars},
          {"centroids", centroids},
          {"config", to_json(m.config)},
          {"inertia", m.inertia},
          {"warnings", m.warnings}};
}

ClusterModel cluster_model_from_json(const json& j) {
  ClusterModel m;
  try {
    m.k = j.at("k").get<std::uint32_t>();
    m.assignments = j.at("assignments").get<std::map<std::string, std::uint32_t>>();
    for (const auto& [key, ids] : j.at("exemplars").items()) {
      m.exemplars[static_cast<std::uint32_t>(std::stoul(key))] = ids.get<std::vector<std::string>>();
    }
    const auto& cents = j.value("centroids", json::array());
    if (!cents.empty()) {
      m.centroids = Matrix(cents.size(), cents.at(0).size());
      for (std::size_t c = 0; c < cents.size(); ++c) {
        const auto row = cents[c].get<std::vector<double>>();
        if (row.size() != m.centroids.cols()) throw FormatError("ragged centroid matrix");
        std::copy(row.begin(), row.end(), m.centroids.row(c).begin());
      }
    }
    m.config = cluster_config_from_json(j.at("config"));
    m.inertia = j.at("inertia").get<double>();
    m.warnings = j.value("warnings", std::vector<std::string>{});
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad cluster model: ") + e.what());
  }
  for (const auto& [id, c] : m.assignments) {
    if (c >= m.k) throw FormatError("region " + id + " assigned to cluster " + std::to_string(c) + " >= k");
  }
  return m;
}

void write_model(const fs::path& path, const ClusterModel& model) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json(model).dump(2) << '\n';
}

ClusterModel read_model(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return cluster_model_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace comrp
