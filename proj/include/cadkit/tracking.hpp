#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "cadkit/errors.hpp"

namespace cadkit {

struct Box2D {
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;

  double area() const { return std::max(0.0, x_max - x_min) * std::max(0.0, y_max - y_min); }
  bool valid() const { return x_min < x_max && y_min < y_max; }
};

inline double iou(const Box2D& a, const Box2D& b) {
  const Box2D inter{std::max(a.x_min, b.x_min), std::max(a.y_min, b.y_min), std::min(a.x_max, b.x_max),
                    std::min(a.y_max, b.y_max)};
  const double i = inter.valid() ? inter.area() : 0.0;
  const double u = a.area() + b.area() - i;
  return u > 0 ? i / u : 0.0;
}

/// Cosine similarity; zero when either vector is zero.
inline double cosine(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw std::invalid_argument("descriptor dimension mismatch");
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += static_cast<double>(a[i]) * b[i];
    aa += static_cast<double>(a[i]) * a[i];
    bb += static_cast<double>(b[i]) * b[i];
  }
  if (aa <= 0 || bb <= 0) return 0.0;
  return ab / std::sqrt(aa * bb);
}

inline void normalize(std::vector<float>& v) {
  double n = 0;
  for (float x : v) n += static_cast<double>(x) * x;
  n = std::sqrt(n);
  if (n > 0)
    for (float& x : v) x = static_cast<float>(x / n);
}

struct Detection {
  std::int64_t frame_id = 0;
  Box2D box;
  std::string category;
  double score = 1.0;
  std::vector<float> descriptor;  ///< unit norm
};

enum class TrackSource { automatic, manual };

/// One physical object across frames; at most one detection per frame, ordered by frame.
struct Track {
  std::string track_id;
  std::vector<Detection> detections;
  std::string category;
  TrackSource source = TrackSource::automatic;
};

struct SimilarityWeights {
  double appearance = 1.0;
  double category = 0.5;
  double spatial = 0.5;
};

inline constexpr double kDefaultMergeThreshold = 0.6;

/// w_app·cos + w_cat·[same label] + w_spatial·IoU, the IoU term only for adjacent frames.
inline double pairwise_similarity(const Detection& a, const Detection& b, const SimilarityWeights& w = {}) {
  if (a.frame_id == b.frame_id) throw std::invalid_argument("detections share frame " + std::to_string(a.frame_id));
  const double app = cosine(a.descriptor, b.descriptor);
  const double cat = a.category == b.category ? 1.0 : 0.0;
  const bool adjacent = std::abs(a.frame_id - b.frame_id) == 1;
  const double spatial = adjacent ? iou(a.box, b.box) : 0.0;
  return w.appearance * app + w.category * cat + w.spatial * spatial;
}

/// Groups of detection indices.
using Clustering = std::vector<std::vector<std::size_t>>;

/// Σ over intra-cluster pairs of (similarity − θ). Throws if a cluster repeats a frame.
inline double partition_objective(std::span<const Detection> dets, const Clustering& clusters,
                                  const SimilarityWeights& w, double threshold) {
  double total = 0;
  for (const auto& c : clusters)
    for (std::size_t i = 0; i < c.size(); ++i)
      for (std::size_t j = i + 1; j < c.size(); ++j) total += pairwise_similarity(dets[c[i]], dets[c[j]], w) - threshold;
  return total;
}

/// Greedy agglomerative clique partitioning: repeatedly merge the pair of clusters with the
/// largest positive gain, never joining two detections of the same frame. Ties go to the pair
/// whose lowest detection indices are smallest. Clusters are returned sorted by first index.
inline Clustering cluster_detections(std::span<const Detection> dets, const SimilarityWeights& w = {},
                                     double threshold = kDefaultMergeThreshold) {
  const std::size_t n = dets.size();
  constexpr double kBlocked = -std::numeric_limits<double>::infinity();
  std::vector<double> gain(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double g = dets[i].frame_id == dets[j].frame_id ? kBlocked : pairwise_similarity(dets[i], dets[j], w) - threshold;
      gain[i * n + j] = gain[j * n + i] = g;
    }

  std::vector<std::vector<std::size_t>> members(n);
  std::vector<bool> alive(n, true);
  for (std::size_t i = 0; i < n; ++i) members[i] = {i};

  while (true) {
    double best = 0;
    std::size_t bi = n, bj = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (!alive[i]) continue;
      for (std::size_t j = i + 1; j < n; ++j) {
        if (!alive[j]) continue;
        if (gain[i * n + j] > best) {
          best = gain[i * n + j];
          bi = i;
          bj = j;
        }
      }
    }
    if (bi == n) break;

    // Slot bi keeps the lower index; kBlocked propagates through the sum.
    alive[bj] = false;
    members[bi].insert(members[bi].end(), members[bj].begin(), members[bj].end());
    for (std::size_t k = 0; k < n; ++k) {
      if (!alive[k] || k == bi) continue;
      const double g = gain[bi * n + k] + gain[bj * n + k];
      gain[bi * n + k] = gain[k * n + bi] = g;
    }
  }

  Clustering out;
  for (std::size_t i = 0; i < n; ++i) {
    if (!alive[i]) continue;
    std::sort(members[i].begin(), members[i].end());
    out.push_back(members[i]);
  }
  return out;
}

inline constexpr std::size_t kExactPartitionLimit = 10;

/// Exhaustive search over all set partitions that respect the one-detection-per-frame rule.
inline Clustering exact_partition(std::span<const Detection> dets, const SimilarityWeights& w = {},
                                  double threshold = kDefaultMergeThreshold) {
  const std::size_t n = dets.size();
  if (n > kExactPartitionLimit)
    throw std::invalid_argument("exact partition limited to " + std::to_string(kExactPartitionLimit) + " detections");

  std::vector<double> gain(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (dets[i].frame_id != dets[j].frame_id) gain[i * n + j] = pairwise_similarity(dets[i], dets[j], w) - threshold;

  std::vector<std::vector<std::size_t>> blocks;
  Clustering best_blocks;
  double best = -std::numeric_limits<double>::infinity();

  auto recurse = [&](auto&& self, std::size_t i, double value) -> void {
    if (i == n) {
      if (value > best) {
        best = value;
        best_blocks = blocks;
      }
      return;
    }
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      bool ok = true;
      double add = 0;
      for (std::size_t m : blocks[b]) {
        if (dets[m].frame_id == dets[i].frame_id) {
          ok = false;
          break;
        }
        add += gain[m * n + i];
      }
      if (!ok) continue;
      blocks[b].push_back(i);
      self(self, i + 1, value + add);
      blocks[b].pop_back();
    }
    blocks.push_back({i});
    self(self, i + 1, value);
    blocks.pop_back();
  };
  recurse(recurse, 0, 0.0);
  return best_blocks;
}

/// Most frequent label; ties go to the lexicographically smallest.
inline std::string majority_category(std::span<const Detection> dets) {
  std::map<std::string, int> counts;
  for (const auto& d : dets) ++counts[d.category];
  std::string best;
  int best_count = 0;
  for (const auto& [label, count] : counts)
    if (count > best_count) {
      best = label;
      best_count = count;
    }
  return best;
}

inline Track make_track(std::string id, std::vector<Detection> dets, TrackSource source = TrackSource::automatic) {
  if (dets.empty()) throw std::invalid_argument("track needs at least one detection");
  std::stable_sort(dets.begin(), dets.end(), [](const auto& a, const auto& b) { return a.frame_id < b.frame_id; });
  for (std::size_t i = 1; i < dets.size(); ++i)
    if (dets[i].frame_id == dets[i - 1].frame_id)
      throw std::invalid_argument("track " + id + " has two detections in frame " + std::to_string(dets[i].frame_id));
  Track t;
  t.track_id = std::move(id);
  t.category = majority_category(dets);
  t.detections = std::move(dets);
  t.source = source;
  return t;
}

inline std::vector<Track> tracks_from_clusters(std::span<const Detection> dets, const Clustering& clusters,
                                               const std::string& prefix = "track_") {
  std::vector<Track> tracks;
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    std::vector<Detection> members;
    for (std::size_t i : clusters[c]) members.push_back(dets[i]);
    char id[32];
    std::snprintf(id, sizeof(id), "%04zu", c);
    tracks.push_back(make_track(prefix + id, std::move(members)));
  }
  return tracks;
}

/// Associates per-frame detections of one video into object tracks.
inline std::vector<Track> partition_tracks(std::span<const Detection> dets, const SimilarityWeights& w = {},
                                           double threshold = kDefaultMergeThreshold) {
  return tracks_from_clusters(dets, cluster_detections(dets, w, threshold));
}

inline std::vector<Track> exact_partition_oracle(std::span<const Detection> dets, const SimilarityWeights& w = {},
                                                 double threshold = kDefaultMergeThreshold) {
  return tracks_from_clusters(dets, exact_partition(dets, w, threshold));
}

}  // namespace cadkit
