#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cadkit/errors.hpp"
#include "cadkit/tracking.hpp"

namespace cadkit {

inline constexpr std::size_t kViewsPerModel = 10;
inline constexpr std::size_t kCandidateCount = 10;

/// Appearance descriptors of one CAD model rendered from random viewpoints.
struct ModelViewDescriptors {
  std::string model_id;
  std::string category;
  std::vector<std::vector<float>> view_descriptors;
};

inline bool is_unit(std::span<const float> v, double tol = 1e-6) {
  double n = 0;
  for (float x : v) n += static_cast<double>(x) * x;
  return std::abs(std::sqrt(n) - 1.0) <= tol;
}

inline void validate(const ModelViewDescriptors& m) {
  if (m.view_descriptors.size() != kViewsPerModel)
    throw SchemaError(m.model_id + ".view_descriptors", "expected " + std::to_string(kViewsPerModel) + " views, got " +
                                                            std::to_string(m.view_descriptors.size()));
  for (std::size_t i = 0; i < m.view_descriptors.size(); ++i)
    if (!is_unit(m.view_descriptors[i]))
      throw SchemaError(m.model_id + ".view_descriptors[" + std::to_string(i) + "]", "not unit norm");
}

/// Maps class-label names into a shared semantic space. Implementations must be deterministic
/// and return unit vectors.
class EmbeddingProvider {
public:
  virtual ~EmbeddingProvider() = default;
  virtual std::vector<float> embed(std::string_view label) const = 0;
};

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::vector<float> seeded_unit_vector(std::uint64_t seed, std::size_t dim) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0, 1);
  std::vector<float> v(dim);
  for (auto& x : v) x = static_cast<float>(n(rng));
  normalize(v);
  return v;
}

/// Hash-seeded random unit vectors: distinct labels are nearly orthogonal in high dimension.
class HashedEmbeddingProvider final : public EmbeddingProvider {
public:
  explicit HashedEmbeddingProvider(std::size_t dim = 64, std::uint64_t salt = 0) : dim_(dim), salt_(salt) {}

  std::vector<float> embed(std::string_view label) const override {
    return seeded_unit_vector(fnv1a(label, 0xcbf29ce484222325ULL ^ salt_), dim_);
  }

private:
  std::size_t dim_;
  std::uint64_t salt_;
};

/// Labels are mixtures of shared concept directions plus a small label-specific component, so
/// labels that share a concept ("cabinet", "wardrobe") are close and others are not. Labels
/// missing from the table fall back to their hashed vector.
class ConceptEmbeddingProvider final : public EmbeddingProvider {
public:
  using ConceptWeights = std::map<std::string, double>;

  ConceptEmbeddingProvider(std::map<std::string, ConceptWeights, std::less<>> table, std::size_t dim = 64,
                           double label_weight = 0.3)
      : table_(std::move(table)), dim_(dim), label_weight_(label_weight), hashed_(dim, 0x1abe1) {}

  /// Indoor furniture vocabulary of the detector and CAD label spaces.
  static ConceptEmbeddingProvider furniture(std::size_t dim = 64) {
    return ConceptEmbeddingProvider(
        {
            {"cabinet", {{"storage", 1.0}}},
            {"filing cabinet", {{"storage", 1.0}, {"office", 0.4}}},
            {"wardrobe", {{"storage", 1.0}, {"bedroom", 0.3}}},
            {"chest of drawers", {{"storage", 1.0}, {"bedroom", 0.3}}},
            {"bookshelf", {{"storage", 0.6}, {"shelf", 1.0}}},
            {"shelf", {{"shelf", 1.0}}},
            {"chair", {{"seating", 1.0}}},
            {"office chair", {{"seating", 1.0}, {"office", 0.4}}},
            {"stool", {{"seating", 0.8}}},
            {"sofa", {{"seating", 0.8}, {"lounge", 0.6}}},
            {"couch", {{"seating", 0.8}, {"lounge", 0.6}}},
            {"bench", {{"seating", 0.8}}},
            {"table", {{"surface", 1.0}}},
            {"desk", {{"surface", 1.0}, {"office", 0.4}}},
            {"coffee table", {{"surface", 1.0}, {"lounge", 0.4}}},
            {"bed", {{"sleeping", 1.0}, {"bedroom", 0.5}}},
            {"pillow", {{"sleeping", 0.6}, {"textile", 1.0}}},
            {"lamp", {{"lighting", 1.0}}},
            {"display", {{"electronics", 1.0}}},
            {"television", {{"electronics", 1.0}}},
            {"monitor", {{"electronics", 1.0}, {"office", 0.4}}},
            {"bin", {{"container", 1.0}}},
            {"trash can", {{"container", 1.0}}},
        },
        dim);
  }

  std::vector<float> embed(std::string_view label) const override {
    const auto it = table_.find(label);
    if (it == table_.end()) return hashed_.embed(label);
    std::vector<double> acc(dim_, 0.0);
    auto add = [&](const std::vector<float>& v, double w) {
      for (std::size_t i = 0; i < dim_; ++i) acc[i] += w * v[i];
    };
    for (const auto& [concept_name, w] : it->second) add(seeded_unit_vector(fnv1a(concept_name, 0xc0ffee), dim_), w);
    add(hashed_.embed(label), label_weight_);
    std::vector<float> out(acc.begin(), acc.end());
    normalize(out);
    return out;
  }

private:
  std::map<std::string, ConceptWeights, std::less<>> table_;
  std::size_t dim_;
  double label_weight_;
  HashedEmbeddingProvider hashed_;
};

/// Cosine of the two label embeddings, in [-1, 1].
inline double category_similarity(std::string_view a, std::string_view b, const EmbeddingProvider& emb) {
  if (a.empty() || b.empty()) throw std::invalid_argument("category labels must be non-empty");
  if (a == b) return 1.0;
  return cosine(emb.embed(a), emb.embed(b));
}

/// Appearance similarity gated by class similarity; both floored at zero.
inline double combined_similarity(double appearance, double category) {
  return std::max(appearance, 0.0) * std::clamp(category, 0.0, 1.0);
}

enum class Aggregation { mean, max };

struct RetrievalOptions {
  std::size_t top_k = kCandidateCount;
  Aggregation aggregation = Aggregation::mean;
};

/// Aggregate of combined_similarity over every (track frame, model view) descriptor pair.
inline double track_model_score(std::span<const std::vector<float>> track_descriptors, std::string_view track_category,
                                const ModelViewDescriptors& model, const EmbeddingProvider& emb,
                                Aggregation aggregation = Aggregation::mean) {
  if (track_descriptors.empty()) throw std::invalid_argument("track has no descriptors");
  if (model.view_descriptors.empty()) return 0.0;
  const double cat = category_similarity(track_category, model.category, emb);
  double sum = 0, best = 0;
  for (const auto& f : track_descriptors)
    for (const auto& v : model.view_descriptors) {
      const double s = combined_similarity(cosine(f, v), cat);
      sum += s;
      best = std::max(best, s);
    }
  if (aggregation == Aggregation::max) return best;
  return sum / static_cast<double>(track_descriptors.size() * model.view_descriptors.size());
}

inline double track_model_score(const Track& track, const ModelViewDescriptors& model, const EmbeddingProvider& emb,
                                Aggregation aggregation = Aggregation::mean) {
  std::vector<std::vector<float>> descs;
  for (const auto& d : track.detections) descs.push_back(d.descriptor);
  return track_model_score(descs, track.category, model, emb, aggregation);
}

struct Candidate {
  std::string model_id;
  double score = 0;
};

/// Best-scoring CAD models for one track, descending score.
struct CandidateList {
  std::string track_id;
  std::vector<Candidate> entries;
};

/// Top-k models by track_model_score; equal scores are ordered by model_id.
inline CandidateList rank_candidates(const Track& track, std::span<const ModelViewDescriptors> database,
                                     const EmbeddingProvider& emb, const RetrievalOptions& opt = {}) {
  if (database.empty()) throw std::invalid_argument("empty model database");
  std::vector<std::vector<float>> descs;
  for (const auto& d : track.detections) descs.push_back(d.descriptor);

  CandidateList out;
  out.track_id = track.track_id;
  out.entries.reserve(database.size());
  for (const auto& m : database)
    out.entries.push_back({m.model_id, track_model_score(descs, track.category, m, emb, opt.aggregation)});
  std::sort(out.entries.begin(), out.entries.end(), [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.model_id < b.model_id;
  });
  if (out.entries.size() > opt.top_k) out.entries.resize(opt.top_k);
  return out;
}

}  // namespace cadkit
