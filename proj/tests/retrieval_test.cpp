#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "cadkit/retrieval.hpp"

using namespace cadkit;

namespace {

/// Maps each label to its own basis vector, so distinct labels are orthogonal.
class OrthogonalLabels final : public EmbeddingProvider {
public:
  std::vector<float> embed(std::string_view label) const override {
    std::vector<float> v(8, 0.0f);
    v[fnv1a(label) % 8] = 1.0f;
    return v;
  }
};

std::vector<float> unit(std::size_t dim, std::size_t axis) {
  std::vector<float> v(dim, 0.0f);
  v[axis] = 1.0f;
  return v;
}

/// Unit vector with cosine `c` to e_0, the remainder along e_axis.
std::vector<float> with_cosine(double c, std::size_t axis, std::size_t dim = 16) {
  std::vector<float> v(dim, 0.0f);
  v[0] = static_cast<float>(c);
  v[axis] = static_cast<float>(std::sqrt(1 - c * c));
  return v;
}

ModelViewDescriptors model_with_cosines(std::string id, std::string category, const std::vector<double>& cosines) {
  ModelViewDescriptors m{std::move(id), std::move(category), {}};
  for (std::size_t i = 0; i < cosines.size(); ++i) m.view_descriptors.push_back(with_cosine(cosines[i], 1 + i));
  return m;
}

Track track_of(std::vector<std::vector<float>> descs, std::string category = "chair") {
  std::vector<Detection> dets;
  for (std::size_t i = 0; i < descs.size(); ++i) {
    Detection d;
    d.frame_id = static_cast<std::int64_t>(i);
    d.category = category;
    d.descriptor = std::move(descs[i]);
    d.box = {0, 0, 1, 1};
    dets.push_back(std::move(d));
  }
  return make_track("t0", std::move(dets));
}

std::vector<ModelViewDescriptors> random_database(std::mt19937_64& rng, std::size_t count, std::size_t dim = 32) {
  const char* cats[] = {"chair", "table", "cabinet", "sofa"};
  std::vector<ModelViewDescriptors> db;
  for (std::size_t i = 0; i < count; ++i) {
    ModelViewDescriptors m;
    char id[16];
    std::snprintf(id, sizeof(id), "m%03zu", i);
    m.model_id = id;
    m.category = cats[rng() % 4];
    for (std::size_t v = 0; v < kViewsPerModel; ++v) m.view_descriptors.push_back(seeded_unit_vector(rng(), dim));
    db.push_back(std::move(m));
  }
  return db;
}

}  // namespace

TEST(CategorySimilarity, Examples) {
  const HashedEmbeddingProvider hashed;
  EXPECT_DOUBLE_EQ(category_similarity("chair", "chair", hashed), 1.0);
  const OrthogonalLabels ortho;
  ASSERT_NE(fnv1a("chair") % 8, fnv1a("lamp") % 8);
  EXPECT_DOUBLE_EQ(category_similarity("chair", "lamp", ortho), 0.0);
  EXPECT_THROW(category_similarity("", "chair", hashed), std::invalid_argument);
}

TEST(CategorySimilarity, ConceptProviderOrdersRelatedLabels) {
  const auto emb = ConceptEmbeddingProvider::furniture();
  EXPECT_GT(category_similarity("cabinet", "wardrobe", emb), category_similarity("cabinet", "chair", emb));
  EXPECT_GT(category_similarity("cabinet", "filing cabinet", emb), 0.7);
  EXPECT_GT(category_similarity("sofa", "couch", emb), category_similarity("sofa", "table", emb));
}

TEST(EmbeddingProvider, DeterministicUnitVectors) {
  const HashedEmbeddingProvider hashed;
  const auto emb = ConceptEmbeddingProvider::furniture();
  for (const char* label : {"chair", "wardrobe", "unknown thing"}) {
    EXPECT_EQ(hashed.embed(label), hashed.embed(label));
    EXPECT_EQ(emb.embed(label), emb.embed(label));
    EXPECT_TRUE(is_unit(hashed.embed(label)));
    EXPECT_TRUE(is_unit(emb.embed(label)));
  }
}

TEST(CombinedSimilarity, Examples) {
  EXPECT_DOUBLE_EQ(combined_similarity(0.8, 0.5), 0.4);
  EXPECT_DOUBLE_EQ(combined_similarity(0.9, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(combined_similarity(1.0, 1.0), 1.0);
  EXPECT_DOUBLE_EQ(combined_similarity(-0.7, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(combined_similarity(-0.7, -0.5), 0.0);
}

TEST(TrackModelScore, Examples) {
  const HashedEmbeddingProvider emb;
  const auto e0 = unit(16, 0);
  ModelViewDescriptors same{"m", "chair", std::vector<std::vector<float>>(kViewsPerModel, e0)};
  EXPECT_NEAR(track_model_score(track_of({e0, e0}), same, emb), 1.0, 1e-12);

  ModelViewDescriptors ortho{"m", "chair", std::vector<std::vector<float>>(kViewsPerModel, unit(16, 3))};
  EXPECT_DOUBLE_EQ(track_model_score(track_of({e0}), ortho, emb), 0.0);
}

TEST(TrackModelScore, MeanOverAllPairsMatchesEnumeration) {
  const auto emb = ConceptEmbeddingProvider::furniture();
  std::mt19937_64 rng(4);
  const std::vector<std::vector<float>> frames{seeded_unit_vector(rng(), 12), seeded_unit_vector(rng(), 12)};
  ModelViewDescriptors model{"m", "office chair", {}};
  for (std::size_t v = 0; v < kViewsPerModel; ++v) model.view_descriptors.push_back(seeded_unit_vector(rng(), 12));

  // Oracle: explicit enumeration of the 20 pair products.
  const double cat = std::max(0.0, category_similarity("chair", "office chair", emb));
  double sum = 0;
  int pairs = 0;
  for (const auto& f : frames)
    for (const auto& v : model.view_descriptors) {
      double dot = 0;
      for (std::size_t i = 0; i < f.size(); ++i) dot += double(f[i]) * v[i];
      sum += std::max(dot, 0.0) * cat;
      ++pairs;
    }
  ASSERT_EQ(pairs, 20);
  EXPECT_NEAR(track_model_score(frames, "chair", model, emb), sum / pairs, 1e-9);
}

TEST(RankCandidates, SmallDatabaseReturnsAllSorted) {
  const HashedEmbeddingProvider emb;
  std::vector<ModelViewDescriptors> db{model_with_cosines("a", "chair", std::vector<double>(10, 0.2)),
                                       model_with_cosines("b", "chair", std::vector<double>(10, 0.9)),
                                       model_with_cosines("c", "chair", std::vector<double>(10, 0.5))};
  const auto list = rank_candidates(track_of({unit(16, 0)}), db, emb);
  ASSERT_EQ(list.entries.size(), 3u);
  EXPECT_EQ(list.entries[0].model_id, "b");
  EXPECT_EQ(list.entries[1].model_id, "c");
  EXPECT_EQ(list.entries[2].model_id, "a");
  EXPECT_NEAR(list.entries[0].score, 0.9, 1e-6);
}

TEST(RankCandidates, TiesBrokenByModelId) {
  const HashedEmbeddingProvider emb;
  std::vector<ModelViewDescriptors> db{model_with_cosines("zeta", "chair", std::vector<double>(10, 0.5)),
                                       model_with_cosines("alpha", "chair", std::vector<double>(10, 0.5))};
  const auto list = rank_candidates(track_of({unit(16, 0)}), db, emb);
  EXPECT_EQ(list.entries[0].model_id, "alpha");
  EXPECT_EQ(list.entries[1].model_id, "zeta");
}

TEST(RankCandidates, EmptyDatabaseThrows) {
  const HashedEmbeddingProvider emb;
  EXPECT_THROW(rank_candidates(track_of({unit(4, 0)}), {}, emb), std::invalid_argument);
}

TEST(RankCandidates, PlantedExactMatchRankedFirst) {
  const auto emb = ConceptEmbeddingProvider::furniture();
  std::mt19937_64 rng(12);
  auto db = random_database(rng, 50);
  const auto desc = seeded_unit_vector(rng(), 32);
  db[37].category = "chair";
  db[37].view_descriptors.assign(kViewsPerModel, desc);
  const auto list = rank_candidates(track_of({desc, desc, desc}), db, emb);
  ASSERT_EQ(list.entries.size(), kCandidateCount);
  EXPECT_EQ(list.entries[0].model_id, db[37].model_id);
  EXPECT_NEAR(list.entries[0].score, 1.0, 1e-6);
}

TEST(RankCandidates, InvariantToDatabaseOrder) {
  const auto emb = ConceptEmbeddingProvider::furniture();
  std::mt19937_64 rng(13);
  auto db = random_database(rng, 40);
  const auto track = track_of({seeded_unit_vector(rng(), 32), seeded_unit_vector(rng(), 32)});
  const auto reference = rank_candidates(track, db, emb);
  for (int shuffle = 0; shuffle < 5; ++shuffle) {
    std::shuffle(db.begin(), db.end(), rng);
    const auto again = rank_candidates(track, db, emb);
    ASSERT_EQ(again.entries.size(), reference.entries.size());
    for (std::size_t i = 0; i < again.entries.size(); ++i) {
      EXPECT_EQ(again.entries[i].model_id, reference.entries[i].model_id);
      EXPECT_EQ(again.entries[i].score, reference.entries[i].score);
    }
  }
}

TEST(RankCandidates, ScalingAppearanceCosinesPreservesRanking) {
  const auto emb = ConceptEmbeddingProvider::furniture();
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-0.3, 1.0);
  const char* cats[] = {"chair", "sofa", "table", "office chair"};
  std::vector<std::vector<double>> cosines(15, std::vector<double>(kViewsPerModel));
  for (auto& row : cosines)
    for (auto& c : row) c = u(rng);

  auto build = [&](double factor) {
    std::vector<ModelViewDescriptors> db;
    for (std::size_t m = 0; m < cosines.size(); ++m) {
      std::vector<double> scaled;
      for (double c : cosines[m]) scaled.push_back(factor * c);
      db.push_back(model_with_cosines("m" + std::to_string(m), cats[m % 4], scaled));
    }
    return db;
  };
  const auto track = track_of({unit(16, 0)});
  const auto a = rank_candidates(track, build(1.0), emb);
  const auto b = rank_candidates(track, build(0.6), emb);
  for (std::size_t i = 0; i < a.entries.size(); ++i) EXPECT_EQ(a.entries[i].model_id, b.entries[i].model_id);
}

TEST(RankCandidates, NeverMoreThanTenAndNonIncreasing) {
  const HashedEmbeddingProvider emb(16);
  std::mt19937_64 rng(31);
  for (std::size_t n : {1u, 9u, 10u, 11u, 80u}) {
    const auto db = random_database(rng, n);
    const auto list = rank_candidates(track_of({seeded_unit_vector(rng(), 32)}), db, emb);
    EXPECT_EQ(list.entries.size(), std::min<std::size_t>(n, kCandidateCount));
    for (std::size_t i = 1; i < list.entries.size(); ++i) EXPECT_GE(list.entries[i - 1].score, list.entries[i].score);
  }
}

TEST(ModelViewDescriptors, Validation) {
  ModelViewDescriptors m{"m", "chair", std::vector<std::vector<float>>(9, unit(4, 0))};
  EXPECT_THROW(validate(m), SchemaError);
  m.view_descriptors.push_back({0.5f, 0.5f, 0, 0});
  EXPECT_THROW(validate(m), SchemaError);
  m.view_descriptors.back() = unit(4, 1);
  EXPECT_NO_THROW(validate(m));
}
