#include <gtest/gtest.h>

#include <random>
#include <set>

#include "cadkit/tracking.hpp"
#include "support/random_detections.hpp"

using namespace cadkit;

namespace {

Detection det(std::int64_t frame, std::vector<float> desc, std::string cat = "chair", Box2D box = {0, 0, 10, 10}) {
  Detection d;
  d.frame_id = frame;
  d.descriptor = std::move(desc);
  d.category = std::move(cat);
  d.box = box;
  return d;
}

/// Two groups of three detections (frames 0..2 each). Intra-group cosine 0.9, inter-group 0.1.
std::vector<Detection> two_groups() {
  // d = sqrt(0.9)·g + sqrt(0.1)·e_i with cos(g_A, g_B) = 1/9.
  const double a = std::sqrt(0.9), b = std::sqrt(0.1);
  const double c = 1.0 / 9.0, s = std::sqrt(1 - c * c);
  std::vector<Detection> out;
  for (int group = 0; group < 2; ++group) {
    for (int k = 0; k < 3; ++k) {
      std::vector<float> v(8, 0.0f);
      if (group == 0) {
        v[0] = static_cast<float>(a);
      } else {
        v[0] = static_cast<float>(a * c);
        v[1] = static_cast<float>(a * s);
      }
      v[2 + group * 3 + k] = static_cast<float>(b);
      out.push_back(det(k, v, "x", {0, 0, 1, 1}));
    }
  }
  // Interleave so groups are not contiguous in the input.
  return {out[0], out[3], out[1], out[4], out[2], out[5]};
}

void expect_valid_partition(const std::vector<Detection>& dets, const Clustering& clusters) {
  std::vector<int> seen(dets.size(), 0);
  for (const auto& c : clusters) {
    ASSERT_FALSE(c.empty());
    std::set<std::int64_t> frames;
    for (auto i : c) {
      ++seen[i];
      EXPECT_TRUE(frames.insert(dets[i].frame_id).second) << "frame repeated in a cluster";
    }
  }
  for (int s : seen) EXPECT_EQ(s, 1);
}

const SimilarityWeights kAppearanceOnly{1.0, 0.0, 0.0};

}  // namespace

TEST(PairwiseSimilarity, Examples) {
  const std::vector<float> e0{1, 0}, e1{0, 1};
  EXPECT_DOUBLE_EQ(pairwise_similarity(det(0, e0), det(1, e0), {1, 1, 1}), 3.0);
  EXPECT_DOUBLE_EQ(pairwise_similarity(det(0, e0, "chair"), det(5, e1, "table"), {1, 1, 1}), 0.0);
  EXPECT_DOUBLE_EQ(pairwise_similarity(det(0, e0, "chair", {0, 0, 10, 10}), det(1, e0, "chair", {20, 20, 30, 30}), {1, 1, 1}),
                   2.0);
}

TEST(PairwiseSimilarity, SpatialTermOnlyForAdjacentFrames) {
  const std::vector<float> e0{1, 0};
  EXPECT_DOUBLE_EQ(pairwise_similarity(det(0, e0), det(2, e0), {0, 0, 1}), 0.0);
  EXPECT_DOUBLE_EQ(pairwise_similarity(det(3, e0, "c", {0, 0, 10, 10}), det(2, e0, "c", {5, 0, 15, 10}), {0, 0, 1}),
                   50.0 / 150.0);
}

TEST(PairwiseSimilarity, SameFrameThrows) {
  const std::vector<float> e0{1, 0};
  EXPECT_THROW(pairwise_similarity(det(4, e0), det(4, e0)), std::invalid_argument);
}

TEST(PartitionTracks, TrivialSizes) {
  EXPECT_TRUE(partition_tracks({}).empty());
  const std::vector<Detection> one{det(0, {1, 0})};
  const auto tracks = partition_tracks(one);
  ASSERT_EQ(tracks.size(), 1u);
  EXPECT_EQ(tracks[0].detections.size(), 1u);
  EXPECT_EQ(tracks[0].category, "chair");
}

TEST(PartitionTracks, TwoWellSeparatedGroups) {
  const auto dets = two_groups();
  const auto clusters = cluster_detections(dets, kAppearanceOnly, 0.5);
  ASSERT_EQ(clusters.size(), 2u);
  EXPECT_EQ(clusters[0], (std::vector<std::size_t>{0, 2, 4}));
  EXPECT_EQ(clusters[1], (std::vector<std::size_t>{1, 3, 5}));

  // Exhaustive enumeration agrees on the objective: 2 groups × 3 pairs × (0.9 − 0.5) = 2.4.
  const auto exact = exact_partition(dets, kAppearanceOnly, 0.5);
  EXPECT_NEAR(partition_objective(dets, exact, kAppearanceOnly, 0.5), 2.4, 1e-6);
  EXPECT_NEAR(partition_objective(dets, clusters, kAppearanceOnly, 0.5),
              partition_objective(dets, exact, kAppearanceOnly, 0.5), 1e-12);
}

TEST(PartitionTracks, SameFrameNeverMerged) {
  const std::vector<Detection> dets{det(3, {1, 0}), det(3, {1, 0})};
  EXPECT_EQ(partition_tracks(dets).size(), 2u);
}

TEST(PartitionTracks, TracksAreOrderedAndLabelled) {
  std::vector<Detection> dets{det(2, {1, 0}, "sofa"), det(0, {1, 0}, "chair"), det(1, {1, 0}, "chair")};
  const auto tracks = partition_tracks(dets);
  ASSERT_EQ(tracks.size(), 1u);
  EXPECT_EQ(tracks[0].track_id, "track_0000");
  EXPECT_EQ(tracks[0].category, "chair");
  EXPECT_EQ(tracks[0].detections[0].frame_id, 0);
  EXPECT_EQ(tracks[0].detections[2].frame_id, 2);
}

TEST(ExactPartition, Examples) {
  // All similarities below θ: singletons.
  std::vector<Detection> dets{det(0, {1, 0, 0}), det(1, {0, 1, 0}), det(2, {0, 0, 1})};
  EXPECT_EQ(exact_partition(dets, kAppearanceOnly, 0.5).size(), 3u);
  // Mutually similar in three frames: one track.
  std::vector<Detection> same{det(0, {1, 0}), det(1, {1, 0}), det(2, {1, 0})};
  EXPECT_EQ(exact_partition_oracle(same).size(), 1u);
}

TEST(ExactPartition, SizeLimit) {
  std::vector<Detection> dets;
  for (int i = 0; i < 11; ++i) dets.push_back(det(i, {1, 0}));
  EXPECT_THROW(exact_partition(dets), std::invalid_argument);
}

TEST(PartitionTracks, GreedyBeatsSingletonsAndIsValid) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const auto dets = test_support::random_detections(rng, 1 + trial * 3, 1 + trial % 6, 4 + trial % 9);
    const auto clusters = cluster_detections(dets);
    expect_valid_partition(dets, clusters);
    EXPECT_GE(partition_objective(dets, clusters, {}, kDefaultMergeThreshold), 0.0);
  }
}

TEST(PartitionTracks, GreedyCloseToOracleOnSmallInstances) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 40; ++trial) {
    const auto dets = test_support::random_detections(rng, 4 + trial % 7, 2 + trial % 3, 3 + trial % 4);
    const auto greedy = cluster_detections(dets);
    const auto exact = exact_partition(dets);
    const double g = partition_objective(dets, greedy, {}, kDefaultMergeThreshold);
    const double e = partition_objective(dets, exact, {}, kDefaultMergeThreshold);
    EXPECT_LE(g, e + 1e-9);
    EXPECT_GE(g, 0.9 * e - 1e-9) << "trial " << trial;
  }
}

TEST(PartitionTracks, DeterministicGivenInputOrder) {
  std::mt19937_64 rng(29);
  const auto dets = test_support::random_detections(rng, 60, 5, 12);
  EXPECT_EQ(cluster_detections(dets), cluster_detections(dets));
}

TEST(MakeTrack, RejectsDuplicateFrames) {
  EXPECT_THROW(make_track("t", {det(1, {1, 0}), det(1, {1, 0})}), std::invalid_argument);
  EXPECT_THROW(make_track("t", {}), std::invalid_argument);
  const auto manual = make_track("m", {det(4, {1, 0})}, TrackSource::manual);
  EXPECT_EQ(manual.source, TrackSource::manual);
}
