#include <gtest/gtest.h>

#include "cadkit/ablation.hpp"
#include "cadkit/io.hpp"
#include "cadkit/synthetic.hpp"

using namespace cadkit;

namespace {

SyntheticSuite small_suite() {
  SyntheticSpec spec;
  spec.objects = 3;
  spec.objects_per_scene = 3;
  spec.seed = 11;
  return generate_synthetic_suite(spec);
}

std::string rewrite(const std::string& text, auto parse) { return canonical(to_json(parse(parse_json(text)))); }

}  // namespace

TEST(Json, SceneRoundTripIsCanonical) {
  const auto suite = small_suite();
  Scene scene = suite.scenes[0];
  scene.images.assign(scene.frames.size(), "");
  for (std::size_t i = 0; i < scene.frames.size(); ++i) scene.images[i] = "frames/" + std::to_string(i) + ".png";
  const auto text = canonical(to_json(scene));
  const auto back = scene_from_json(parse_json(text));
  EXPECT_EQ(canonical(to_json(back)), text);
  ASSERT_EQ(back.frames.size(), scene.frames.size());
  EXPECT_EQ(back.frames[2].rotation, scene.frames[2].rotation);
  EXPECT_EQ(back.frames[2].translation, scene.frames[2].translation);
  EXPECT_EQ(back.images, scene.images);
}

TEST(Json, SceneErrorsNameTheField) {
  const auto suite = small_suite();
  auto j = to_json(suite.scenes[0]);
  j["frames"][3]["extrinsics"][0] = 2.0;
  try {
    scene_from_json(j);
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("frames[3]"), std::string::npos) << e.what();
  }
  j = to_json(suite.scenes[0]);
  j["frames"][1].erase("intrinsics");
  try {
    scene_from_json(j);
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.path(), "scene.frames[1].intrinsics");
  }
  j = to_json(suite.scenes[0]);
  j["frames"] = json::array({j["frames"][0]});
  EXPECT_THROW(scene_from_json(j), SchemaError);
  EXPECT_THROW(parse_json("{\"scene_id\": "), ParseError);
}

TEST(Json, TracksRoundTrip) {
  const auto suite = small_suite();
  std::vector<Track> tracks;
  for (const auto& o : suite.objects) tracks.push_back(o.track);
  const auto text = canonical(tracks_to_json(tracks));
  const auto back = tracks_from_json(parse_json(text));
  EXPECT_EQ(canonical(tracks_to_json(back)), text);
  ASSERT_EQ(back.size(), tracks.size());
  EXPECT_EQ(back[0].detections.size(), tracks[0].detections.size());
  EXPECT_EQ(back[0].category, tracks[0].category);
}

TEST(Jsonl, DetectionErrorsCarryLineNumbers) {
  const auto suite = small_suite();
  const auto& d = suite.objects[0].track.detections[0];
  const auto good = to_json(d).dump();
  auto bad_box = to_json(d);
  bad_box["box"] = json::array({10, 10, 5, 20});
  const std::string text = good + "\n\n" + good + "\n" + bad_box.dump() + "\n";
  try {
    parse_detections_jsonl(text);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 4u);
    EXPECT_NE(std::string(e.what()).find("box"), std::string::npos);
  }
  try {
    parse_detections_jsonl(good + "\n{oops\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  EXPECT_EQ(parse_detections_jsonl(good + "\n" + good).size(), 2u);

  auto not_unit = to_json(d);
  not_unit["descriptor"][0] = 5.0;
  EXPECT_THROW(parse_detections_jsonl(not_unit.dump()), ParseError);
}

TEST(Jsonl, DescriptorDatabase) {
  ModelViewDescriptors m{"chair_01", "chair", {}};
  for (std::size_t v = 0; v < kViewsPerModel; ++v) m.view_descriptors.push_back(seeded_unit_vector(v, 16));
  const auto line = to_json(m).dump();
  const auto db = parse_descriptor_db_jsonl(line + "\n" + line + "\n");
  ASSERT_EQ(db.size(), 2u);
  EXPECT_EQ(db[1].model_id, "chair_01");
  EXPECT_EQ(db[1].view_descriptors, m.view_descriptors);

  auto short_views = to_json(m);
  short_views["view_descriptors"].erase(0);
  try {
    parse_descriptor_db_jsonl(line + "\n" + short_views.dump());
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(Json, CandidatesCorrespondencesPoseRoundTrip) {
  const auto suite = small_suite();
  const auto& o = suite.objects[0];

  CandidateList c{"t1", {{"m1", 0.9}, {"m2", 0.5}}};
  const auto ct = canonical(to_json(c));
  EXPECT_EQ(rewrite(ct, [](const json& j) { return candidates_from_json(j); }), ct);

  auto corr = o.correspondences;
  corr.category = "table";
  const auto rt = canonical(to_json(corr));
  EXPECT_EQ(rewrite(rt, [](const json& j) { return correspondences_from_json(j); }), rt);
  EXPECT_NO_THROW(validate(correspondences_from_json(parse_json(rt)), suite.scenes[o.scene].frames));

  const auto pt = canonical(to_json(o.pose));
  EXPECT_EQ(rewrite(pt, [](const json& j) { return pose_from_json(j); }), pt);
  auto skewed = to_json(o.pose);
  skewed["R"][0] = 3.0;
  EXPECT_THROW(pose_from_json(skewed), SchemaError);
  auto negative = to_json(o.pose);
  negative["S"][1] = -1.0;
  EXPECT_THROW(pose_from_json(negative), SchemaError);
}

TEST(Json, CorrespondenceValidation) {
  const auto suite = small_suite();
  const auto& o = suite.objects[0];
  const auto& frames = suite.scenes[o.scene].frames;
  auto corr = o.correspondences;
  corr.items[0].q_pixel = {-0.2 * frames[0].image_size.width, 10};
  try {
    validate(corr, frames);
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.path(), "items[0].q_pixel");
  }
  corr = o.correspondences;
  corr.items[1].q_pixel = {-0.05 * frames[0].image_size.width, 10};
  EXPECT_NO_THROW(validate(corr, frames));
  corr.items[2].frame_id = 999;
  EXPECT_THROW(validate(corr, frames), SchemaError);
  EXPECT_THROW(correspondences_from_json(json{{"track_id", "t"}, {"model_id", "m"}, {"items", json::array()}}), SchemaError);
}

TEST(Json, SolverConfigAndResult) {
  SolverConfig cfg;
  cfg.alpha = 3;
  cfg.upright_categories = {"chair"};
  const auto text = canonical(to_json(cfg));
  EXPECT_EQ(canonical(to_json(solver_config_from_json(parse_json(text)))), text);
  EXPECT_EQ(solver_config_from_json(json{{"steps", 7}}).steps, 7);
  EXPECT_THROW(solver_config_from_json(json{{"stepz", 7}}), SchemaError);
  EXPECT_THROW(solver_config_from_json(json{{"steps", 0}}), SchemaError);

  const auto suite = small_suite();
  const auto& o = suite.objects[0];
  SolverConfig fast;
  fast.steps = 40;
  fast.n_starts = 2;
  const auto r = estimate_pose(o.correspondences, suite.annotated_cameras(o), suite.meshes[o.mesh], o.symmetry, fast);
  const auto rt = canonical(to_json(r));
  const auto back = solve_result_from_json(parse_json(rt));
  EXPECT_EQ(canonical(to_json(back)), rt);
  EXPECT_EQ(back.per_frame_reproj_px.size(), r.per_frame_reproj_px.size());
}

TEST(Ablation, ConfigsAreCumulative) {
  const auto cfgs = cumulative_ablation_configs();
  ASSERT_EQ(cfgs.size(), 4u);
  EXPECT_FALSE(cfgs[0].solver.use_coplanar_scale);
  EXPECT_FALSE(cfgs[0].solver.use_symmetry);
  EXPECT_EQ(cfgs[0].solver.alpha, 0);
  EXPECT_TRUE(cfgs[1].solver.use_coplanar_scale);
  EXPECT_FALSE(cfgs[1].solver.use_symmetry);
  EXPECT_TRUE(cfgs[2].solver.use_symmetry);
  EXPECT_EQ(cfgs[2].solver.alpha, 0);
  EXPECT_EQ(cfgs[3].solver.alpha, SolverConfig{}.alpha);
}

TEST(Ablation, NoiselessFullConfigVerifiesEverything) {
  SyntheticSpec spec;
  spec.objects = 8;
  spec.seed = 21;
  const auto suite = generate_synthetic_suite(spec);
  const auto cfgs = cumulative_ablation_configs();
  const std::vector<AblationConfig> full{cfgs.back()};
  const auto rows = run_ablation(full, suite);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].verified, 8u);
  EXPECT_DOUBLE_EQ(rows[0].fraction(), 1.0);
  EXPECT_EQ(ablation_csv(rows), "config,verified,total,fraction\n+up_axis,8,8,1.0000\n");

  SyntheticSuite empty;
  EXPECT_THROW(run_ablation(full, empty), std::invalid_argument);
}
