#include <gtest/gtest.h>

#include <unistd.h>

#include <thread>

#include "cadkit/dataset.hpp"
#include "cadkit/service.hpp"

using namespace cadkit;

namespace {

struct Running {
  std::unique_ptr<AnnotationService> service;
  std::thread thread;
  int port = 0;

  Running(const fs::path& dir, bool auto_solve = true) {
    ServiceOptions opt;
    opt.data_dir = dir;
    opt.auto_solve = auto_solve;
    opt.solver.steps = 200;
    opt.solver.n_starts = 8;
    service = std::make_unique<AnnotationService>(opt);
    port = service->bind("127.0.0.1", 0);
    thread = std::thread([this] { service->run(); });
    service->wait_until_ready();
  }

  ~Running() {
    service->stop();
    thread.join();
  }

  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(30, 0);
    return c;
  }
};

class ServiceTest : public ::testing::Test {
protected:
  static void SetUpTestSuite() {
    SyntheticSpec spec;
    spec.objects = 3;
    spec.objects_per_scene = 3;
    spec.seed = 8;
    suite_ = new SyntheticSuite(generate_synthetic_suite(spec));
  }
  static void TearDownTestSuite() { delete suite_; }

  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("cadkit_service_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    export_synthetic_dataset(*suite_, dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  static json body(const httplib::Result& r) { return json::parse(r->body); }

  static json post(httplib::Client& c, const std::string& task_id, const json& payload, int expect) {
    auto r = c.Post("/api/tasks/" + task_id + "/result", payload.dump(), "application/json");
    EXPECT_TRUE(r);
    if (!r) return {};
    EXPECT_EQ(r->status, expect) << r->body;
    return json::parse(r->body);
  }

  static SyntheticSuite* suite_;
  fs::path dir_;
};

SyntheticSuite* ServiceTest::suite_ = nullptr;

}  // namespace

TEST_F(ServiceTest, ReadEndpoints) {
  Running run(dir_);
  auto c = run.client();
  const auto& scene = suite_->scenes[0];

  auto r = c.Get("/api/scenes/" + scene.scene_id);
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(canonical(body(r)), read_file((dir_ / "scenes" / scene.scene_id / "scene.json").string()));
  EXPECT_EQ(c.Get("/api/scenes/nope")->status, 404);

  r = c.Get("/api/scenes/" + scene.scene_id + "/frames/" + std::to_string(scene.frames[3].frame_id) + "/image");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(r->get_header_value("Content-Type"), "image/png");
  EXPECT_EQ(r->body.substr(1, 3), "PNG");
  EXPECT_EQ(c.Get("/api/scenes/" + scene.scene_id + "/frames/999/image")->status, 404);

  const auto& mesh = suite_->meshes[suite_->objects[0].mesh];
  r = c.Get("/api/models/" + mesh.model_id + "/mesh");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(r->body, to_obj(mesh));
  EXPECT_EQ(load_mesh(r->body).triangles.size(), mesh.triangles.size());
  EXPECT_EQ(c.Get("/api/models/..%2Fscenes/mesh")->status, 404);

  const auto& track = suite_->objects[1].track;
  r = c.Get("/api/tracks/" + track.track_id + "/candidates");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  const auto cands = candidates_from_json(body(r));
  EXPECT_LE(cands.entries.size(), kCandidateCount);
  EXPECT_EQ(cands.entries[0].model_id, suite_->meshes[suite_->objects[1].mesh].model_id);
  EXPECT_EQ(c.Get("/api/tracks/" + track.track_id + "/solve-result")->status, 404);
  EXPECT_EQ(c.Get("/api/tracks/ghost/candidates")->status, 404);

  r = c.Get("/api/tasks/next?stage=TRACKED");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  const auto task = body(r);
  EXPECT_EQ(task["task_id"], "task_" + suite_->objects[0].track.track_id);
  EXPECT_EQ(task["version"], 0);
  EXPECT_FALSE(task["keyframes"].empty());
  EXPECT_EQ(c.Get("/api/tasks/next?stage=POSED")->status, 404);
  EXPECT_EQ(c.Get("/api/tasks/next?stage=DONE")->status, 422);
}

TEST_F(ServiceTest, FullTaskLifecycle) {
  const auto& o = suite_->objects[0];
  const std::string id = "task_" + o.track.track_id;
  {
    Running run(dir_);
    auto c = run.client();
    auto task = body(c.Get("/api/tasks/" + id));
    const auto& entries = task["payload"]["candidates"]["entries"];
    int truth = -1;
    for (std::size_t i = 0; i < entries.size(); ++i)
      if (entries[i]["model_id"] == suite_->meshes[o.mesh].model_id) truth = static_cast<int>(i);
    ASSERT_GE(truth, 0);

    post(c, id, {{"kind", "candidate_choice"}, {"version", 0}, {"candidate_index", 99}}, 422);
    post(c, id, {{"kind", "verdict"}, {"version", 0}, {"accept", true}}, 422);
    EXPECT_EQ(c.Post("/api/tasks/" + id + "/result", "{not json", "application/json")->status, 422);
    post(c, "task_ghost", {{"kind", "none_match"}, {"version", 0}}, 404);

    task = post(c, id, {{"kind", "candidate_choice"}, {"version", 0}, {"candidate_index", truth}, {"annotator_id", "a1"}}, 200);
    EXPECT_EQ(task["stage"], "CAD_SELECTED");
    EXPECT_EQ(task["version"], 1);
    post(c, id, {{"kind", "candidate_choice"}, {"version", 0}, {"candidate_index", 0}, {"annotator_id", "a2"}}, 409);

    const auto corr = load_json_file(dir_ / "scenes" / suite_->scenes[o.scene].scene_id / "correspondences" / (o.track.track_id + ".json"));
    task = post(c, id, {{"kind", "correspondences"}, {"version", 1}, {"correspondences", corr}}, 200);
    EXPECT_EQ(task["stage"], "CORRESPONDED");

    run.service->wait_idle();
    task = body(c.Get("/api/tasks/" + id));
    EXPECT_EQ(task["stage"], "POSED");
    auto r = c.Get("/api/tracks/" + o.track.track_id + "/solve-result");
    ASSERT_EQ(r->status, 200);
    const auto result = solve_result_from_json(body(r));
    const auto err = pose_error(result.pose, o.pose, o.symmetry);
    EXPECT_LT(err.rotation_deg, 5.0);
    EXPECT_LT(err.scale_rel, 0.1);

    task = post(c, id, {{"kind", "verdict"}, {"version", 3}, {"accept", true}}, 200);
    EXPECT_EQ(task["stage"], "VERIFIED_OK");
    post(c, id, {{"kind", "verdict"}, {"version", 4}, {"accept", false}}, 422);

    const std::string other = "task_" + suite_->objects[1].track.track_id;
    EXPECT_EQ(post(c, other, {{"kind", "none_match"}, {"version", 0}}, 200)["stage"], "REJECTED_NO_MATCH");
  }
  // Acknowledged writes survive a restart, and tasks are not recreated.
  Running again(dir_);
  auto c = again.client();
  const auto task = body(c.Get("/api/tasks/" + id));
  EXPECT_EQ(task["stage"], "VERIFIED_OK");
  EXPECT_EQ(task["version"], 4);
  EXPECT_EQ(body(c.Get("/api/tasks/next?stage=TRACKED"))["task_id"], "task_" + suite_->objects[2].track.track_id);
}

TEST_F(ServiceTest, RestartResumesPendingSolve) {
  const auto& o = suite_->objects[2];
  const std::string id = "task_" + o.track.track_id;
  {
    Running run(dir_, false);
    auto c = run.client();
    auto task = body(c.Get("/api/tasks/" + id));
    const auto model = suite_->meshes[o.mesh].model_id;
    int truth = 0;
    for (std::size_t i = 0; i < task["payload"]["candidates"]["entries"].size(); ++i)
      if (task["payload"]["candidates"]["entries"][i]["model_id"] == model) truth = static_cast<int>(i);
    post(c, id, {{"kind", "candidate_choice"}, {"version", 0}, {"candidate_index", truth}}, 200);
    const json corr = {{"kind", "correspondences"}, {"version", 1}, {"correspondences", to_json(o.correspondences)}};
    const auto first = post(c, id, corr, 200);
    // Retrying the acknowledged submission returns the same task.
    EXPECT_EQ(post(c, id, corr, 200), first);
    run.service->wait_idle();
    EXPECT_EQ(body(c.Get("/api/tasks/" + id))["stage"], "CORRESPONDED");
  }
  Running again(dir_);
  again.service->wait_idle();
  EXPECT_EQ(again.service->store().get(id).stage, Stage::POSED);
}
