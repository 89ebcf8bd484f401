#pragma once

#include <httplib.h>

#include <condition_variable>
#include <deque>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <semaphore>
#include <string>
#include <thread>
#include <vector>

#include "cadkit/dataset.hpp"
#include "cadkit/mesh.hpp"
#include "cadkit/pipeline.hpp"
#include "cadkit/pose_solver.hpp"
#include "cadkit/retrieval.hpp"
#include "cadkit/tasks.hpp"

// HTTP service over a dataset directory: hands out annotation tasks, accepts their results and
// serves the scene, frame, mesh, candidate and solve data the annotation UI needs.
namespace cadkit {

/// Fixed number of threads draining a FIFO job queue.
class WorkerPool {
public:
  explicit WorkerPool(unsigned threads) {
    for (unsigned i = 0; i < std::max(1u, threads); ++i) threads_.emplace_back([this] { run(); });
  }

  ~WorkerPool() { shutdown(); }

  void post(std::function<void()> job) {
    {
      std::lock_guard lock(mu_);
      if (stopping_) return;
      jobs_.push_back(std::move(job));
    }
    cv_.notify_one();
  }

  /// Blocks until the queue is empty and no job is running.
  void wait_idle() {
    std::unique_lock lock(mu_);
    idle_.wait(lock, [this] { return jobs_.empty() && running_ == 0; });
  }

  void shutdown() {
    {
      std::lock_guard lock(mu_);
      if (stopping_) return;
      stopping_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

private:
  void run() {
    for (;;) {
      std::function<void()> job;
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [this] { return stopping_ || !jobs_.empty(); });
        if (jobs_.empty()) return;
        job = std::move(jobs_.front());
        jobs_.pop_front();
        ++running_;
      }
      job();
      {
        std::lock_guard lock(mu_);
        --running_;
      }
      idle_.notify_all();
    }
  }

  std::mutex mu_;
  std::condition_variable cv_, idle_;
  std::deque<std::function<void()>> jobs_;
  std::vector<std::thread> threads_;
  int running_ = 0;
  bool stopping_ = false;
};

struct ServiceOptions {
  fs::path data_dir;
  SolverConfig solver = [] {
    SolverConfig c;
    c.time_budget_s = 60;
    return c;
  }();
  unsigned solver_workers = 2;  ///< concurrent solver runs, shared by background and request-driven solves
  bool auto_solve = true;       ///< solve CORRESPONDED tasks in the background as they arrive
  std::size_t compact_every = 1000;
  int keyframes = kDefaultKeyframes;
  fs::path static_dir;  ///< served at / when set
};

class AnnotationService {
public:
  explicit AnnotationService(ServiceOptions opt)
      : opt_(std::move(opt)), data_{opt_.data_dir}, solve_slots_(std::max(1u, opt_.solver_workers)),
        pool_(opt_.solver_workers) {
    opt_.solver.validate();
    store_ = std::make_unique<TaskStore>(TaskStoreOptions{data_.tasks(), opt_.compact_every});
    load();
    hooks_.check_correspondences = [this](const AnnotationTask& t, const CorrespondenceSet& c) {
      validate(c, scene(t.scene_id).scene.frames);
    };
    hooks_.solve = [this](const AnnotationTask& t, const CorrespondenceSet& c) { return solve(t, c); };
    routes();
    // Tasks acknowledged as CORRESPONDED before a restart still need their solve.
    if (opt_.auto_solve)
      for (const auto& t : store_->tasks())
        if (t.stage == Stage::CORRESPONDED) schedule_solve(t.task_id, t.version);
  }

  ~AnnotationService() {
    stop();
    pool_.shutdown();
  }

  AnnotationService(const AnnotationService&) = delete;
  AnnotationService& operator=(const AnnotationService&) = delete;

  /// Binds to `port` (0 picks a free one) and returns the bound port.
  int bind(const std::string& host, int port) {
    if (port == 0) return server_.bind_to_any_port(host);
    if (!server_.bind_to_port(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
    return port;
  }

  /// Serves until stop().
  void run() { server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() { server_.wait_until_ready(); }
  void wait_idle() { pool_.wait_idle(); }

  TaskStore& store() { return *store_; }
  const TaskHooks& hooks() const { return hooks_; }

  /// Submission entry point shared by the HTTP route; schedules the background solve.
  AnnotationTask submit(const std::string& task_id, const TaskPayload& p) {
    auto t = store_->submit(task_id, p, hooks_);
    if (opt_.auto_solve && t.stage == Stage::CORRESPONDED) schedule_solve(task_id, t.version);
    return t;
  }

private:
  void schedule_solve(const std::string& task_id, std::int64_t version) {
    pool_.post([this, task_id, version] {
      TaskPayload solve;
      solve.kind = PayloadKind::solve;
      solve.version = version;
      solve.annotator_id = "solver";
      try {
        store_->submit(task_id, solve, hooks_);
      } catch (const VersionConflictError&) {
        // Someone else moved the task on.
      } catch (const std::exception& e) {
        std::cerr << "solve " << task_id << ": " << e.what() << "\n";
      }
    });
  }

  struct TrackRef {
    std::string scene_id;
    std::size_t index;
  };

  const SceneRecord& scene(const std::string& id) const {
    const auto it = scenes_.find(id);
    if (it == scenes_.end()) throw NotFoundError("no scene " + id);
    return it->second;
  }

  const Track& track(const std::string& id) const {
    const auto it = tracks_.find(id);
    if (it == tracks_.end()) throw NotFoundError("no track " + id);
    return scene(it->second.scene_id).tracks[it->second.index];
  }

  void load() {
    std::vector<ModelViewDescriptors> db;
    if (fs::exists(data_.descriptors())) db = parse_descriptor_db_jsonl(read_file(data_.descriptors().string()));
    const auto emb = ConceptEmbeddingProvider::furniture();
    std::vector<fs::path> dirs;
    if (fs::exists(data_.scenes()))
      for (const auto& e : fs::directory_iterator(data_.scenes()))
        if (e.is_directory() && fs::exists(e.path() / "scene.json")) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    for (const auto& dir : dirs) {
      auto rec = load_scene_record(dir);
      const auto sid = rec.scene.scene_id;
      if (scenes_.count(sid)) throw SchemaError(dir.string(), "duplicate scene id " + sid);
      std::map<std::string, CandidateList> lists;
      for (auto& c : rec.candidates) lists[c.track_id] = c;
      for (std::size_t i = 0; i < rec.tracks.size(); ++i) {
        const auto& t = rec.tracks[i];
        if (!is_safe_id(t.track_id)) throw SchemaError(dir.string(), "unusable track id '" + t.track_id + "'");
        if (tracks_.count(t.track_id)) throw SchemaError(dir.string(), "duplicate track id " + t.track_id);
        tracks_[t.track_id] = {sid, i};
        CandidateList c;
        if (lists.count(t.track_id)) c = lists[t.track_id];
        else if (!db.empty() && !t.detections.empty()) c = rank_candidates(t, db, emb);
        else c.track_id = t.track_id;
        candidates_[t.track_id] = c;
        const auto task_id = "task_" + t.track_id;
        if (!store_->contains(task_id)) {
          AnnotationTask task;
          task.task_id = task_id;
          task.track_id = t.track_id;
          task.scene_id = sid;
          task.candidates = c;
          store_->create(task);
        }
      }
      scenes_.emplace(sid, std::move(rec));
    }
  }

  struct Model {
    TriangleMesh mesh;
    SymmetryClass symmetry;
  };

  std::shared_ptr<const Model> model(const std::string& id) {
    {
      std::lock_guard lock(models_mu_);
      if (const auto it = models_.find(id); it != models_.end()) return it->second;
    }
    if (!is_safe_id(id) || !fs::exists(data_.model(id))) throw NotFoundError("no model " + id);
    auto m = std::make_shared<Model>();
    m->mesh = load_mesh_file(data_.model(id).string());
    m->mesh.model_id = id;
    m->symmetry = detect_symmetry(m->mesh);
    std::lock_guard lock(models_mu_);
    return models_.emplace(id, std::move(m)).first->second;
  }

  SolveResult solve(const AnnotationTask& t, const CorrespondenceSet& c) {
    const auto m = model(t.model_id);
    auto labelled = c;
    // Meshes loaded from OBJ carry no label; the detector's label decides whether the up-axis term applies.
    if (labelled.category.empty()) labelled.category = track(t.track_id).category;
    solve_slots_.acquire();
    struct Release {
      std::counting_semaphore<>& slots;
      ~Release() { slots.release(); }
    } release{solve_slots_};
    return estimate_pose(labelled, scene(t.scene_id).scene.frames, m->mesh, m->symmetry, opt_.solver);
  }

  json task_view(const AnnotationTask& t) const {
    auto j = to_json(t);
    j["keyframes"] = select_keyframes(track(t.track_id), opt_.keyframes);
    return j;
  }

  static void send_json(httplib::Response& res, const json& j, int status = 200) {
    res.status = status;
    res.set_content(j.dump(), "application/json");
  }

  template <typename F>
  static void guarded(httplib::Response& res, F&& f) {
    try {
      f();
    } catch (const VersionConflictError& e) {
      send_json(res, {{"error", e.what()}}, 409);
    } catch (const NotFoundError& e) {
      send_json(res, {{"error", e.what()}}, 404);
    } catch (const TransitionError& e) {
      send_json(res, {{"error", e.what()}}, 422);
    } catch (const PayloadError& e) {
      send_json(res, {{"error", e.what()}}, 422);
    } catch (const ParseError& e) {
      send_json(res, {{"error", e.what()}}, 422);
    } catch (const SchemaError& e) {
      send_json(res, {{"error", e.what()}}, 422);
    } catch (const std::exception& e) {
      send_json(res, {{"error", e.what()}}, 500);
    }
  }

  static std::string content_type_for(const fs::path& p) {
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") return "image/png";
    if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
    return "application/octet-stream";
  }

  void routes() {
    if (!opt_.static_dir.empty()) server_.set_mount_point("/", opt_.static_dir.string());

    server_.Get("/api/tasks/next", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto name = req.get_param_value("stage");
        const auto stage = stage_from_string(name);
        if (!stage) throw PayloadError("unknown stage '" + name + "'");
        const auto t = store_->next(*stage);
        if (!t) throw NotFoundError(std::string("no task in stage ") + to_string(*stage));
        send_json(res, task_view(*t));
      });
    });

    server_.Get(R"(/api/tasks/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { send_json(res, task_view(store_->get(req.matches[1]))); });
    });

    server_.Post(R"(/api/tasks/([^/]+)/result)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const std::string id = req.matches[1];
        store_->get(id);  // 404 before parsing the body
        const auto payload = payload_from_json(parse_json(req.body, "request body"));
        send_json(res, task_view(submit(id, payload)));
      });
    });

    server_.Get(R"(/api/scenes/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { send_json(res, to_json(scene(req.matches[1]).scene)); });
    });

    server_.Get(R"(/api/scenes/([^/]+)/frames/(-?\d+)/image)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto& rec = scene(req.matches[1]);
        const auto frame_id = std::stoll(req.matches[2]);
        std::size_t i = 0;
        while (i < rec.scene.frames.size() && rec.scene.frames[i].frame_id != frame_id) ++i;
        if (i == rec.scene.frames.size()) throw NotFoundError("no frame " + std::to_string(frame_id));
        if (i >= rec.scene.images.size() || rec.scene.images[i].empty())
          throw NotFoundError("frame " + std::to_string(frame_id) + " has no image");
        const auto path = rec.dir / rec.scene.images[i];
        if (!fs::exists(path)) throw NotFoundError("missing image " + rec.scene.images[i]);
        res.set_content(read_file(path.string()), content_type_for(path));
      });
    });

    server_.Get(R"(/api/models/([^/]+)/mesh)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const std::string id = req.matches[1];
        if (!is_safe_id(id) || !fs::exists(data_.model(id))) throw NotFoundError("no model " + id);
        res.set_content(read_file(data_.model(id).string()), "model/obj");
      });
    });

    server_.Get(R"(/api/tracks/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { send_json(res, to_json(track(req.matches[1]))); });
    });

    server_.Get(R"(/api/tracks/([^/]+)/candidates)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const std::string id = req.matches[1];
        track(id);
        send_json(res, to_json(candidates_.at(id)));
      });
    });

    server_.Get(R"(/api/tracks/([^/]+)/solve-result)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const std::string id = req.matches[1];
        track(id);
        const auto t = store_->find_by_track(id);
        if (!t || !t->solve_result) throw NotFoundError("track " + id + " has no solve result yet");
        send_json(res, to_json(*t->solve_result));
      });
    });
  }

  ServiceOptions opt_;
  DataDir data_;
  std::unique_ptr<TaskStore> store_;
  std::map<std::string, SceneRecord> scenes_;
  std::map<std::string, TrackRef> tracks_;
  std::map<std::string, CandidateList> candidates_;
  std::mutex models_mu_;
  std::map<std::string, std::shared_ptr<const Model>> models_;
  std::counting_semaphore<> solve_slots_;
  TaskHooks hooks_;
  httplib::Server server_;
  WorkerPool pool_;
};

}  // namespace cadkit
