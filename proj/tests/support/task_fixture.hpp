#pragma once

#include <string>
#include <vector>

#include "cadkit/synthetic.hpp"
#include "cadkit/tasks.hpp"

namespace cadkit::test_support {

/// Synthetic objects wrapped as annotation tasks, with hooks that validate against the
/// generated cameras and solve with a reduced budget.
struct TaskFixture {
  SyntheticSuite suite;
  std::vector<AnnotationTask> seeds;
  std::vector<int> true_candidate;  ///< index of the generating model in each candidate list
  SolverConfig solver;

  explicit TaskFixture(int objects = 4, std::uint64_t seed = 17) {
    SyntheticSpec spec;
    spec.objects = objects;
    spec.seed = seed;
    suite = generate_synthetic_suite(spec);
    solver.steps = 120;
    solver.n_starts = 6;
    for (std::size_t i = 0; i < suite.objects.size(); ++i) {
      const auto& o = suite.objects[i];
      AnnotationTask t;
      t.task_id = "task-" + std::to_string(i);
      t.track_id = o.track.track_id;
      t.scene_id = suite.scenes[o.scene].scene_id;
      t.candidates.track_id = t.track_id;
      const int truth = static_cast<int>(i % 3);
      for (int c = 0; c < 5; ++c)
        t.candidates.entries.push_back({c == truth ? suite.meshes[o.mesh].model_id : "decoy-" + std::to_string(c), 1.0 - 0.1 * c});
      seeds.push_back(t);
      true_candidate.push_back(truth);
    }
  }

  std::size_t object_of(const AnnotationTask& t) const {
    for (std::size_t i = 0; i < seeds.size(); ++i)
      if (seeds[i].task_id == t.task_id) return i;
    throw std::out_of_range(t.task_id);
  }

  TaskHooks hooks() const {
    TaskHooks h;
    h.check_correspondences = [this](const AnnotationTask& t, const CorrespondenceSet& c) {
      validate(c, suite.scenes[suite.objects[object_of(t)].scene].frames);
    };
    h.solve = [this](const AnnotationTask& t, const CorrespondenceSet& c) {
      const auto& o = suite.objects[object_of(t)];
      return estimate_pose(c, suite.annotated_cameras(o), suite.meshes[o.mesh], o.symmetry, solver);
    };
    return h;
  }

  /// A well-formed payload of `kind` for `t` at its current version.
  TaskPayload payload(const AnnotationTask& t, PayloadKind kind, bool accept = true) const {
    TaskPayload p;
    p.kind = kind;
    p.version = t.version;
    p.annotator_id = "ann";
    const auto i = object_of(t);
    if (kind == PayloadKind::candidate_choice) p.candidate_index = true_candidate[i];
    if (kind == PayloadKind::correspondences) p.correspondences = suite.objects[i].correspondences;
    if (kind == PayloadKind::verdict) p.accept = accept;
    return p;
  }

  /// Drives a copy of seed `i` along the declared graph until it reaches `target`.
  AnnotationTask at_stage(std::size_t i, Stage target) const {
    AnnotationTask t = seeds[i];
    const auto h = hooks();
    auto step = [&](PayloadKind k, bool accept = true) { t = advance_task(t, payload(t, k, accept), h); };
    if (target == Stage::TRACKED) return t;
    if (target == Stage::REJECTED_NO_MATCH) {
      step(PayloadKind::none_match);
      return t;
    }
    step(PayloadKind::candidate_choice);
    if (target == Stage::CAD_SELECTED) return t;
    step(PayloadKind::correspondences);
    if (target == Stage::CORRESPONDED) return t;
    step(PayloadKind::solve);
    if (target == Stage::POSED) return t;
    step(PayloadKind::verdict, target == Stage::VERIFIED_OK);
    return t;
  }
};

}  // namespace cadkit::test_support
