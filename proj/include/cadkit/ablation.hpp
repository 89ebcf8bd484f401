#pragma once

#include <cstdio>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cadkit/pose_solver.hpp"
#include "cadkit/synthetic.hpp"

namespace cadkit {

struct AblationConfig {
  std::string name;
  SolverConfig solver;
};

/// base → +coplanar → +symmetry → +up-axis, each adding one component to the previous.
inline std::vector<AblationConfig> cumulative_ablation_configs(const SolverConfig& full = {}) {
  SolverConfig base = full;
  base.use_coplanar_scale = false;
  base.use_symmetry = false;
  base.alpha = 0;
  SolverConfig coplanar = base;
  coplanar.use_coplanar_scale = true;
  SolverConfig symmetry = coplanar;
  symmetry.use_symmetry = true;
  SolverConfig up = symmetry;
  up.alpha = full.alpha;
  return {{"base", base}, {"+coplanar", coplanar}, {"+symmetry", symmetry}, {"+up_axis", up}};
}

/// Harder annotation conditions used for the ablation: noisier clicks, fewer points, some
/// clicks on the wrong surface point, and symmetric objects relabelled only now and then.
inline SyntheticSpec ablation_harness_spec(int objects = 200, std::uint64_t seed = 1) {
  SyntheticSpec spec;
  spec.objects = objects;
  spec.seed = seed;
  spec.pixel_noise = 2.0;
  spec.points_per_frame = 4;
  spec.mislabel_rate = 0.2;
  spec.relabel_rate = 0.2;
  return spec;
}

/// Frames an annotator would check the overlay in: every frame of the object's track.
inline std::vector<CameraFrame> verification_cameras(const SyntheticSuite& suite, const SyntheticObject& object) {
  std::vector<CameraFrame> out;
  for (const auto& d : object.track.detections) out.push_back(*suite.scenes[object.scene].find_frame(d.frame_id));
  return out;
}

/// Solves `object` under `cfg` and applies the verification proxy to its overlay discrepancy.
inline bool verify_synthetic(const SyntheticSuite& suite, const SyntheticObject& object, const SolverConfig& cfg,
                             double tau_px) {
  const auto& mesh = suite.meshes[object.mesh];
  const auto result = estimate_pose(object.correspondences, suite.annotated_cameras(object), mesh, object.symmetry, cfg);
  const auto overlay = overlay_discrepancy(mesh, result.pose, object.pose, object.symmetry, verification_cameras(suite, object));
  return verify_pose_proxy(overlay.mean_px, overlay.per_frame_px, tau_px);
}

struct AblationRow {
  std::string name;
  std::size_t verified = 0;
  std::size_t total = 0;
  double fraction() const { return total ? static_cast<double>(verified) / static_cast<double>(total) : 0.0; }
};

inline std::vector<AblationRow> run_ablation(std::span<const AblationConfig> configs, const SyntheticSuite& suite,
                                             double tau_px = 5.0) {
  if (suite.objects.empty()) throw std::invalid_argument("empty suite");
  std::vector<AblationRow> rows;
  for (const auto& c : configs) {
    AblationRow row{c.name, 0, suite.objects.size()};
    for (const auto& o : suite.objects) row.verified += verify_synthetic(suite, o, c.solver, tau_px);
    rows.push_back(row);
  }
  return rows;
}

inline std::string ablation_csv(std::span<const AblationRow> rows) {
  std::ostringstream out;
  out << "config,verified,total,fraction\n";
  for (const auto& r : rows) {
    char frac[32];
    std::snprintf(frac, sizeof(frac), "%.4f", r.fraction());
    out << r.name << ',' << r.verified << ',' << r.total << ',' << frac << '\n';
  }
  return out.str();
}

}  // namespace cadkit
