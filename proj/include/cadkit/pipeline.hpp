#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "cadkit/errors.hpp"
#include "cadkit/geometry.hpp"
#include "cadkit/io.hpp"
#include "cadkit/mesh.hpp"
#include "cadkit/scene.hpp"
#include "cadkit/tracking.hpp"

namespace cadkit {

inline constexpr int kDefaultKeyframes = 6;

/// `k` frames regularly spaced over the track's detections by index; k = 1 picks the middle one.
inline std::vector<std::int64_t> select_keyframes(const Track& track, int k = kDefaultKeyframes) {
  const auto n = track.detections.size();
  std::vector<std::int64_t> out;
  if (n == 0) return out;
  k = std::max(k, 1);
  if (n <= static_cast<std::size_t>(k)) {
    for (const auto& d : track.detections) out.push_back(d.frame_id);
  } else if (k == 1) {
    out.push_back(track.detections[(n - 1) / 2].frame_id);
  } else {
    for (int i = 0; i < k; ++i) {
      const auto idx = static_cast<std::size_t>(std::lround(static_cast<double>(i) * static_cast<double>(n - 1) / (k - 1)));
      out.push_back(track.detections[idx].frame_id);
    }
  }
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// Dataset statistics

struct PosedObject {
  std::string track_id;
  std::string model_id;
  Pose9DoF pose;
};

inline json to_json(const PosedObject& p) {
  return {{"track_id", p.track_id}, {"model_id", p.model_id}, {"pose", to_json(p.pose)}};
}

inline std::vector<PosedObject> posed_objects_from_json(const json& j) {
  using namespace io_detail;
  if (!j.is_array()) throw SchemaError("poses", "expected array");
  std::vector<PosedObject> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string path = "poses[" + std::to_string(i) + "]";
    out.push_back({string(field(j[i], "track_id", path), path + ".track_id"),
                   string(field(j[i], "model_id", path), path + ".model_id"),
                   pose_from_json(field(j[i], "pose", path), path + ".pose")});
  }
  return out;
}

inline constexpr std::size_t kTruncationBins = 10;

struct SceneStats {
  std::size_t objects = 0;
  double objects_per_frame = 0;
  double mean_bbox_area_fraction = 0;
  double z_dynamic_range = 0;  ///< per-frame max/min object-center depth, averaged over frames
  std::array<std::size_t, kTruncationBins> truncation_histogram{};
};

struct StatsOptions {
  std::size_t truncation_samples = 2000;
  std::uint64_t seed = 1;
};

/// Statistics over the posed objects of one scene. An object is visible in a frame when its
/// track has a detection there. `meshes` is keyed by model id. Its truncation is the mean
/// truncation_fraction over the object's track frames.
inline SceneStats compute_scene_stats(const Scene& scene, std::span<const Track> tracks, std::span<const PosedObject> poses,
                                      const std::map<std::string, TriangleMesh>& meshes, const StatsOptions& opt = {}) {
  if (poses.empty()) throw DegenerateError("no posed objects");
  if (scene.frames.empty()) throw DegenerateError("scene has no frames");
  // Iterate frames by id so the result does not depend on their order in the input.
  std::map<std::int64_t, const CameraFrame*> cams;
  for (const auto& f : scene.frames) cams[f.frame_id] = &f;
  std::map<std::string, const Track*> by_id;
  for (const auto& t : tracks) by_id[t.track_id] = &t;

  struct Object {
    const Track* track;
    const TriangleMesh* mesh;
    const Pose9DoF* pose;
  };
  std::vector<Object> objects;
  for (const auto& p : poses) {
    const auto t = by_id.find(p.track_id);
    if (t == by_id.end()) throw SchemaError("poses." + p.track_id, "no such track");
    const auto m = meshes.find(p.model_id);
    if (m == meshes.end()) throw SchemaError("poses." + p.track_id, "no mesh for model " + p.model_id);
    for (const auto& d : t->second->detections)
      if (!cams.count(d.frame_id))
        throw MissingCameraError("track " + p.track_id + " has a detection on unknown frame " + std::to_string(d.frame_id));
    objects.push_back({t->second, &m->second, &p.pose});
  }

  SceneStats s;
  s.objects = objects.size();

  std::map<std::int64_t, std::vector<double>> depths;
  std::size_t visible = 0, boxes = 0;
  double area_sum = 0;
  for (const auto& o : objects) {
    const Vec3 center = apply_pose(*o.pose, 0.5 * (o.mesh->bbox_min() + o.mesh->bbox_max()));
    double trunc = 0;
    for (const auto& d : o.track->detections) {
      const auto& cam = *cams.at(d.frame_id);
      ++visible;
      area_sum += d.box.area() / (static_cast<double>(cam.image_size.width) * cam.image_size.height);
      ++boxes;
      const double z = camera_depth(cam, center);
      if (z > 0) depths[d.frame_id].push_back(z);
      trunc += truncation_fraction(*o.mesh, *o.pose, cam, opt.truncation_samples, opt.seed);
    }
    if (!o.track->detections.empty()) trunc /= static_cast<double>(o.track->detections.size());
    const auto bin = std::min(kTruncationBins - 1, static_cast<std::size_t>(trunc * kTruncationBins));
    ++s.truncation_histogram[bin];
  }
  s.objects_per_frame = static_cast<double>(visible) / static_cast<double>(cams.size());
  s.mean_bbox_area_fraction = boxes ? area_sum / static_cast<double>(boxes) : 0.0;
  double ratio_sum = 0;
  for (auto& [frame, z] : depths) {
    std::sort(z.begin(), z.end());
    ratio_sum += z.back() / z.front();
  }
  s.z_dynamic_range = depths.empty() ? 0.0 : ratio_sum / static_cast<double>(depths.size());
  return s;
}

inline std::string stats_csv_header() {
  std::string h = "scene_id,objects,objects_per_frame,mean_bbox_area_fraction,z_dynamic_range";
  for (std::size_t b = 0; b < kTruncationBins; ++b) h += ",trunc_bin" + std::to_string(b);
  return h + "\n";
}

inline std::string stats_csv_row(const std::string& scene_id, const SceneStats& s) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), ",%zu,%.6f,%.6f,%.6f", s.objects, s.objects_per_frame, s.mean_bbox_area_fraction,
                s.z_dynamic_range);
  std::string row = scene_id + buf;
  for (auto c : s.truncation_histogram) row += "," + std::to_string(c);
  return row + "\n";
}

}  // namespace cadkit
