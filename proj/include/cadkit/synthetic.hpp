#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cadkit/geometry.hpp"
#include "cadkit/mesh.hpp"
#include "cadkit/pose_solver.hpp"
#include "cadkit/primitives.hpp"
#include "cadkit/retrieval.hpp"
#include "cadkit/scene.hpp"
#include "cadkit/tracking.hpp"

// Ground-truth scenes for tests, benchmarks and the ablation harness.
namespace cadkit {

struct SyntheticSpec {
  int objects = 10;
  int objects_per_scene = 4;
  int frames_per_scene = 8;
  int min_annotated_frames = 3;
  int max_annotated_frames = 4;
  int points_per_frame = 5;
  double pixel_noise = 0.0;  ///< Gaussian sigma per pixel coordinate
  double relabel_rate = 1.0;  ///< chance per frame that a symmetric object's points use a random group element
  double mislabel_rate = 0.0;  ///< chance that a clicked pixel belongs to a different surface point
  double symmetric_fraction = 0.278;
  double coplanar_fraction = 0.155;
  ImageSize image{800, 600};
  double focal = 600.0;
  double orbit_radius = 4.5;
  double orbit_arc_deg = 90.0;
  double camera_height = 1.6;
  double placement_radius = 1.5;
  double min_scale = 0.7, max_scale = 1.4;
  double anisotropy = 0.1;  ///< per-axis scale jitter, relative
  bool contiguous_annotation = false;  ///< annotate consecutive visible frames instead of a random subset
  std::uint64_t seed = 0;

  void validate() const {
    if (objects < 0 || objects_per_scene < 1) throw std::invalid_argument("object counts must be positive");
    if (frames_per_scene < 2) throw std::invalid_argument("need at least 2 frames per scene");
    if (min_annotated_frames < 1 || max_annotated_frames < min_annotated_frames || max_annotated_frames > frames_per_scene)
      throw std::invalid_argument("invalid annotated frame range");
    if (points_per_frame < 1) throw std::invalid_argument("points_per_frame must be positive");
    if (symmetric_fraction < 0 || symmetric_fraction > 1 || coplanar_fraction < 0 || coplanar_fraction > 1)
      throw std::invalid_argument("fractions must lie in [0, 1]");
  }
};

struct SyntheticObject {
  std::size_t scene = 0;
  std::size_t mesh = 0;
  Pose9DoF pose;
  SymmetryClass symmetry;
  bool coplanar = false;
  CorrespondenceSet correspondences;
  Track track;
};

struct SyntheticSuite {
  SyntheticSpec spec;
  std::vector<Scene> scenes;
  std::vector<double> scene_diameters;  ///< bbox diagonal of object centers and camera centers
  std::vector<TriangleMesh> meshes;
  std::vector<SyntheticObject> objects;

  /// Cameras of the frames annotated for `object`.
  std::vector<CameraFrame> annotated_cameras(const SyntheticObject& object) const {
    std::vector<CameraFrame> out;
    for (const auto& it : object.correspondences.items)
      if (out.empty() || out.back().frame_id != it.frame_id) out.push_back(*scenes[object.scene].find_frame(it.frame_id));
    return out;
  }
};

namespace detail {

enum class ShapeKind { box, square, round, l_shape, chair };

inline std::vector<Vec3> bbox_corners(const TriangleMesh& mesh) {
  const Vec3 lo = mesh.bbox_min(), hi = mesh.bbox_max();
  std::vector<Vec3> out;
  for (int i = 0; i < 8; ++i) out.emplace_back(i & 1 ? hi.x() : lo.x(), i & 2 ? hi.y() : lo.y(), i & 4 ? hi.z() : lo.z());
  return out;
}

inline bool fully_visible(const TriangleMesh& mesh, const Pose9DoF& pose, const CameraFrame& cam, double margin) {
  for (const auto& c : bbox_corners(mesh)) {
    const Vec3 w = apply_pose(pose, c);
    if (camera_depth(cam, w) < 0.5) return false;
    const auto px = project_point(cam, w);
    if (!px || px->x() < margin * cam.image_size.width || px->x() > (1 - margin) * cam.image_size.width ||
        px->y() < margin * cam.image_size.height || px->y() > (1 - margin) * cam.image_size.height)
      return false;
  }
  return true;
}

inline Box2D projected_box(const TriangleMesh& mesh, const Pose9DoF& pose, const CameraFrame& cam) {
  Box2D b{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
          -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const auto& v : mesh.vertices) {
    const auto px = project_point(cam, apply_pose(pose, v));
    if (!px) continue;
    b.x_min = std::min(b.x_min, px->x());
    b.y_min = std::min(b.y_min, px->y());
    b.x_max = std::max(b.x_max, px->x());
    b.y_max = std::max(b.y_max, px->y());
  }
  b.x_min = std::clamp(b.x_min, 0.0, double(cam.image_size.width));
  b.x_max = std::clamp(b.x_max, 0.0, double(cam.image_size.width));
  b.y_min = std::clamp(b.y_min, 0.0, double(cam.image_size.height));
  b.y_max = std::clamp(b.y_max, 0.0, double(cam.image_size.height));
  return b;
}

/// Marks exactly round(fraction · n) of n slots, at random positions.
inline std::vector<bool> pick_fraction(std::size_t n, double fraction, std::mt19937_64& rng) {
  std::vector<bool> out(n, false);
  const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  for (std::size_t i = 0; i < k && i < n; ++i) out[idx[i]] = true;
  return out;
}

}  // namespace detail

/// Procedural scenes: upright primitive meshes with random 9-DoF poses seen by cameras on an
/// orbit arc, plus annotator-style correspondences. Symmetric objects have their model points
/// relabelled by a random group element per frame; coplanar objects are annotated on their top
/// face only.
inline SyntheticSuite generate_synthetic_suite(const SyntheticSpec& spec) {
  using detail::ShapeKind;
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double a, double b) { return a + (b - a) * unit(rng); };
  std::normal_distribution<double> noise(0.0, 1.0);

  SyntheticSuite suite;
  suite.spec = spec;
  const auto n = static_cast<std::size_t>(spec.objects);
  const auto symmetric = detail::pick_fraction(n, spec.symmetric_fraction, rng);
  const auto coplanar = detail::pick_fraction(n, spec.coplanar_fraction, rng);
  const Intrinsics k{spec.focal, spec.focal, spec.image.width / 2.0, spec.image.height / 2.0};

  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t scene_index = i / static_cast<std::size_t>(spec.objects_per_scene);
    if (scene_index == suite.scenes.size()) {
      Scene scene;
      char id[32];
      std::snprintf(id, sizeof(id), "synth_%04zu", scene_index);
      scene.scene_id = id;
      const double start = uniform(0, 2 * kPi);
      const double arc = spec.orbit_arc_deg * kPi / 180.0;
      const Vec3 target(uniform(-0.2, 0.2), 0.4, uniform(-0.2, 0.2));
      for (int f = 0; f < spec.frames_per_scene; ++f) {
        const double a = start + arc * f / (spec.frames_per_scene - 1);
        const double r = spec.orbit_radius * uniform(0.95, 1.05);
        const Vec3 eye(r * std::cos(a), spec.camera_height + uniform(-0.1, 0.1), r * std::sin(a));
        auto cam = look_at(eye, target, Vec3::UnitY(), k, spec.image, f);
        cam.timestamp_us = f * 33333;
        scene.frames.push_back(cam);
        char img[32];
        std::snprintf(img, sizeof(img), "frame_%04d.png", f);
        scene.images.push_back(img);
      }
      suite.scenes.push_back(std::move(scene));
    }
    const Scene& scene = suite.scenes[scene_index];

    // Shape.
    ShapeKind kind;
    if (symmetric[i]) kind = std::array{ShapeKind::box, ShapeKind::square, ShapeKind::round}[rng() % 3];
    else if (coplanar[i]) kind = ShapeKind::l_shape;
    else kind = rng() % 2 ? ShapeKind::l_shape : ShapeKind::chair;

    char model_id[32];
    std::snprintf(model_id, sizeof(model_id), "synmodel_%04zu", i);
    TriangleMesh mesh;
    SymmetryClass sym{1, Vec3::UnitY()};
    switch (kind) {
      case ShapeKind::box:
        mesh = primitives::box({uniform(0.9, 1.6), uniform(0.5, 0.9), uniform(0.5, 0.8)}, model_id, "table");
        sym.order = 2;
        break;
      case ShapeKind::square:
        mesh = primitives::regular_prism(4, uniform(0.4, 0.7), uniform(0.5, 0.9), model_id, "table");
        sym.order = 4;
        break;
      case ShapeKind::round:
        mesh = primitives::regular_prism(72, uniform(0.3, 0.6), uniform(0.4, 0.9), model_id, "table");
        sym.order = 36;
        break;
      case ShapeKind::l_shape:
        mesh = primitives::l_extrusion(uniform(1.2, 2.0), uniform(0.8, 1.2), uniform(0.5, 0.9), model_id, "sofa");
        break;
      case ShapeKind::chair:
        mesh = primitives::chair(uniform(0.45, 0.6), uniform(0.45, 0.6), uniform(0.8, 1.1), model_id, "chair");
        break;
    }

    // Scale: x and z are tied for 4- and 36-way shapes so the symmetry survives scaling; coplanar
    // objects follow the mean-scale rule for the unobserved axis.
    const double base = uniform(spec.min_scale, spec.max_scale);
    Vec3 s(base * (1 + uniform(-spec.anisotropy, spec.anisotropy)), base * (1 + uniform(-spec.anisotropy, spec.anisotropy)),
           base * (1 + uniform(-spec.anisotropy, spec.anisotropy)));
    if (sym.order >= 4) s.z() = s.x();
    if (coplanar[i]) s.y() = 0.5 * (s.x() + s.z());

    SyntheticObject obj;
    obj.scene = scene_index;
    obj.symmetry = sym;
    obj.coplanar = coplanar[i];
    const double half_height = 0.5 * (mesh.bbox_max().y() - mesh.bbox_min().y());

    std::vector<std::size_t> visible;
    for (int attempt = 0;; ++attempt) {
      if (attempt == 200) throw std::runtime_error("could not place synthetic object " + std::to_string(i));
      const double r = spec.placement_radius * std::sqrt(unit(rng)), a = uniform(0, 2 * kPi);
      obj.pose.rotation = rotation_about(Vec3::UnitY(), uniform(0, 2 * kPi));
      obj.pose.scale = s;
      obj.pose.translation = Vec3(r * std::cos(a), s.y() * half_height, r * std::sin(a));
      visible.clear();
      for (std::size_t f = 0; f < scene.frames.size(); ++f)
        if (detail::fully_visible(mesh, obj.pose, scene.frames[f], 0.05)) visible.push_back(f);
      if (static_cast<int>(visible.size()) >= spec.min_annotated_frames) break;
    }

    // Annotated frames: a random subset of the visible ones, in time order.
    const int want = spec.min_annotated_frames + static_cast<int>(rng() % (spec.max_annotated_frames - spec.min_annotated_frames + 1));
    std::vector<std::size_t> chosen = visible;
    if (spec.contiguous_annotation) {
      const std::size_t count = std::min<std::size_t>(chosen.size(), want);
      const std::size_t first = rng() % (chosen.size() - count + 1);
      chosen = std::vector<std::size_t>(visible.begin() + first, visible.begin() + first + count);
    } else {
      std::shuffle(chosen.begin(), chosen.end(), rng);
      chosen.resize(std::min<std::size_t>(chosen.size(), want));
      std::sort(chosen.begin(), chosen.end());
    }

    // Candidate surface points; the top face only for coplanar annotation.
    auto pool = sample_surface(mesh, 4000, rng());
    if (coplanar[i]) {
      const double top = mesh.bbox_max().y();
      std::erase_if(pool, [&](const Vec3& p) { return p.y() < top - 1e-9; });
    }

    auto& corr = obj.correspondences;
    char track_id[32];
    std::snprintf(track_id, sizeof(track_id), "track_%04zu", i);
    corr.track_id = track_id;
    corr.model_id = mesh.model_id;
    corr.category = mesh.category;
    for (std::size_t f : chosen) {
      const auto& cam = scene.frames[f];
      const int label = sym.order > 1 && unit(rng) < spec.relabel_rate ? static_cast<int>(rng() % sym.order) : 0;
      const Mat3 g = symmetry_rotation(sym, label);
      for (int p = 0; p < spec.points_per_frame; ++p) {
        const Vec3& x = pool[rng() % pool.size()];
        const Vec3& clicked = unit(rng) < spec.mislabel_rate ? pool[rng() % pool.size()] : x;
        Vec2 q = *project_point(cam, apply_pose(obj.pose, clicked));
        if (spec.pixel_noise > 0) q += spec.pixel_noise * Vec2(noise(rng), noise(rng));
        corr.items.push_back({cam.frame_id, g * x, q});
      }
    }

    // Detections in every visible frame, with a per-object appearance descriptor.
    const auto appearance = seeded_unit_vector(rng(), 32);
    std::vector<Detection> dets;
    for (std::size_t f : visible) {
      Detection d;
      d.frame_id = scene.frames[f].frame_id;
      d.box = detail::projected_box(mesh, obj.pose, scene.frames[f]);
      d.category = mesh.category;
      d.score = 0.9;
      d.descriptor = appearance;
      for (auto& v : d.descriptor) v += static_cast<float>(0.05 * noise(rng));
      normalize(d.descriptor);
      dets.push_back(std::move(d));
    }
    obj.track = make_track(track_id, std::move(dets));

    obj.mesh = suite.meshes.size();
    suite.meshes.push_back(std::move(mesh));
    suite.objects.push_back(std::move(obj));
  }

  for (std::size_t s = 0; s < suite.scenes.size(); ++s) {
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
    auto grow = [&](const Vec3& p) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    };
    for (const auto& f : suite.scenes[s].frames) grow(f.center());
    for (const auto& o : suite.objects)
      if (o.scene == s) grow(o.pose.translation);
    suite.scene_diameters.push_back((hi - lo).norm());
  }
  return suite;
}

// ---------------------------------------------------------------------------
// Comparing estimates with ground truth

struct PoseError {
  double rotation_deg = 0;
  double translation = 0;
  double scale_rel = 0;  ///< max over axes of |s_est / s_true − 1|
  int symmetry_index = 0;
};

/// Error of `est` against `truth` modulo the model's rotational symmetry: the ground truth is
/// compared in whichever of its equivalent poses (R·g_j, g_jᵀ·S·g_j) is nearest in rotation.
inline PoseError pose_error(const Pose9DoF& est, const Pose9DoF& truth, const SymmetryClass& sym) {
  PoseError best;
  best.rotation_deg = std::numeric_limits<double>::infinity();
  for (int j = 0; j < std::max(1, sym.order); ++j) {
    const Mat3 g = symmetry_rotation(sym, j);
    const double rot = rotation_angle_deg(est.rotation, truth.rotation * g);
    if (rot < best.rotation_deg) {
      best.rotation_deg = rot;
      best.symmetry_index = j;
    }
  }
  const Mat3 g = symmetry_rotation(sym, best.symmetry_index);
  const Vec3 s_eq = (g.transpose() * truth.scale.asDiagonal() * g).diagonal().cwiseAbs();
  best.translation = (est.translation - truth.translation).norm();
  best.scale_rel = (est.scale.cwiseQuotient(s_eq).array() - 1.0).abs().maxCoeff();
  return best;
}

struct OverlayEvidence {
  double mean_px = 0;
  std::map<std::int64_t, double> per_frame_px;
};

/// How far the model rendered under `est` lands from the object itself, per frame: mean pixel
/// distance between surface samples projected under `est` and the same samples under the
/// closest symmetric equivalent of `truth`. This is what an annotator judges when comparing the
/// overlay with the video.
inline OverlayEvidence overlay_discrepancy(const TriangleMesh& mesh, const Pose9DoF& est, const Pose9DoF& truth,
                                           const SymmetryClass& sym, std::span<const CameraFrame> cams,
                                           std::size_t samples = 256, std::uint64_t seed = 7) {
  const auto pts = sample_surface(mesh, samples, seed);
  OverlayEvidence best;
  double best_total = std::numeric_limits<double>::infinity();
  for (int j = 0; j < std::max(1, sym.order); ++j) {
    const Mat3 g = symmetry_rotation(sym, j);
    OverlayEvidence ev;
    double total = 0;
    for (const auto& cam : cams) {
      const double penalty = 2.0 * (cam.image_size.width + cam.image_size.height);
      double sum = 0;
      for (const auto& p : pts) {
        const auto a = project_point(cam, apply_pose(est, p));
        const auto b = project_point(cam, apply_pose(truth, g * p));
        sum += a && b ? (*a - *b).norm() : penalty;
      }
      ev.per_frame_px[cam.frame_id] = sum / static_cast<double>(pts.size());
      total += sum;
    }
    if (total < best_total) {
      best_total = total;
      ev.mean_px = total / static_cast<double>(pts.size() * std::max<std::size_t>(1, cams.size()));
      best = std::move(ev);
    }
  }
  return best;
}

}  // namespace cadkit
