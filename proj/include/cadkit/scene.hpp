#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "cadkit/errors.hpp"
#include "cadkit/geometry.hpp"

namespace cadkit {

enum class Split { train, val, test };

inline const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

/// A video clip with known cameras. `images[i]` is the image file of `frames[i]`, relative to the
/// scene directory (may be empty).
struct Scene {
  std::string scene_id;
  std::vector<CameraFrame> frames;
  std::vector<std::string> images;
  Vec3 world_up = Vec3::UnitY();
  Split split = Split::train;

  const CameraFrame* find_frame(std::int64_t frame_id) const {
    for (const auto& f : frames)
      if (f.frame_id == frame_id) return &f;
    return nullptr;
  }
};

inline void validate(const Scene& scene) {
  if (scene.frames.size() < 2) throw SchemaError("frames", "scene needs at least 2 frames");
  if (!scene.images.empty() && scene.images.size() != scene.frames.size())
    throw SchemaError("images", "one image per frame expected");
  for (std::size_t i = 0; i < scene.frames.size(); ++i) {
    const auto& f = scene.frames[i];
    const std::string path = "frames[" + std::to_string(i) + "]";
    if (!is_rotation(f.rotation)) throw SchemaError(path + ".extrinsics", "frame " + std::to_string(f.frame_id) + " rotation is not orthonormal");
    if (!(f.intrinsics.fx > 0 && f.intrinsics.fy > 0)) throw SchemaError(path + ".intrinsics", "focal lengths must be positive");
    if (f.image_size.width <= 0 || f.image_size.height <= 0) throw SchemaError(path + ".image_size", "must be positive");
    if (i > 0 && f.timestamp_us < scene.frames[i - 1].timestamp_us)
      throw SchemaError(path + ".timestamp", "frames must be ordered by timestamp");
  }
  if (std::abs(scene.world_up.norm() - 1.0) > 1e-6) throw SchemaError("world_up", "must be a unit vector");
}

}  // namespace cadkit
