#pragma once

#include <json.hpp>

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cadkit/errors.hpp"
#include "cadkit/mesh.hpp"
#include "cadkit/pose_solver.hpp"
#include "cadkit/retrieval.hpp"
#include "cadkit/scene.hpp"
#include "cadkit/tracking.hpp"

// JSON and JSONL file formats. Objects serialize with sorted keys, so dump() output is canonical.
namespace cadkit {

using json = nlohmann::json;

/// Canonical text form: sorted keys, two-space indent, trailing newline.
inline std::string canonical(const json& j) { return j.dump(2) + "\n"; }

inline json parse_json(std::string_view text, const std::string& what = "input") {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(what + ": " + e.what());
  }
}

inline void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error("write failed: " + path);
}

namespace io_detail {

inline const json& field(const json& j, const char* key, const std::string& path) {
  if (!j.is_object()) throw SchemaError(path, "expected object");
  const auto it = j.find(key);
  if (it == j.end()) throw SchemaError(path + "." + key, "missing field");
  return *it;
}

inline double number(const json& j, const std::string& path) {
  if (!j.is_number()) throw SchemaError(path, "expected number");
  return j.get<double>();
}

inline std::int64_t integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) throw SchemaError(path, "expected integer");
  return j.get<std::int64_t>();
}

inline std::string string(const json& j, const std::string& path) {
  if (!j.is_string()) throw SchemaError(path, "expected string");
  return j.get<std::string>();
}

inline bool boolean(const json& j, const std::string& path) {
  if (!j.is_boolean()) throw SchemaError(path, "expected boolean");
  return j.get<bool>();
}

inline std::vector<double> numbers(const json& j, const std::string& path, std::size_t expected = 0) {
  if (!j.is_array()) throw SchemaError(path, "expected array");
  if (expected && j.size() != expected) throw SchemaError(path, "expected " + std::to_string(expected) + " numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(number(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

inline std::vector<float> floats(const json& j, const std::string& path) {
  const auto d = numbers(j, path);
  return {d.begin(), d.end()};
}

inline Vec3 vec3(const json& j, const std::string& path) {
  const auto v = numbers(j, path, 3);
  return {v[0], v[1], v[2]};
}

inline Vec2 vec2(const json& j, const std::string& path) {
  const auto v = numbers(j, path, 2);
  return {v[0], v[1]};
}

inline json array(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }
inline json array(const Vec2& v) { return json::array({v.x(), v.y()}); }

inline json row_major(const Mat3& m) {
  json out = json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out.push_back(m(r, c));
  return out;
}

inline Mat3 mat3(const json& j, const std::string& path) {
  const auto v = numbers(j, path, 9);
  Mat3 m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m(r, c) = v[3 * r + c];
  return m;
}

template <typename F>
auto each_line(std::string_view text, F&& fn) {
  std::size_t line = 0, start = 0;
  while (start <= text.size()) {
    const auto end = std::min(text.find('\n', start), text.size());
    ++line;
    const auto raw = detail::trim(text.substr(start, end - start));
    if (!raw.empty()) {
      json j;
      try {
        j = json::parse(raw);
      } catch (const json::parse_error& e) {
        throw ParseError(e.what(), line);
      }
      fn(j, line);
    }
    if (end == text.size()) break;
    start = end + 1;
  }
}

}  // namespace io_detail

// ---------------------------------------------------------------------------
// Cameras and scenes

inline json to_json(const CameraFrame& f) {
  json extr = json::array();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) extr.push_back(f.rotation(r, c));
    extr.push_back(f.translation(r));
  }
  return {{"frame_id", f.frame_id},
          {"timestamp_us", f.timestamp_us},
          {"intrinsics", {{"fx", f.intrinsics.fx}, {"fy", f.intrinsics.fy}, {"cx", f.intrinsics.cx}, {"cy", f.intrinsics.cy}}},
          {"extrinsics", extr},
          {"image_size", json::array({f.image_size.width, f.image_size.height})}};
}

inline CameraFrame camera_from_json(const json& j, const std::string& path) {
  using namespace io_detail;
  CameraFrame f;
  f.frame_id = integer(field(j, "frame_id", path), path + ".frame_id");
  if (j.contains("timestamp_us")) f.timestamp_us = integer(j["timestamp_us"], path + ".timestamp_us");
  const auto& k = field(j, "intrinsics", path);
  f.intrinsics = {number(field(k, "fx", path + ".intrinsics"), path + ".intrinsics.fx"),
                  number(field(k, "fy", path + ".intrinsics"), path + ".intrinsics.fy"),
                  number(field(k, "cx", path + ".intrinsics"), path + ".intrinsics.cx"),
                  number(field(k, "cy", path + ".intrinsics"), path + ".intrinsics.cy")};
  const auto e = numbers(field(j, "extrinsics", path), path + ".extrinsics", 12);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) f.rotation(r, c) = e[4 * r + c];
    f.translation(r) = e[4 * r + 3];
  }
  const auto size = numbers(field(j, "image_size", path), path + ".image_size", 2);
  f.image_size = {static_cast<int>(size[0]), static_cast<int>(size[1])};
  return f;
}

inline json to_json(const Scene& s) {
  json frames = json::array();
  for (std::size_t i = 0; i < s.frames.size(); ++i) {
    auto f = to_json(s.frames[i]);
    f["image"] = i < s.images.size() ? s.images[i] : std::string();
    frames.push_back(std::move(f));
  }
  return {{"scene_id", s.scene_id}, {"split", to_string(s.split)}, {"world_up", io_detail::array(s.world_up)}, {"frames", frames}};
}

inline Split split_from_string(const std::string& s, const std::string& path) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw SchemaError(path, "unknown split '" + s + "'");
}

inline Scene scene_from_json(const json& j) {
  using namespace io_detail;
  Scene s;
  s.scene_id = string(field(j, "scene_id", "scene"), "scene.scene_id");
  if (j.contains("split")) s.split = split_from_string(string(j["split"], "scene.split"), "scene.split");
  if (j.contains("world_up")) s.world_up = vec3(j["world_up"], "scene.world_up");
  const auto& frames = field(j, "frames", "scene");
  if (!frames.is_array()) throw SchemaError("scene.frames", "expected array");
  bool any_image = false;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const std::string path = "scene.frames[" + std::to_string(i) + "]";
    s.frames.push_back(camera_from_json(frames[i], path));
    s.images.push_back(frames[i].contains("image") ? string(frames[i]["image"], path + ".image") : std::string());
    any_image = any_image || !s.images.back().empty();
  }
  if (!any_image) s.images.clear();
  try {
    validate(s);
  } catch (const SchemaError& e) {
    throw SchemaError("scene." + e.path(), e.detail());
  }
  return s;
}

inline Scene load_scene(const std::string& path) { return scene_from_json(parse_json(read_file(path), path)); }
inline void save_scene(const Scene& s, const std::string& path) { write_file(path, canonical(to_json(s))); }

// ---------------------------------------------------------------------------
// Detections, tracks, descriptors, candidates

inline json to_json(const Detection& d) {
  return {{"frame_id", d.frame_id},
          {"box", json::array({d.box.x_min, d.box.y_min, d.box.x_max, d.box.y_max})},
          {"category", d.category},
          {"score", d.score},
          {"descriptor", d.descriptor}};
}

inline Detection detection_from_json(const json& j, const std::string& path) {
  using namespace io_detail;
  Detection d;
  d.frame_id = integer(field(j, "frame_id", path), path + ".frame_id");
  const auto b = numbers(field(j, "box", path), path + ".box", 4);
  d.box = {b[0], b[1], b[2], b[3]};
  if (!d.box.valid()) throw SchemaError(path + ".box", "expected x_min < x_max and y_min < y_max");
  d.category = string(field(j, "category", path), path + ".category");
  if (j.contains("score")) d.score = number(j["score"], path + ".score");
  d.descriptor = floats(field(j, "descriptor", path), path + ".descriptor");
  if (!is_unit(d.descriptor, 1e-5)) throw SchemaError(path + ".descriptor", "not unit norm");
  return d;
}

inline std::vector<Detection> parse_detections_jsonl(std::string_view text) {
  std::vector<Detection> out;
  io_detail::each_line(text, [&](const json& j, std::size_t line) {
    try {
      out.push_back(detection_from_json(j, "detection"));
    } catch (const SchemaError& e) {
      throw ParseError(e.what(), line);
    }
  });
  return out;
}

inline const char* to_string(TrackSource s) { return s == TrackSource::manual ? "manual" : "automatic"; }

inline json to_json(const Track& t) {
  json dets = json::array();
  for (const auto& d : t.detections) dets.push_back(to_json(d));
  return {{"track_id", t.track_id}, {"category", t.category}, {"source", to_string(t.source)}, {"detections", dets}};
}

inline Track track_from_json(const json& j, const std::string& path) {
  using namespace io_detail;
  const auto& dets = field(j, "detections", path);
  if (!dets.is_array()) throw SchemaError(path + ".detections", "expected array");
  std::vector<Detection> parsed;
  for (std::size_t i = 0; i < dets.size(); ++i)
    parsed.push_back(detection_from_json(dets[i], path + ".detections[" + std::to_string(i) + "]"));
  TrackSource source = TrackSource::automatic;
  if (j.contains("source")) {
    const auto s = string(j["source"], path + ".source");
    if (s == "manual") source = TrackSource::manual;
    else if (s != "automatic") throw SchemaError(path + ".source", "unknown source '" + s + "'");
  }
  Track t;
  try {
    t = make_track(string(field(j, "track_id", path), path + ".track_id"), std::move(parsed), source);
  } catch (const std::invalid_argument& e) {
    throw SchemaError(path + ".detections", e.what());
  }
  if (j.contains("category")) t.category = string(j["category"], path + ".category");
  return t;
}

inline json tracks_to_json(std::span<const Track> tracks) {
  json out = json::array();
  for (const auto& t : tracks) out.push_back(to_json(t));
  return out;
}

inline std::vector<Track> tracks_from_json(const json& j) {
  if (!j.is_array()) throw SchemaError("tracks", "expected array");
  std::vector<Track> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(track_from_json(j[i], "tracks[" + std::to_string(i) + "]"));
  return out;
}

inline json to_json(const ModelViewDescriptors& m) {
  return {{"model_id", m.model_id}, {"category", m.category}, {"view_descriptors", m.view_descriptors}};
}

inline ModelViewDescriptors model_descriptors_from_json(const json& j, const std::string& path) {
  using namespace io_detail;
  ModelViewDescriptors m;
  m.model_id = string(field(j, "model_id", path), path + ".model_id");
  m.category = string(field(j, "category", path), path + ".category");
  const auto& views = field(j, "view_descriptors", path);
  if (!views.is_array()) throw SchemaError(path + ".view_descriptors", "expected array");
  for (std::size_t i = 0; i < views.size(); ++i)
    m.view_descriptors.push_back(floats(views[i], path + ".view_descriptors[" + std::to_string(i) + "]"));
  validate(m);
  return m;
}

inline std::vector<ModelViewDescriptors> parse_descriptor_db_jsonl(std::string_view text) {
  std::vector<ModelViewDescriptors> out;
  io_detail::each_line(text, [&](const json& j, std::size_t line) {
    try {
      out.push_back(model_descriptors_from_json(j, "model"));
    } catch (const SchemaError& e) {
      throw ParseError(e.what(), line);
    }
  });
  return out;
}

inline json to_json(const CandidateList& c) {
  json entries = json::array();
  for (const auto& e : c.entries) entries.push_back({{"model_id", e.model_id}, {"score", e.score}});
  return {{"track_id", c.track_id}, {"entries", entries}};
}

inline CandidateList candidates_from_json(const json& j) {
  using namespace io_detail;
  CandidateList c;
  c.track_id = string(field(j, "track_id", "candidates"), "candidates.track_id");
  const auto& entries = field(j, "entries", "candidates");
  if (!entries.is_array()) throw SchemaError("candidates.entries", "expected array");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const std::string path = "candidates.entries[" + std::to_string(i) + "]";
    c.entries.push_back({string(field(entries[i], "model_id", path), path + ".model_id"),
                         number(field(entries[i], "score", path), path + ".score")});
  }
  return c;
}

// ---------------------------------------------------------------------------
// Correspondences, poses, solver configuration and results

inline json to_json(const CorrespondenceSet& c) {
  json items = json::array();
  for (const auto& it : c.items)
    items.push_back({{"frame_id", it.frame_id}, {"p_model", io_detail::array(it.p_model)}, {"q_pixel", io_detail::array(it.q_pixel)}});
  json out = {{"track_id", c.track_id}, {"model_id", c.model_id}, {"flipped", c.flipped}, {"items", items}};
  if (!c.category.empty()) out["category"] = c.category;
  return out;
}

inline CorrespondenceSet correspondences_from_json(const json& j) {
  using namespace io_detail;
  const std::string p = "correspondences";
  CorrespondenceSet c;
  c.track_id = string(field(j, "track_id", p), p + ".track_id");
  c.model_id = string(field(j, "model_id", p), p + ".model_id");
  if (j.contains("category")) c.category = string(j["category"], p + ".category");
  if (j.contains("flipped")) c.flipped = boolean(j["flipped"], p + ".flipped");
  const auto& items = field(j, "items", p);
  if (!items.is_array()) throw SchemaError(p + ".items", "expected array");
  for (std::size_t i = 0; i < items.size(); ++i) {
    const std::string ip = p + ".items[" + std::to_string(i) + "]";
    c.items.push_back({integer(field(items[i], "frame_id", ip), ip + ".frame_id"), vec3(field(items[i], "p_model", ip), ip + ".p_model"),
                       vec2(field(items[i], "q_pixel", ip), ip + ".q_pixel")});
  }
  if (c.items.empty()) throw SchemaError(p + ".items", "at least one correspondence required");
  return c;
}

/// Every item references a known frame and its pixel lies within 10% of the image bounds.
inline void validate(const CorrespondenceSet& c, std::span<const CameraFrame> cams) {
  if (c.items.empty()) throw SchemaError("items", "at least one correspondence required");
  for (std::size_t i = 0; i < c.items.size(); ++i) {
    const auto& it = c.items[i];
    const std::string path = "items[" + std::to_string(i) + "]";
    const auto cam = std::find_if(cams.begin(), cams.end(), [&](const CameraFrame& f) { return f.frame_id == it.frame_id; });
    if (cam == cams.end()) throw SchemaError(path + ".frame_id", "no camera for frame " + std::to_string(it.frame_id));
    const double mw = 0.1 * cam->image_size.width, mh = 0.1 * cam->image_size.height;
    if (!it.q_pixel.allFinite() || it.q_pixel.x() < -mw || it.q_pixel.x() > cam->image_size.width + mw ||
        it.q_pixel.y() < -mh || it.q_pixel.y() > cam->image_size.height + mh)
      throw SchemaError(path + ".q_pixel", "outside the image by more than 10%");
    if (!it.p_model.allFinite()) throw SchemaError(path + ".p_model", "not finite");
  }
}

inline json to_json(const Pose9DoF& p) {
  return {{"T", io_detail::array(p.translation)}, {"R", io_detail::row_major(p.rotation)}, {"S", io_detail::array(p.scale)}};
}

inline Pose9DoF pose_from_json(const json& j, const std::string& path = "pose") {
  using namespace io_detail;
  Pose9DoF p;
  p.translation = vec3(field(j, "T", path), path + ".T");
  p.rotation = mat3(field(j, "R", path), path + ".R");
  p.scale = vec3(field(j, "S", path), path + ".S");
  if (!is_rotation(p.rotation)) throw SchemaError(path + ".R", "not a rotation");
  if (!(p.scale.array() > 0).all()) throw SchemaError(path + ".S", "scales must be positive");
  return p;
}

inline json to_json(const SolverConfig& c) {
  return {{"alpha", c.alpha},
          {"beta", c.beta},
          {"steps", c.steps},
          {"learning_rate", c.learning_rate},
          {"final_learning_rate_ratio", c.final_learning_rate_ratio},
          {"n_starts", c.n_starts},
          {"seed", c.seed},
          {"upright_categories", c.upright_categories},
          {"front_margin", c.front_margin},
          {"world_up", io_detail::array(c.world_up)},
          {"verify_tau_px", c.verify_tau_px},
          {"use_symmetry", c.use_symmetry},
          {"use_coplanar_scale", c.use_coplanar_scale},
          {"coplanar_rel_tol", c.coplanar_rel_tol},
          {"axis_snap_deg", c.axis_snap_deg},
          {"time_budget_s", c.time_budget_s}};
}

/// Missing fields keep their defaults.
inline SolverConfig solver_config_from_json(const json& j, SolverConfig c = {}) {
  using namespace io_detail;
  const std::string p = "config";
  if (!j.is_object()) throw SchemaError(p, "expected object");
  for (const auto& [key, value] : j.items()) {
    const std::string path = p + "." + key;
    if (key == "alpha") c.alpha = number(value, path);
    else if (key == "beta") c.beta = number(value, path);
    else if (key == "steps") c.steps = static_cast<int>(integer(value, path));
    else if (key == "learning_rate") c.learning_rate = number(value, path);
    else if (key == "final_learning_rate_ratio") c.final_learning_rate_ratio = number(value, path);
    else if (key == "n_starts") c.n_starts = static_cast<int>(integer(value, path));
    else if (key == "seed") c.seed = static_cast<std::uint64_t>(integer(value, path));
    else if (key == "upright_categories") {
      if (!value.is_array()) throw SchemaError(path, "expected array");
      c.upright_categories.clear();
      for (std::size_t i = 0; i < value.size(); ++i) c.upright_categories.insert(string(value[i], path + "[" + std::to_string(i) + "]"));
    } else if (key == "front_margin") c.front_margin = number(value, path);
    else if (key == "world_up") c.world_up = vec3(value, path);
    else if (key == "verify_tau_px") c.verify_tau_px = number(value, path);
    else if (key == "use_symmetry") c.use_symmetry = boolean(value, path);
    else if (key == "use_coplanar_scale") c.use_coplanar_scale = boolean(value, path);
    else if (key == "coplanar_rel_tol") c.coplanar_rel_tol = number(value, path);
    else if (key == "axis_snap_deg") c.axis_snap_deg = number(value, path);
    else if (key == "time_budget_s") c.time_budget_s = number(value, path);
    else throw SchemaError(path, "unknown field");
  }
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw SchemaError(p, e.what());
  }
  return c;
}

inline ScaleMode scale_mode_from_string(const std::string& s, const std::string& path) {
  if (s == "full") return ScaleMode::full;
  if (s == "coplanar_2dof") return ScaleMode::coplanar_2dof;
  if (s == "rotsym_tied") return ScaleMode::rotsym_tied;
  throw SchemaError(path, "unknown scale mode '" + s + "'");
}

inline json to_json(const SolveResult& r) {
  json per_frame = json::object();
  for (const auto& [frame, px] : r.per_frame_reproj_px) per_frame[std::to_string(frame)] = px;
  return {{"pose", to_json(r.pose)},
          {"final_losses", {{"repr", r.final_losses.repr}, {"up", r.final_losses.up}, {"front", r.final_losses.front}}},
          {"total_loss", r.total_loss},
          {"mean_reproj_px", r.mean_reproj_px},
          {"per_frame_reproj_px", per_frame},
          {"chosen_symmetry_index", r.chosen_symmetry_index},
          {"symmetry_order", r.symmetry_order},
          {"scale_mode", to_string(r.scale_mode)},
          {"scale_axis", r.scale_axis},
          {"converged", r.converged},
          {"best_start", r.best_start},
          {"starts_completed", r.starts_completed}};
}

inline SolveResult solve_result_from_json(const json& j) {
  using namespace io_detail;
  const std::string p = "solve_result";
  SolveResult r;
  r.pose = pose_from_json(field(j, "pose", p), p + ".pose");
  const auto& l = field(j, "final_losses", p);
  r.final_losses = {number(field(l, "repr", p + ".final_losses"), p + ".final_losses.repr"),
                    number(field(l, "up", p + ".final_losses"), p + ".final_losses.up"),
                    number(field(l, "front", p + ".final_losses"), p + ".final_losses.front")};
  r.total_loss = number(field(j, "total_loss", p), p + ".total_loss");
  r.mean_reproj_px = number(field(j, "mean_reproj_px", p), p + ".mean_reproj_px");
  const auto& per_frame = field(j, "per_frame_reproj_px", p);
  if (!per_frame.is_object()) throw SchemaError(p + ".per_frame_reproj_px", "expected object");
  for (const auto& [key, value] : per_frame.items()) {
    try {
      r.per_frame_reproj_px[std::stoll(key)] = number(value, p + ".per_frame_reproj_px." + key);
    } catch (const std::logic_error&) {
      throw SchemaError(p + ".per_frame_reproj_px." + key, "frame id must be an integer");
    }
  }
  r.chosen_symmetry_index = static_cast<int>(integer(field(j, "chosen_symmetry_index", p), p + ".chosen_symmetry_index"));
  r.symmetry_order = static_cast<int>(integer(field(j, "symmetry_order", p), p + ".symmetry_order"));
  r.scale_mode = scale_mode_from_string(string(field(j, "scale_mode", p), p + ".scale_mode"), p + ".scale_mode");
  r.scale_axis = static_cast<int>(integer(field(j, "scale_axis", p), p + ".scale_axis"));
  r.converged = boolean(field(j, "converged", p), p + ".converged");
  r.best_start = static_cast<int>(integer(field(j, "best_start", p), p + ".best_start"));
  r.starts_completed = static_cast<int>(integer(field(j, "starts_completed", p), p + ".starts_completed"));
  return r;
}

}  // namespace cadkit
