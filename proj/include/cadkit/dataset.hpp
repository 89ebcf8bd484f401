#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cadkit/io.hpp"
#include "cadkit/mesh.hpp"
#include "cadkit/pipeline.hpp"
#include "cadkit/render.hpp"
#include "cadkit/retrieval.hpp"
#include "cadkit/synthetic.hpp"

// On-disk layout of a dataset directory:
//   models/<model_id>.obj
//   descriptors.jsonl                     model view descriptors (optional)
//   scenes/<scene_id>/scene.json          cameras; frame image paths are relative to this directory
//   scenes/<scene_id>/tracks.json
//   scenes/<scene_id>/candidates.json     ranked CAD candidates per track (optional)
//   scenes/<scene_id>/poses.json          posed objects (optional)
//   scenes/<scene_id>/correspondences/<track_id>.json   (optional)
//   tasks/journal.jsonl, tasks/snapshot.json            annotation task store
namespace cadkit {

namespace fs = std::filesystem;

/// Identifiers that are safe to use as a single path component.
inline bool is_safe_id(std::string_view id) {
  if (id.empty() || id.front() == '.' || id.size() > 200) return false;
  for (char c : id)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) return false;
  return true;
}

struct DataDir {
  fs::path root;

  fs::path models() const { return root / "models"; }
  fs::path model(const std::string& id) const { return models() / (id + ".obj"); }
  fs::path descriptors() const { return root / "descriptors.jsonl"; }
  fs::path scenes() const { return root / "scenes"; }
  fs::path scene(const std::string& id) const { return scenes() / id; }
  fs::path tasks() const { return root / "tasks"; }
};

/// Everything stored for one scene directory.
struct SceneRecord {
  fs::path dir;
  Scene scene;
  std::vector<Track> tracks;
  std::vector<CandidateList> candidates;
  std::vector<PosedObject> poses;
};

inline json candidates_to_json(std::span<const CandidateList> lists) {
  json out = json::array();
  for (const auto& c : lists) out.push_back(to_json(c));
  return out;
}

inline std::vector<CandidateList> candidate_lists_from_json(const json& j) {
  if (!j.is_array()) throw SchemaError("candidates", "expected array");
  std::vector<CandidateList> out;
  for (const auto& c : j) out.push_back(candidates_from_json(c));
  return out;
}

inline json poses_to_json(std::span<const PosedObject> poses) {
  json out = json::array();
  for (const auto& p : poses) out.push_back(to_json(p));
  return out;
}

inline json load_json_file(const fs::path& p) { return parse_json(read_file(p.string()), p.string()); }

inline SceneRecord load_scene_record(const fs::path& dir) {
  SceneRecord r;
  r.dir = dir;
  r.scene = load_scene((dir / "scene.json").string());
  if (fs::exists(dir / "tracks.json")) r.tracks = tracks_from_json(load_json_file(dir / "tracks.json"));
  if (fs::exists(dir / "candidates.json")) r.candidates = candidate_lists_from_json(load_json_file(dir / "candidates.json"));
  if (fs::exists(dir / "poses.json")) r.poses = posed_objects_from_json(load_json_file(dir / "poses.json"));
  return r;
}

/// Appearance descriptors for a model seen through `track`: the track's mean descriptor,
/// perturbed independently per view.
inline ModelViewDescriptors synthetic_view_descriptors(const TriangleMesh& mesh, const Track& track, std::uint64_t seed) {
  const auto dim = track.detections.front().descriptor.size();
  std::vector<float> mean(dim, 0.0f);
  for (const auto& d : track.detections)
    for (std::size_t i = 0; i < dim; ++i) mean[i] += d.descriptor[i];
  normalize(mean);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.05);
  ModelViewDescriptors m{mesh.model_id, mesh.category, {}};
  for (std::size_t v = 0; v < kViewsPerModel; ++v) {
    auto d = mean;
    for (auto& x : d) x += static_cast<float>(noise(rng));
    normalize(d);
    m.view_descriptors.push_back(std::move(d));
  }
  return m;
}

struct ExportOptions {
  bool render_frames = true;
};

/// Writes a generated suite as a dataset directory: cameras, tracks, ground-truth poses,
/// simulated annotator correspondences, meshes, a descriptor database and ranked candidates.
inline void export_synthetic_dataset(const SyntheticSuite& suite, const fs::path& root, const ExportOptions& opt = {}) {
  const DataDir data{root};
  fs::create_directories(data.models());
  std::vector<ModelViewDescriptors> db;
  std::string db_text;
  for (const auto& o : suite.objects) {
    const auto& mesh = suite.meshes[o.mesh];
    write_file(data.model(mesh.model_id).string(), to_obj(mesh));
    db.push_back(synthetic_view_descriptors(mesh, o.track, suite.spec.seed ^ fnv1a(mesh.model_id)));
    db_text += to_json(db.back()).dump() + "\n";
  }
  write_file(data.descriptors().string(), db_text);
  const auto emb = ConceptEmbeddingProvider::furniture();

  for (std::size_t s = 0; s < suite.scenes.size(); ++s) {
    const auto& scene = suite.scenes[s];
    const auto dir = data.scene(scene.scene_id);
    fs::create_directories(dir / "correspondences");
    std::vector<Track> tracks;
    std::vector<PosedObject> poses;
    std::vector<CandidateList> candidates;
    std::vector<RenderItem> items;
    for (const auto& o : suite.objects) {
      if (o.scene != s) continue;
      const auto& mesh = suite.meshes[o.mesh];
      tracks.push_back(o.track);
      poses.push_back({o.track.track_id, mesh.model_id, o.pose});
      candidates.push_back(rank_candidates(o.track, db, emb));
      items.push_back({&mesh, o.pose});
      write_file((dir / "correspondences" / (o.track.track_id + ".json")).string(), canonical(to_json(o.correspondences)));
    }
    Scene out = scene;
    if (!opt.render_frames) out.images.clear();
    save_scene(out, (dir / "scene.json").string());
    write_file((dir / "tracks.json").string(), canonical(tracks_to_json(tracks)));
    write_file((dir / "poses.json").string(), canonical(poses_to_json(poses)));
    write_file((dir / "candidates.json").string(), canonical(candidates_to_json(candidates)));
    if (opt.render_frames)
      for (std::size_t f = 0; f < scene.frames.size(); ++f)
        write_png((dir / scene.images[f]).string(), render_silhouettes(scene.frames[f], items));
  }
}

}  // namespace cadkit
