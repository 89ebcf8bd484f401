#include <CLI11.hpp>

#include <signal.h>

#include <chrono>
#include <iostream>
#include <thread>

#include "cadkit/ablation.hpp"
#include "cadkit/dataset.hpp"
#include "cadkit/io.hpp"
#include "cadkit/pipeline.hpp"
#include "cadkit/pose_solver.hpp"
#include "cadkit/retrieval.hpp"
#include "cadkit/service.hpp"
#include "cadkit/synthetic.hpp"
#include "cadkit/tracking.hpp"

using namespace cadkit;

namespace {

void emit(const std::string& text, const std::string& out) {
  if (out.empty() || out == "-") std::cout << text;
  else write_file(out, text);
}

int run_track(const std::string& input, const SimilarityWeights& w, double threshold, const std::string& out) {
  const auto dets = parse_detections_jsonl(read_file(input));
  emit(canonical(tracks_to_json(partition_tracks(dets, w, threshold))), out);
  return 0;
}

int run_retrieve(const std::string& tracks_path, const std::string& db_path, std::size_t top_k, const std::string& aggregation,
                 const std::string& out) {
  const auto tracks = tracks_from_json(parse_json(read_file(tracks_path), tracks_path));
  const auto db = parse_descriptor_db_jsonl(read_file(db_path));
  const auto emb = ConceptEmbeddingProvider::furniture();
  RetrievalOptions opt;
  opt.top_k = top_k;
  opt.aggregation = aggregation == "max" ? Aggregation::max : Aggregation::mean;
  std::vector<CandidateList> lists;
  for (const auto& t : tracks) lists.push_back(rank_candidates(t, db, emb, opt));
  emit(canonical(candidates_to_json(lists)), out);
  return 0;
}

int run_solve(const std::string& corr_path, const std::string& scene_path, const std::string& mesh_path,
              const std::string& config_path, const std::string& symmetry, const std::string& out) {
  const auto corr = correspondences_from_json(parse_json(read_file(corr_path), corr_path));
  const auto scene = load_scene(scene_path);
  validate(corr, scene.frames);
  const auto mesh = load_mesh_file(mesh_path);
  SolverConfig cfg;
  if (!config_path.empty()) cfg = solver_config_from_json(parse_json(read_file(config_path), config_path));
  const SymmetryClass sym = symmetry == "auto" ? detect_symmetry(mesh) : SymmetryClass{std::stoi(symmetry), mesh.up_axis};
  emit(canonical(to_json(estimate_pose(corr, scene.frames, mesh, sym, cfg))), out);
  return 0;
}

int run_stats(const std::vector<std::string>& dirs, const std::string& models_dir, std::size_t samples, const std::string& out) {
  std::string csv = stats_csv_header();
  for (const auto& d : dirs) {
    const auto rec = load_scene_record(d);
    const fs::path models = models_dir.empty() ? fs::path(d) / ".." / ".." / "models" : fs::path(models_dir);
    std::map<std::string, TriangleMesh> meshes;
    for (const auto& p : rec.poses)
      if (!meshes.count(p.model_id)) meshes[p.model_id] = load_mesh_file((models / (p.model_id + ".obj")).string());
    StatsOptions opt;
    opt.truncation_samples = samples;
    csv += stats_csv_row(rec.scene.scene_id, compute_scene_stats(rec.scene, rec.tracks, rec.poses, meshes, opt));
  }
  emit(csv, out);
  return 0;
}

int run_synth(const SyntheticSpec& spec, const std::string& out_dir, bool render) {
  const auto suite = generate_synthetic_suite(spec);
  export_synthetic_dataset(suite, out_dir, {render});
  std::cerr << "wrote " << suite.objects.size() << " objects in " << suite.scenes.size() << " scenes to " << out_dir << "\n";
  return 0;
}

int run_ablate(const SyntheticSpec& spec, double alpha, double tau, const std::string& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto suite = generate_synthetic_suite(spec);
  SolverConfig full;
  full.alpha = alpha;
  const auto rows = run_ablation(cumulative_ablation_configs(full), suite, tau);
  emit(ablation_csv(rows), out);
  std::cerr << "ablation over " << suite.objects.size() << " objects took "
            << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() << " s\n";
  return 0;
}

int run_serve(ServiceOptions opt, const std::string& host, int port, const std::string& config_path) {
  if (!config_path.empty()) opt.solver = solver_config_from_json(parse_json(read_file(config_path), config_path), opt.solver);
  // Route SIGINT/SIGTERM to a waiting thread so shutdown runs outside signal context.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  AnnotationService service(opt);
  const int bound = service.bind(host, port);
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&set, &sig);
    service.stop();
  });
  std::cerr << "serving " << opt.data_dir.string() << " on http://" << host << ":" << bound << "\n";
  service.run();
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CAD model annotation toolkit"};
  app.require_subcommand(1);
  std::string out;

  auto* track = app.add_subcommand("track", "Associate detections into tracks");
  std::string detections;
  SimilarityWeights weights;
  double threshold = kDefaultMergeThreshold;
  track->add_option("detections", detections, "detections JSONL")->required()->check(CLI::ExistingFile);
  track->add_option("--threshold", threshold, "merge threshold");
  track->add_option("--w-appearance", weights.appearance);
  track->add_option("--w-category", weights.category);
  track->add_option("--w-spatial", weights.spatial);
  track->add_option("-o,--out", out, "output file (default stdout)");

  auto* retrieve = app.add_subcommand("retrieve", "Rank CAD candidates for tracks");
  std::string tracks_path, db_path, aggregation = "mean";
  std::size_t top_k = kCandidateCount;
  retrieve->add_option("tracks", tracks_path, "tracks JSON")->required()->check(CLI::ExistingFile);
  retrieve->add_option("db", db_path, "descriptor database JSONL")->required()->check(CLI::ExistingFile);
  retrieve->add_option("--top-k", top_k)->check(CLI::Range(1, 1000));
  retrieve->add_option("--aggregation", aggregation)->check(CLI::IsMember({"mean", "max"}));
  retrieve->add_option("-o,--out", out);

  auto* solve = app.add_subcommand("solve", "Estimate a 9-DoF pose from correspondences");
  std::string corr_path, scene_path, mesh_path, config_path, symmetry = "auto";
  solve->add_option("correspondences", corr_path, "correspondence JSON")->required()->check(CLI::ExistingFile);
  solve->add_option("--scene", scene_path, "scene JSON with the cameras")->required()->check(CLI::ExistingFile);
  solve->add_option("--mesh", mesh_path, "CAD model OBJ")->required()->check(CLI::ExistingFile);
  solve->add_option("--config", config_path, "solver config JSON")->check(CLI::ExistingFile);
  solve->add_option("--symmetry", symmetry, "auto or a fixed order")->check(CLI::IsMember({"auto", "1", "2", "4", "36"}));
  solve->add_option("-o,--out", out);

  auto* stats = app.add_subcommand("stats", "Dataset statistics as CSV");
  std::vector<std::string> scene_dirs;
  std::string models_dir;
  std::size_t samples = 2000;
  stats->add_option("scene-dir", scene_dirs, "scene directories")->required()->check(CLI::ExistingDirectory);
  stats->add_option("--models", models_dir, "model directory (default <scene-dir>/../../models)");
  stats->add_option("--samples", samples, "surface samples for truncation")->check(CLI::Range(100, 1000000));
  stats->add_option("-o,--out", out);

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset directory");
  SyntheticSpec spec;
  std::string synth_out;
  bool no_render = false;
  synth->add_option("--seed", spec.seed);
  synth->add_option("--objects", spec.objects)->check(CLI::Range(1, 100000));
  synth->add_option("--sym-frac", spec.symmetric_fraction)->check(CLI::Range(0.0, 1.0));
  synth->add_option("--coplanar-frac", spec.coplanar_fraction)->check(CLI::Range(0.0, 1.0));
  synth->add_option("--noise", spec.pixel_noise, "pixel noise sigma");
  synth->add_option("--objects-per-scene", spec.objects_per_scene)->check(CLI::Range(1, 1000));
  synth->add_option("--frames", spec.frames_per_scene)->check(CLI::Range(4, 1000));
  synth->add_option("--out", synth_out, "output dataset directory")->required();
  synth->add_flag("--no-render", no_render, "skip frame images");

  auto* ablate = app.add_subcommand("ablate", "Verified fraction per cumulative solver configuration");
  SyntheticSpec ablate_spec = ablation_harness_spec();
  double alpha = SolverConfig{}.alpha, tau = 5.0;
  ablate->add_option("--objects", ablate_spec.objects)->check(CLI::Range(1, 100000));
  ablate->add_option("--seed", ablate_spec.seed);
  ablate->add_option("--noise", ablate_spec.pixel_noise);
  ablate->add_option("--points-per-frame", ablate_spec.points_per_frame)->check(CLI::Range(1, 100));
  ablate->add_option("--mislabel-rate", ablate_spec.mislabel_rate)->check(CLI::Range(0.0, 1.0));
  ablate->add_option("--relabel-rate", ablate_spec.relabel_rate)->check(CLI::Range(0.0, 1.0));
  ablate->add_option("--sym-frac", ablate_spec.symmetric_fraction)->check(CLI::Range(0.0, 1.0));
  ablate->add_option("--coplanar-frac", ablate_spec.coplanar_fraction)->check(CLI::Range(0.0, 1.0));
  ablate->add_option("--alpha", alpha, "up-axis weight of the full configuration");
  ablate->add_option("--tau", tau, "verification threshold in pixels");
  ablate->add_option("-o,--out", out);

  auto* serve = app.add_subcommand("serve", "Run the annotation task service");
  ServiceOptions service_opt;
  std::string host = "127.0.0.1", data_dir, static_dir, serve_config;
  int port = 8080;
  bool no_auto_solve = false;
  serve->add_option("--port", port)->check(CLI::Range(0, 65535));
  serve->add_option("--host", host);
  serve->add_option("--data-dir", data_dir)->required()->check(CLI::ExistingDirectory);
  serve->add_option("--workers", service_opt.solver_workers, "concurrent solver runs")->check(CLI::Range(1, 256));
  serve->add_option("--static", static_dir, "directory served at /")->check(CLI::ExistingDirectory);
  serve->add_option("--config", serve_config, "solver config JSON")->check(CLI::ExistingFile);
  serve->add_flag("--no-auto-solve", no_auto_solve, "leave CORRESPONDED tasks for an explicit solve submission");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*track) return run_track(detections, weights, threshold, out);
    if (*retrieve) return run_retrieve(tracks_path, db_path, top_k, aggregation, out);
    if (*solve) return run_solve(corr_path, scene_path, mesh_path, config_path, symmetry, out);
    if (*stats) return run_stats(scene_dirs, models_dir, samples, out);
    if (*synth) return run_synth(spec, synth_out, !no_render);
    if (*ablate) return run_ablate(ablate_spec, alpha, tau, out);
    if (*serve) {
      service_opt.data_dir = data_dir;
      service_opt.static_dir = static_dir;
      service_opt.auto_solve = !no_auto_solve;
      return run_serve(service_opt, host, port, serve_config);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
