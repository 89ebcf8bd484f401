#pragma once

#include <fcntl.h>
#include <unistd.h>

#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cadkit/errors.hpp"
#include "cadkit/io.hpp"
#include "cadkit/pose_solver.hpp"
#include "cadkit/retrieval.hpp"

namespace cadkit {

enum class Stage { TRACKED, CAD_SELECTED, REJECTED_NO_MATCH, CORRESPONDED, POSED, VERIFIED_OK, VERIFIED_BAD };

inline constexpr std::array<Stage, 7> kAllStages{Stage::TRACKED,     Stage::CAD_SELECTED, Stage::REJECTED_NO_MATCH,
                                                 Stage::CORRESPONDED, Stage::POSED,       Stage::VERIFIED_OK,
                                                 Stage::VERIFIED_BAD};

inline const char* to_string(Stage s) {
  switch (s) {
    case Stage::TRACKED: return "TRACKED";
    case Stage::CAD_SELECTED: return "CAD_SELECTED";
    case Stage::REJECTED_NO_MATCH: return "REJECTED_NO_MATCH";
    case Stage::CORRESPONDED: return "CORRESPONDED";
    case Stage::POSED: return "POSED";
    case Stage::VERIFIED_OK: return "VERIFIED_OK";
    case Stage::VERIFIED_BAD: return "VERIFIED_BAD";
  }
  return "TRACKED";
}

inline std::optional<Stage> stage_from_string(std::string_view s) {
  for (Stage st : kAllStages)
    if (s == to_string(st)) return st;
  return std::nullopt;
}

inline bool is_terminal(Stage s) {
  return s == Stage::REJECTED_NO_MATCH || s == Stage::VERIFIED_OK || s == Stage::VERIFIED_BAD;
}

enum class PayloadKind { candidate_choice, none_match, correspondences, solve, verdict };

inline constexpr std::array<PayloadKind, 5> kAllPayloadKinds{PayloadKind::candidate_choice, PayloadKind::none_match,
                                                             PayloadKind::correspondences, PayloadKind::solve,
                                                             PayloadKind::verdict};

inline const char* to_string(PayloadKind k) {
  switch (k) {
    case PayloadKind::candidate_choice: return "candidate_choice";
    case PayloadKind::none_match: return "none_match";
    case PayloadKind::correspondences: return "correspondences";
    case PayloadKind::solve: return "solve";
    case PayloadKind::verdict: return "verdict";
  }
  return "candidate_choice";
}

inline std::optional<PayloadKind> payload_kind_from_string(std::string_view s) {
  for (PayloadKind k : kAllPayloadKinds)
    if (s == to_string(k)) return k;
  return std::nullopt;
}

/// Result submitted for a task. `version` is the task version the client fetched.
struct TaskPayload {
  PayloadKind kind = PayloadKind::candidate_choice;
  std::int64_t version = 0;
  std::string annotator_id;
  int candidate_index = -1;
  std::optional<CorrespondenceSet> correspondences;
  std::optional<bool> accept;
};

/// The stage graph: TRACKED→(CAD_SELECTED|REJECTED_NO_MATCH)→CORRESPONDED→POSED→(VERIFIED_OK|VERIFIED_BAD).
inline std::optional<Stage> next_stage(Stage stage, PayloadKind kind, bool accept = true) {
  switch (stage) {
    case Stage::TRACKED:
      if (kind == PayloadKind::candidate_choice) return Stage::CAD_SELECTED;
      if (kind == PayloadKind::none_match) return Stage::REJECTED_NO_MATCH;
      break;
    case Stage::CAD_SELECTED:
      if (kind == PayloadKind::correspondences) return Stage::CORRESPONDED;
      break;
    case Stage::CORRESPONDED:
      if (kind == PayloadKind::solve) return Stage::POSED;
      break;
    case Stage::POSED:
      if (kind == PayloadKind::verdict) return accept ? Stage::VERIFIED_OK : Stage::VERIFIED_BAD;
      break;
    default: break;
  }
  return std::nullopt;
}

struct AnnotationTask {
  std::string task_id;
  std::string track_id;
  std::string scene_id;
  Stage stage = Stage::TRACKED;
  std::int64_t version = 0;
  // Stage-specific records, filled in as the task advances.
  CandidateList candidates;
  int candidate_index = -1;
  std::string model_id;
  std::optional<CorrespondenceSet> correspondences;
  std::optional<SolveResult> solve_result;
  std::optional<bool> accepted;
  std::string annotator_id;
  std::string last_payload_digest;  ///< lets a retried submission be recognised
};

inline constexpr std::size_t kMinPointsPerKeyframe = 4;

inline json to_json(const TaskPayload& p) {
  json j = {{"kind", to_string(p.kind)}, {"version", p.version}};
  if (!p.annotator_id.empty()) j["annotator_id"] = p.annotator_id;
  if (p.kind == PayloadKind::candidate_choice) j["candidate_index"] = p.candidate_index;
  if (p.correspondences) j["correspondences"] = to_json(*p.correspondences);
  if (p.accept) j["accept"] = *p.accept;
  return j;
}

/// Malformed submissions raise PayloadError.
inline TaskPayload payload_from_json(const json& j) {
  using namespace io_detail;
  try {
    TaskPayload p;
    if (!j.is_object()) throw SchemaError("payload", "expected object");
    const auto kind = string(field(j, "kind", "payload"), "payload.kind");
    const auto k = payload_kind_from_string(kind);
    if (!k) throw SchemaError("payload.kind", "unknown kind '" + kind + "'");
    p.kind = *k;
    p.version = integer(field(j, "version", "payload"), "payload.version");
    if (j.contains("annotator_id")) p.annotator_id = string(j["annotator_id"], "payload.annotator_id");
    if (j.contains("candidate_index"))
      p.candidate_index = static_cast<int>(integer(j["candidate_index"], "payload.candidate_index"));
    if (j.contains("correspondences")) p.correspondences = correspondences_from_json(j["correspondences"]);
    if (j.contains("accept")) p.accept = boolean(j["accept"], "payload.accept");
    return p;
  } catch (const SchemaError& e) {
    throw PayloadError(e.what());
  }
}

inline std::string payload_digest(const TaskPayload& p) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(to_json(p).dump())));
  return buf;
}

inline json to_json(const AnnotationTask& t) {
  json payload = {{"candidates", to_json(t.candidates)},
                  {"candidate_index", t.candidate_index},
                  {"model_id", t.model_id},
                  {"annotator_id", t.annotator_id},
                  {"last_payload_digest", t.last_payload_digest}};
  if (t.correspondences) payload["correspondences"] = to_json(*t.correspondences);
  if (t.solve_result) payload["solve_result"] = to_json(*t.solve_result);
  if (t.accepted) payload["accepted"] = *t.accepted;
  return {{"task_id", t.task_id},
          {"track_id", t.track_id},
          {"scene_id", t.scene_id},
          {"stage", to_string(t.stage)},
          {"version", t.version},
          {"payload", payload}};
}

inline AnnotationTask task_from_json(const json& j) {
  using namespace io_detail;
  AnnotationTask t;
  t.task_id = string(field(j, "task_id", "task"), "task.task_id");
  t.track_id = string(field(j, "track_id", "task"), "task.track_id");
  t.scene_id = string(field(j, "scene_id", "task"), "task.scene_id");
  const auto stage = string(field(j, "stage", "task"), "task.stage");
  const auto s = stage_from_string(stage);
  if (!s) throw SchemaError("task.stage", "unknown stage '" + stage + "'");
  t.stage = *s;
  t.version = integer(field(j, "version", "task"), "task.version");
  const auto& p = field(j, "payload", "task");
  t.candidates = candidates_from_json(field(p, "candidates", "task.payload"));
  t.candidate_index = static_cast<int>(integer(field(p, "candidate_index", "task.payload"), "task.payload.candidate_index"));
  t.model_id = string(field(p, "model_id", "task.payload"), "task.payload.model_id");
  t.annotator_id = string(field(p, "annotator_id", "task.payload"), "task.payload.annotator_id");
  t.last_payload_digest = string(field(p, "last_payload_digest", "task.payload"), "task.payload.last_payload_digest");
  if (p.contains("correspondences")) t.correspondences = correspondences_from_json(p["correspondences"]);
  if (p.contains("solve_result")) t.solve_result = solve_result_from_json(p["solve_result"]);
  if (p.contains("accepted")) t.accepted = boolean(p["accepted"], "task.payload.accepted");
  return t;
}

/// Environment-dependent steps of a transition: camera checks for correspondences and the
/// solver run on entering POSED.
struct TaskHooks {
  std::function<void(const AnnotationTask&, const CorrespondenceSet&)> check_correspondences;
  std::function<SolveResult(const AnnotationTask&, const CorrespondenceSet&)> solve;
};

/// Applies one submission. Checks run in order: version, transition, payload.
inline AnnotationTask advance_task(const AnnotationTask& task, const TaskPayload& p, const TaskHooks& hooks = {}) {
  if (p.version != task.version)
    throw VersionConflictError("task " + task.task_id + " is at version " + std::to_string(task.version) +
                               ", submission carries " + std::to_string(p.version));
  const auto target = next_stage(task.stage, p.kind, p.accept.value_or(true));
  if (!target)
    throw TransitionError(std::string("cannot apply ") + to_string(p.kind) + " to a task in stage " + to_string(task.stage));

  AnnotationTask out = task;
  switch (p.kind) {
    case PayloadKind::candidate_choice:
      if (p.candidate_index < 0 || p.candidate_index >= static_cast<int>(task.candidates.entries.size()))
        throw PayloadError("candidate_index " + std::to_string(p.candidate_index) + " outside [0, " +
                           std::to_string(task.candidates.entries.size()) + ")");
      out.candidate_index = p.candidate_index;
      out.model_id = task.candidates.entries[p.candidate_index].model_id;
      break;
    case PayloadKind::none_match: break;
    case PayloadKind::correspondences: {
      if (!p.correspondences) throw PayloadError("correspondences missing");
      const auto& c = *p.correspondences;
      if (c.track_id != task.track_id) throw PayloadError("correspondences are for track " + c.track_id);
      if (c.model_id != task.model_id) throw PayloadError("correspondences are for model " + c.model_id);
      std::map<std::int64_t, std::size_t> per_frame;
      for (const auto& it : c.items) ++per_frame[it.frame_id];
      for (const auto& [frame, n] : per_frame)
        if (n < kMinPointsPerKeyframe)
          throw PayloadError("frame " + std::to_string(frame) + " has " + std::to_string(n) + " correspondences, need " +
                             std::to_string(kMinPointsPerKeyframe));
      if (hooks.check_correspondences) {
        try {
          hooks.check_correspondences(task, c);
        } catch (const SchemaError& e) {
          throw PayloadError(std::string("correspondences.") + e.what());
        }
      }
      out.correspondences = c;
      break;
    }
    case PayloadKind::solve:
      if (!hooks.solve) throw std::logic_error("no solver configured");
      if (!task.correspondences) throw PayloadError("task has no correspondences");
      try {
        out.solve_result = hooks.solve(task, *task.correspondences);
      } catch (const PayloadError&) {
        throw;
      } catch (const Error& e) {
        throw PayloadError(std::string("solve failed: ") + e.what());
      }
      break;
    case PayloadKind::verdict:
      if (!p.accept) throw PayloadError("verdict needs accept");
      out.accepted = *p.accept;
      break;
  }
  out.stage = *target;
  out.version = task.version + 1;
  if (!p.annotator_id.empty()) out.annotator_id = p.annotator_id;
  out.last_payload_digest = payload_digest(p);
  return out;
}

// ---------------------------------------------------------------------------
// Durable store: append-only JSONL journal of full task records plus a snapshot.

struct TaskStoreOptions {
  std::filesystem::path dir;
  std::size_t compact_every = 1000;  ///< journal records between snapshots; 0 = never
  bool sync = true;                  ///< fsync every journal append
};

class TaskStore {
public:
  explicit TaskStore(TaskStoreOptions opt) : opt_(std::move(opt)) {
    std::filesystem::create_directories(opt_.dir);
    replay();
  }

  ~TaskStore() {
    if (fd_ >= 0) ::close(fd_);
  }

  TaskStore(const TaskStore&) = delete;
  TaskStore& operator=(const TaskStore&) = delete;

  std::filesystem::path journal_path() const { return opt_.dir / "journal.jsonl"; }
  std::filesystem::path snapshot_path() const { return opt_.dir / "snapshot.json"; }

  AnnotationTask create(AnnotationTask t) {
    std::lock_guard lock(mu_);
    if (t.task_id.empty()) throw PayloadError("task_id must not be empty");
    if (tasks_.count(t.task_id)) throw PayloadError("task " + t.task_id + " already exists");
    t.stage = Stage::TRACKED;
    t.version = 0;
    append("create", t);
    order_.push_back(t.task_id);
    tasks_[t.task_id] = t;
    return t;
  }

  bool contains(const std::string& id) const {
    std::lock_guard lock(mu_);
    return tasks_.count(id) > 0;
  }

  AnnotationTask get(const std::string& id) const {
    std::lock_guard lock(mu_);
    const auto it = tasks_.find(id);
    if (it == tasks_.end()) throw NotFoundError("no task " + id);
    return it->second;
  }

  std::optional<AnnotationTask> find_by_track(const std::string& track_id) const {
    std::lock_guard lock(mu_);
    for (const auto& id : order_)
      if (tasks_.at(id).track_id == track_id) return tasks_.at(id);
    return std::nullopt;
  }

  /// Oldest task in `stage`.
  std::optional<AnnotationTask> next(Stage stage) const {
    std::lock_guard lock(mu_);
    for (const auto& id : order_)
      if (tasks_.at(id).stage == stage) return tasks_.at(id);
    return std::nullopt;
  }

  std::vector<AnnotationTask> tasks() const {
    std::lock_guard lock(mu_);
    std::vector<AnnotationTask> out;
    for (const auto& id : order_) out.push_back(tasks_.at(id));
    return out;
  }

  /// Validates and applies a submission; the record is durable before this returns. A retry of
  /// the submission that produced the current version returns the current task unchanged.
  AnnotationTask submit(const std::string& id, const TaskPayload& p, const TaskHooks& hooks = {}) {
    const AnnotationTask current = get(id);
    if (p.version + 1 == current.version && payload_digest(p) == current.last_payload_digest) return current;
    // The solver may run long, so the transition is computed without holding the lock.
    AnnotationTask next = advance_task(current, p, hooks);
    std::lock_guard lock(mu_);
    auto& slot = tasks_.at(id);
    if (slot.version != current.version)
      throw VersionConflictError("task " + id + " changed to version " + std::to_string(slot.version) + " concurrently");
    append("advance", next);
    slot = next;
    if (opt_.compact_every && since_snapshot_ >= opt_.compact_every) compact_locked();
    return next;
  }

  void compact() {
    std::lock_guard lock(mu_);
    compact_locked();
  }

  std::int64_t sequence() const {
    std::lock_guard lock(mu_);
    return seq_;
  }

private:
  static void write_all(int fd, std::string_view data, const std::string& what) {
    while (!data.empty()) {
      const auto n = ::write(fd, data.data(), data.size());
      if (n < 0) throw Error("write failed: " + what);
      data.remove_prefix(static_cast<std::size_t>(n));
    }
  }

  void append(const char* op, const AnnotationTask& t) {
    const json rec = {{"op", op}, {"seq", seq_ + 1}, {"task", to_json(t)}};
    write_all(fd_, rec.dump() + "\n", journal_path().string());
    if (opt_.sync && ::fsync(fd_) != 0) throw Error("fsync failed: " + journal_path().string());
    ++seq_;
    ++since_snapshot_;
  }

  void apply(const std::string& op, AnnotationTask t) {
    const bool known = tasks_.count(t.task_id) > 0;
    if (op == "create" && !known) order_.push_back(t.task_id);
    else if (op != "create" && !known) throw ParseError("journal advances unknown task " + t.task_id);
    tasks_[t.task_id] = std::move(t);
  }

  void replay() {
    std::int64_t snapshot_seq = 0;
    if (std::filesystem::exists(snapshot_path())) {
      const auto snap = parse_json(read_file(snapshot_path().string()), snapshot_path().string());
      snapshot_seq = io_detail::integer(io_detail::field(snap, "seq", "snapshot"), "snapshot.seq");
      for (const auto& t : io_detail::field(snap, "tasks", "snapshot")) apply("create", task_from_json(t));
    }
    seq_ = snapshot_seq;

    std::size_t valid_bytes = 0;
    if (std::filesystem::exists(journal_path())) {
      const auto text = read_file(journal_path().string());
      std::size_t start = 0, line = 0;
      while (start < text.size()) {
        const auto end = text.find('\n', start);
        if (end == std::string::npos) break;  // torn final write: never acknowledged
        ++line;
        const auto raw = std::string_view(text).substr(start, end - start);
        if (!detail::trim(raw).empty()) {
          json rec;
          try {
            rec = json::parse(raw);
          } catch (const json::parse_error& e) {
            throw ParseError(journal_path().string() + ": " + e.what(), line);
          }
          const auto seq = rec.at("seq").get<std::int64_t>();
          if (seq > seq_) {
            apply(rec.at("op").get<std::string>(), task_from_json(rec.at("task")));
            seq_ = seq;
            ++since_snapshot_;
          }
        }
        start = end + 1;
      }
      valid_bytes = start;
    }
    fd_ = ::open(journal_path().c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd_ < 0) throw Error("cannot open " + journal_path().string());
    if (::ftruncate(fd_, static_cast<off_t>(valid_bytes)) != 0) throw Error("cannot truncate " + journal_path().string());
  }

  void compact_locked() {
    json tasks = json::array();
    for (const auto& id : order_) tasks.push_back(to_json(tasks_.at(id)));
    const auto tmp = opt_.dir / "snapshot.json.tmp";
    {
      const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
      if (fd < 0) throw Error("cannot write " + tmp.string());
      write_all(fd, json{{"seq", seq_}, {"tasks", tasks}}.dump() + "\n", tmp.string());
      const bool ok = ::fsync(fd) == 0;
      ::close(fd);
      if (!ok) throw Error("fsync failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, snapshot_path());
    if (const int dfd = ::open(opt_.dir.c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC); dfd >= 0) {
      ::fsync(dfd);
      ::close(dfd);
    }
    // Records already in the snapshot are skipped by sequence number if a crash lands here.
    if (::ftruncate(fd_, 0) != 0) throw Error("cannot truncate " + journal_path().string());
    if (opt_.sync) ::fsync(fd_);
    since_snapshot_ = 0;
  }

  TaskStoreOptions opt_;
  mutable std::mutex mu_;
  std::vector<std::string> order_;
  std::unordered_map<std::string, AnnotationTask> tasks_;
  std::int64_t seq_ = 0;
  std::size_t since_snapshot_ = 0;
  int fd_ = -1;
};

}  // namespace cadkit
