#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cadkit/adam.hpp"
#include "cadkit/errors.hpp"
#include "cadkit/geometry.hpp"
#include "cadkit/mesh.hpp"

namespace cadkit {

// ---------------------------------------------------------------------------
// Inputs and configuration

struct CorrespondenceItem {
  std::int64_t frame_id = 0;
  Vec3 p_model = Vec3::Zero();  ///< point on the CAD surface, canonical frame
  Vec2 q_pixel = Vec2::Zero();
};

/// Annotated 3D↔2D pairs for one track. When `flipped`, model points are mirrored across x = 0
/// before posing. `category` selects whether the up-axis term applies; empty means "use the
/// mesh category".
struct CorrespondenceSet {
  std::string track_id;
  std::string model_id;
  std::string category;
  bool flipped = false;
  std::vector<CorrespondenceItem> items;
};

inline std::set<std::string> default_upright_categories() {
  return {"chair", "table", "cabinet", "sofa", "bed", "bookshelf", "display", "bin"};
}

struct SolverConfig {
  double alpha = 1000.0;  ///< up-axis weight
  double beta = 100.0;  ///< front-of-camera weight
  int steps = 500;
  double learning_rate = 0.05;
  double final_learning_rate_ratio = 0.01;  ///< exponential decay to this fraction of learning_rate
  int n_starts = 24;
  std::uint64_t seed = 0;
  std::set<std::string> upright_categories = default_upright_categories();
  double front_margin = 0.1;
  Vec3 world_up = Vec3::UnitY();
  double verify_tau_px = 5.0;
  bool use_symmetry = true;
  bool use_coplanar_scale = true;
  double coplanar_rel_tol = kDefaultCoplanarTolerance;
  double axis_snap_deg = 15.0;
  double time_budget_s = 0;  ///< wall-clock limit checked between starts; 0 = unlimited

  void validate() const {
    if (!(alpha >= 0) || !(beta >= 0)) throw std::invalid_argument("alpha and beta must be non-negative");
    if (steps < 1 || n_starts < 1) throw std::invalid_argument("steps and n_starts must be positive");
    if (!(learning_rate > 0)) throw std::invalid_argument("learning_rate must be positive");
    if (!(time_budget_s >= 0)) throw std::invalid_argument("time_budget_s must be non-negative");
  }
};

enum class ScaleMode { full, coplanar_2dof, rotsym_tied };

inline const char* to_string(ScaleMode m) {
  switch (m) {
    case ScaleMode::full: return "full";
    case ScaleMode::coplanar_2dof: return "coplanar_2dof";
    case ScaleMode::rotsym_tied: return "rotsym_tied";
  }
  return "full";
}

/// How the three per-axis scales map onto free parameters.
struct ScaleParameterization {
  ScaleMode mode = ScaleMode::full;
  /// coplanar_2dof: the axis whose scale is the mean of the other two.
  /// rotsym_tied: the up axis; the two remaining scales share one parameter.
  int axis = 1;
  bool underdetermined = false;
  std::string diagnostic;

  int free_count() const { return mode == ScaleMode::full ? 3 : 2; }
};

inline std::vector<Vec3> model_points(const CorrespondenceSet& corr) {
  std::vector<Vec3> pts;
  pts.reserve(corr.items.size());
  for (const auto& it : corr.items) pts.push_back(corr.flipped ? flip_point(it.p_model) : it.p_model);
  return pts;
}

/// Chooses the scale parameterization: tied horizontal scales for 36-way symmetric models,
/// two free scales when all annotated model points lie on a plane perpendicular to a canonical
/// axis, otherwise three.
inline ScaleParameterization scale_parameterization(const CorrespondenceSet& corr, const SymmetryClass& sym,
                                                    const Vec3& mesh_up, double rel_tol = kDefaultCoplanarTolerance,
                                                    double axis_snap_deg = 15.0) {
  ScaleParameterization out;
  if (sym.order == 36) {
    out.mode = ScaleMode::rotsym_tied;
    out.axis = dominant_axis(mesh_up);
    return out;
  }

  std::vector<Vec3> distinct;
  for (const auto& p : model_points(corr))
    if (std::none_of(distinct.begin(), distinct.end(), [&](const Vec3& q) { return (q - p).norm() < 1e-9; }))
      distinct.push_back(p);
  if (distinct.size() < 3) {
    out.underdetermined = true;
    out.diagnostic = "fewer than 3 distinct model points";
    return out;
  }

  const auto fit = fit_plane(distinct, rel_tol);
  if (!fit.is_coplanar) return out;
  const int axis = dominant_axis(fit.plane.normal);
  const double angle = std::acos(std::min(1.0, std::abs(fit.plane.normal(axis)))) * 180.0 / kPi;
  if (angle > axis_snap_deg) {
    out.diagnostic = "coplanar points but plane normal is " + std::to_string(angle) + " deg from nearest axis";
    return out;
  }
  out.mode = ScaleMode::coplanar_2dof;
  out.axis = axis;
  return out;
}

// ---------------------------------------------------------------------------
// Objective

struct LossTerms {
  double repr = 0;
  double up = 0;
  double front = 0;
};

/// Distances of the evaluation point from the objective's non-differentiable sets.
struct Smoothness {
  double min_abs_residual = std::numeric_limits<double>::infinity();  ///< smallest |Δu| or |Δv|
  double min_hinge_gap = std::numeric_limits<double>::infinity();     ///< smallest |margin − depth|
  double min_group_gap = std::numeric_limits<double>::infinity();     ///< best vs runner-up symmetry element
  double min_up_component = std::numeric_limits<double>::infinity();  ///< smallest |(R·up − world_up)_i|
  int behind_camera = 0;
};

/// Rotation from two free 3-vectors via Gram–Schmidt: columns e1, e2, e1×e2.
inline Mat3 rotation_from_6d(const Vec3& a, const Vec3& b) {
  const Vec3 e1 = a.normalized();
  const Vec3 e2 = (b - e1.dot(b) * e1).normalized();
  Mat3 r;
  r.col(0) = e1;
  r.col(1) = e2;
  r.col(2) = e1.cross(e2);
  return r;
}

/// Back-propagates dL/dR through rotation_from_6d.
inline void rotation_from_6d_backward(const Vec3& a, const Vec3& b, const Mat3& grad_r, Vec3& grad_a, Vec3& grad_b) {
  const double na = a.norm();
  const Vec3 e1 = a / na;
  const double d = e1.dot(b);
  const Vec3 u = b - d * e1;
  const double nu = u.norm();
  const Vec3 e2 = u / nu;

  const Vec3 g3 = grad_r.col(2);
  Vec3 g1 = grad_r.col(0) + e2.cross(g3);
  const Vec3 g2 = grad_r.col(1) + g3.cross(e1);

  const Vec3 gu = (g2 - e2 * e2.dot(g2)) / nu;
  grad_b = gu - e1 * e1.dot(gu);
  g1 -= d * gu + b * e1.dot(gu);
  grad_a = (g1 - e1 * e1.dot(g1)) / na;
}

/// The pose objective L_repr + α·L_up + β·L_front over a flat parameter vector
/// [T (3) | a (3) | b (3) | log-scales (2 or 3)].
class PoseObjective {
public:
  PoseObjective(const CorrespondenceSet& corr, std::span<const CameraFrame> cams, const SymmetryClass& sym,
                const ScaleParameterization& scale, const Vec3& mesh_up, const SolverConfig& cfg, bool apply_up)
      : scale_(scale), order_(std::max(1, sym.order)), mesh_up_(mesh_up.normalized()), world_up_(cfg.world_up.normalized()),
        alpha_(cfg.alpha), beta_(cfg.beta), margin_(cfg.front_margin), apply_up_(apply_up) {
    if (corr.items.empty()) throw UnderdeterminedError("empty correspondence set");
    std::unordered_map<std::int64_t, std::size_t> cam_index;
    for (std::size_t i = 0; i < cams.size(); ++i) cam_index.emplace(cams[i].frame_id, i);

    std::vector<std::size_t> order(corr.items.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return corr.items[x].frame_id < corr.items[y].frame_id; });

    std::vector<Mat3> group(order_);
    for (int j = 0; j < order_; ++j) group[j] = symmetry_rotation({order_, sym.axis.normalized()}, j);

    for (std::size_t k : order) {
      const auto& it = corr.items[k];
      const auto found = cam_index.find(it.frame_id);
      if (found == cam_index.end()) throw MissingCameraError("no camera for frame " + std::to_string(it.frame_id));
      if (frames_.empty() || frames_.back().frame_id != it.frame_id) {
        const auto& cam = cams[found->second];
        frames_.push_back({it.frame_id, cam, 2.0 * (cam.image_size.width + cam.image_size.height), items_.size(), items_.size()});
      }
      const Vec3 p = corr.flipped ? flip_point(it.p_model) : it.p_model;
      items_.push_back({p, it.q_pixel});
      for (int j = 0; j < order_; ++j) variants_.push_back(group[j] * p);
      ++frames_.back().end;
    }
  }

  int dim() const { return 9 + scale_.free_count(); }
  const ScaleParameterization& scale_parameterization() const { return scale_; }
  int symmetry_order() const { return order_; }
  std::size_t item_count() const { return items_.size(); }

  Vec3 scales_from(const Eigen::VectorXd& x) const {
    Vec3 s;
    const int u = scale_.axis;
    switch (scale_.mode) {
      case ScaleMode::full:
        s = x.segment<3>(9).array().exp();
        break;
      case ScaleMode::coplanar_2dof: {
        const int p = (u + 1) % 3, q = (u + 2) % 3;
        s(p) = std::exp(x(9));
        s(q) = std::exp(x(10));
        s(u) = 0.5 * (s(p) + s(q));
        break;
      }
      case ScaleMode::rotsym_tied: {
        s(u) = std::exp(x(9));
        s((u + 1) % 3) = s((u + 2) % 3) = std::exp(x(10));
        break;
      }
    }
    return s;
  }

  Pose9DoF decode(const Eigen::VectorXd& x) const {
    Pose9DoF pose;
    pose.translation = x.segment<3>(0);
    pose.rotation = rotation_from_6d(x.segment<3>(3), x.segment<3>(6));
    pose.scale = scales_from(x);
    return pose;
  }

  /// Parameters for `pose`; scales not representable in the current mode are projected onto it.
  Eigen::VectorXd encode(const Pose9DoF& pose) const {
    Eigen::VectorXd x(dim());
    x.segment<3>(0) = pose.translation;
    x.segment<3>(3) = pose.rotation.col(0);
    x.segment<3>(6) = pose.rotation.col(1);
    const Vec3 ls = pose.scale.array().log();
    const int u = scale_.axis;
    switch (scale_.mode) {
      case ScaleMode::full: x.segment<3>(9) = ls; break;
      case ScaleMode::coplanar_2dof:
        x(9) = ls((u + 1) % 3);
        x(10) = ls((u + 2) % 3);
        break;
      case ScaleMode::rotsym_tied:
        x(9) = ls(u);
        x(10) = std::log(0.5 * (pose.scale((u + 1) % 3) + pose.scale((u + 2) % 3)));
        break;
    }
    return x;
  }

  /// Loss terms at `x`; total = repr + α·up + β·front. Fills `grad` (size dim()) when given.
  LossTerms evaluate(const Eigen::VectorXd& x, Eigen::VectorXd* grad = nullptr, Smoothness* smooth = nullptr) const {
    const Vec3 a = x.segment<3>(3), b = x.segment<3>(6);
    const Mat3 r = rotation_from_6d(a, b);
    const Vec3 s = scales_from(x);
    Mat3 gr = Mat3::Zero();
    Vec3 gs = Vec3::Zero(), gt = Vec3::Zero();
    const LossTerms terms = evaluate_pose(r, s, x.segment<3>(0), grad ? &gr : nullptr, grad ? &gs : nullptr,
                                          grad ? &gt : nullptr, smooth);
    if (grad) {
      grad->resize(dim());
      grad->segment<3>(0) = gt;
      Vec3 ga, gb;
      rotation_from_6d_backward(a, b, gr, ga, gb);
      grad->segment<3>(3) = ga;
      grad->segment<3>(6) = gb;
      const int u = scale_.axis;
      switch (scale_.mode) {
        case ScaleMode::full: grad->segment<3>(9) = gs.cwiseProduct(s); break;
        case ScaleMode::coplanar_2dof: {
          const int p = (u + 1) % 3, q = (u + 2) % 3;
          (*grad)(9) = (gs(p) + 0.5 * gs(u)) * s(p);
          (*grad)(10) = (gs(q) + 0.5 * gs(u)) * s(q);
          break;
        }
        case ScaleMode::rotsym_tied:
          (*grad)(9) = gs(u) * s(u);
          (*grad)(10) = (gs((u + 1) % 3) + gs((u + 2) % 3)) * s((u + 1) % 3);
          break;
      }
    }
    return terms;
  }

  double total(const LossTerms& t) const { return t.repr + alpha_ * t.up + beta_ * t.front; }

  /// Loss terms of an explicit pose, with optional gradients w.r.t. R, S and T.
  LossTerms evaluate_pose(const Mat3& r, const Vec3& s, const Vec3& t, Mat3* gr = nullptr, Vec3* gs = nullptr,
                          Vec3* gt = nullptr, Smoothness* smooth = nullptr, std::vector<int>* chosen = nullptr) const {
    LossTerms terms;
    const bool want_grad = gr != nullptr;
    if (chosen) chosen->clear();

    for (const auto& f : frames_) {
      // Symmetry element with the lowest frame residual; ties keep the lower index.
      double best = std::numeric_limits<double>::infinity(), second = best;
      int best_j = 0;
      for (int j = 0; j < order_; ++j) {
        double sum = 0;
        for (std::size_t i = f.begin; i < f.end; ++i)
          sum += item_residual(f, r * s.cwiseProduct(variants_[i * order_ + j]) + t, items_[i].q, nullptr, nullptr);
        if (sum < best) {
          second = best;
          best = sum;
          best_j = j;
        } else if (sum < second) {
          second = sum;
        }
      }
      terms.repr += best;
      if (chosen) chosen->push_back(best_j);
      if (smooth && order_ > 1) smooth->min_group_gap = std::min(smooth->min_group_gap, second - best);

      if (want_grad || smooth) {
        for (std::size_t i = f.begin; i < f.end; ++i) {
          const Vec3& v = variants_[i * order_ + best_j];
          const Vec3 sv = s.cwiseProduct(v);
          Vec3 gx = Vec3::Zero();
          item_residual(f, r * sv + t, items_[i].q, want_grad ? &gx : nullptr, smooth);
          if (want_grad) {
            *gt += gx;
            *gr += gx * sv.transpose();
            *gs += (r.transpose() * gx).cwiseProduct(v);
          }
        }
      }

      for (std::size_t i = f.begin; i < f.end; ++i) {
        const Vec3& p = items_[i].p;
        const Vec3 sp = s.cwiseProduct(p);
        const double depth = camera_depth(f.cam, r * sp + t);
        const double gap = margin_ - depth;
        if (smooth) smooth->min_hinge_gap = std::min(smooth->min_hinge_gap, std::abs(gap));
        if (gap > 0) {
          terms.front += gap;
          if (want_grad) {
            const Vec3 gx = -beta_ * f.cam.rotation.row(2).transpose();
            *gt += gx;
            *gr += gx * sp.transpose();
            *gs += (r.transpose() * gx).cwiseProduct(p);
          }
        }
      }
    }

    if (apply_up_) {
      const Vec3 diff = r * mesh_up_ - world_up_;
      terms.up = diff.lpNorm<1>();
      if (smooth) smooth->min_up_component = diff.cwiseAbs().minCoeff();
      if (want_grad) {
        const Vec3 sign = diff.unaryExpr([](double d) { return d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0); });
        *gr += alpha_ * sign * mesh_up_.transpose();
      }
    }
    return terms;
  }

  /// Per-frame mean Euclidean pixel error at the symmetry element chosen by the L1 objective.
  /// Behind-camera items count as the frame's penalty distance.
  std::map<std::int64_t, double> per_frame_pixel_error(const Pose9DoF& pose, std::vector<int>* chosen = nullptr) const {
    std::vector<int> js;
    evaluate_pose(pose.rotation, pose.scale, pose.translation, nullptr, nullptr, nullptr, nullptr, &js);
    std::map<std::int64_t, double> out;
    for (std::size_t k = 0; k < frames_.size(); ++k) {
      const auto& f = frames_[k];
      double sum = 0;
      for (std::size_t i = f.begin; i < f.end; ++i) {
        const auto px = project_point(f.cam, apply_pose(pose, variants_[i * order_ + js[k]]));
        sum += px ? (*px - items_[i].q).norm() : f.penalty;
      }
      out[f.frame_id] = sum / static_cast<double>(f.end - f.begin);
    }
    if (chosen) *chosen = js;
    return out;
  }

  /// Linear least-squares translation for fixed rotation and scale, using symmetry element 0.
  Vec3 initial_translation(const Mat3& r, const Vec3& s) const {
    Mat3 ata = Mat3::Zero();
    Vec3 atb = Vec3::Zero();
    for (const auto& f : frames_) {
      const auto& k = f.cam.intrinsics;
      const Eigen::RowVector3d r1 = f.cam.rotation.row(0), r2 = f.cam.rotation.row(1), r3 = f.cam.rotation.row(2);
      for (std::size_t i = f.begin; i < f.end; ++i) {
        const Vec3 rp = r * s.cwiseProduct(items_[i].p);
        const double un = (items_[i].q.x() - k.cx) / k.fx, vn = (items_[i].q.y() - k.cy) / k.fy;
        const std::array<std::pair<Eigen::RowVector3d, double>, 2> rows{
            std::pair{Eigen::RowVector3d(un * r3 - r1), f.cam.translation.x() - un * f.cam.translation.z()},
            std::pair{Eigen::RowVector3d(vn * r3 - r2), f.cam.translation.y() - vn * f.cam.translation.z()}};
        for (const auto& [row, rhs] : rows) {
          const double b = rhs - row.dot(rp);
          ata += row.transpose() * row;
          atb += row.transpose() * b;
        }
      }
    }
    ata += 1e-9 * Mat3::Identity();
    return ata.ldlt().solve(atb);
  }

private:
  struct Frame {
    std::int64_t frame_id;
    CameraFrame cam;
    double penalty;
    std::size_t begin, end;
  };
  struct Item {
    Vec3 p;
    Vec2 q;
  };

  /// L1 pixel residual of one item; adds dL/dX to `gx` when given.
  double item_residual(const Frame& f, const Vec3& x, const Vec2& q, Vec3* gx, Smoothness* smooth) const {
    const Vec3 pc = f.cam.rotation * x + f.cam.translation;
    if (pc.z() <= 0) {
      if (smooth) ++smooth->behind_camera;
      return f.penalty;
    }
    const auto& k = f.cam.intrinsics;
    const double iz = 1.0 / pc.z();
    const double du = k.fx * pc.x() * iz + k.cx - q.x();
    const double dv = k.fy * pc.y() * iz + k.cy - q.y();
    if (smooth) smooth->min_abs_residual = std::min({smooth->min_abs_residual, std::abs(du), std::abs(dv)});
    if (gx) {
      const double su = du > 0 ? 1.0 : (du < 0 ? -1.0 : 0.0);
      const double sv = dv > 0 ? 1.0 : (dv < 0 ? -1.0 : 0.0);
      const Vec3 gpc(su * k.fx * iz, sv * k.fy * iz, -(su * k.fx * pc.x() + sv * k.fy * pc.y()) * iz * iz);
      *gx += f.cam.rotation.transpose() * gpc;
    }
    return std::abs(du) + std::abs(dv);
  }

  ScaleParameterization scale_;
  int order_;
  Vec3 mesh_up_;
  Vec3 world_up_;
  double alpha_, beta_, margin_;
  bool apply_up_;
  std::vector<Frame> frames_;
  std::vector<Item> items_;
  std::vector<Vec3> variants_;  ///< items × symmetry elements
};

// ---------------------------------------------------------------------------
// Individual objective terms on explicit poses

/// Σ over frames of the smallest (over symmetry elements) summed L1 pixel residual.
inline double reprojection_loss(const Pose9DoF& pose, const CorrespondenceSet& corr, std::span<const CameraFrame> cams,
                                const SymmetryClass& sym = {}) {
  SolverConfig cfg;
  const PoseObjective obj(corr, cams, sym, {}, Vec3::UnitY(), cfg, false);
  return obj.evaluate_pose(pose.rotation, pose.scale, pose.translation).repr;
}

inline double up_axis_loss(const Mat3& r, const Vec3& mesh_up, const Vec3& world_up) {
  return (r * mesh_up - world_up).lpNorm<1>();
}

/// Up-axis loss gated by category: zero for categories not in `upright`.
inline double up_axis_loss(const Mat3& r, const Vec3& mesh_up, const Vec3& world_up, const std::string& category,
                           const std::set<std::string>& upright) {
  return upright.count(category) ? up_axis_loss(r, mesh_up, world_up) : 0.0;
}

/// Σ max(0, margin − depth) over annotated points.
inline double front_loss(const Pose9DoF& pose, const CorrespondenceSet& corr, std::span<const CameraFrame> cams,
                         double margin) {
  SolverConfig cfg;
  cfg.front_margin = margin;
  const PoseObjective obj(corr, cams, {}, {}, Vec3::UnitY(), cfg, false);
  return obj.evaluate_pose(pose.rotation, pose.scale, pose.translation).front;
}

inline std::string effective_category(const CorrespondenceSet& corr, const TriangleMesh& mesh) {
  return corr.category.empty() ? mesh.category : corr.category;
}

inline double total_loss(const Pose9DoF& pose, const CorrespondenceSet& corr, std::span<const CameraFrame> cams,
                         const TriangleMesh& mesh, const SymmetryClass& sym, const SolverConfig& cfg) {
  const bool upright = cfg.upright_categories.count(effective_category(corr, mesh)) > 0;
  const PoseObjective obj(corr, cams, cfg.use_symmetry ? sym : SymmetryClass{}, {}, mesh.up_axis, cfg, upright);
  return obj.total(obj.evaluate_pose(pose.rotation, pose.scale, pose.translation));
}

// ---------------------------------------------------------------------------
// Solver

struct SolveResult {
  Pose9DoF pose;
  LossTerms final_losses;
  double total_loss = 0;
  double mean_reproj_px = 0;
  std::map<std::int64_t, double> per_frame_reproj_px;
  int chosen_symmetry_index = 0;
  int symmetry_order = 1;
  ScaleMode scale_mode = ScaleMode::full;
  int scale_axis = 1;
  bool converged = false;
  int best_start = 0;
  int starts_completed = 0;
};

/// The 24 rotations of the chiral octahedral group, identity first.
inline std::vector<Mat3> octahedral_rotations() {
  std::vector<Mat3> out;
  std::array<int, 3> perm{0, 1, 2};
  do {
    for (int signs = 0; signs < 8; ++signs) {
      Mat3 m = Mat3::Zero();
      for (int r = 0; r < 3; ++r) m(r, perm[r]) = (signs >> r & 1) ? -1.0 : 1.0;
      if (m.determinant() > 0) out.push_back(m);
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return out;
}

inline std::vector<Mat3> start_rotations(int n, std::uint64_t seed) {
  auto base = octahedral_rotations();
  if (n <= static_cast<int>(base.size())) {
    base.resize(n);
    return base;
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0, 1);
  while (static_cast<int>(base.size()) < n) base.push_back(Eigen::Quaterniond(g(rng), g(rng), g(rng), g(rng)).normalized().toRotationMatrix());
  return base;
}

inline void check_solvable(const CorrespondenceSet& corr, std::span<const CameraFrame> cams) {
  if (corr.items.size() < 4)
    throw UnderdeterminedError("need at least 4 correspondences, got " + std::to_string(corr.items.size()));
  for (const auto& it : corr.items)
    if (std::none_of(cams.begin(), cams.end(), [&](const CameraFrame& c) { return c.frame_id == it.frame_id; }))
      throw MissingCameraError("no camera for frame " + std::to_string(it.frame_id));
}

/// Recovers the 9-DoF pose from correspondences by multi-start Adam on the combined objective.
inline SolveResult estimate_pose(const CorrespondenceSet& corr, std::span<const CameraFrame> cams,
                                 const TriangleMesh& mesh, const SymmetryClass& sym, const SolverConfig& cfg = {}) {
  cfg.validate();
  check_solvable(corr, cams);

  const SymmetryClass effective_sym = cfg.use_symmetry ? sym : SymmetryClass{1, sym.axis};
  ScaleParameterization scale;
  if (cfg.use_coplanar_scale || effective_sym.order == 36)
    scale = scale_parameterization(corr, effective_sym, mesh.up_axis, cfg.coplanar_rel_tol, cfg.axis_snap_deg);
  if (!cfg.use_coplanar_scale && scale.mode == ScaleMode::coplanar_2dof) scale = {};

  const bool upright = cfg.upright_categories.count(effective_category(corr, mesh)) > 0;
  const PoseObjective objective(corr, cams, effective_sym, scale, mesh.up_axis, cfg, upright);

  const auto starts = start_rotations(cfg.n_starts, cfg.seed);
  const double decay = std::pow(cfg.final_learning_rate_ratio, 1.0 / std::max(1, cfg.steps - 1));

  double best_total = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_x;
  int best_start = 0;
  Eigen::VectorXd grad(objective.dim());
  const auto t0 = std::chrono::steady_clock::now();
  int completed = 0;
  for (int s = 0; s < static_cast<int>(starts.size()); ++s) {
    if (s > 0 && cfg.time_budget_s > 0 &&
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() > cfg.time_budget_s)
      break;
    Pose9DoF init;
    init.rotation = starts[s];
    init.translation = objective.initial_translation(init.rotation, init.scale);
    Eigen::VectorXd x = objective.encode(init);

    Adam adam(objective.dim(), {cfg.learning_rate});
    double lr = cfg.learning_rate;
    for (int step = 0; step < cfg.steps; ++step) {
      const double total = objective.total(objective.evaluate(x, &grad));
      if (!std::isfinite(total) || !grad.allFinite()) throw NonFiniteLossError(s);
      adam.step(x, grad, lr);
      lr *= decay;
    }
    const double total = objective.total(objective.evaluate(x));
    if (!std::isfinite(total)) throw NonFiniteLossError(s);
    if (total < best_total) {
      best_total = total;
      best_x = x;
      best_start = s;
    }
    ++completed;
  }

  SolveResult result;
  result.pose = objective.decode(best_x);
  result.final_losses = objective.evaluate(best_x);
  result.total_loss = objective.total(result.final_losses);
  std::vector<int> chosen;
  result.per_frame_reproj_px = objective.per_frame_pixel_error(result.pose, &chosen);
  double sum = 0;
  std::size_t count = 0;
  {
    // Item-weighted mean across frames.
    std::map<std::int64_t, std::size_t> items_per_frame;
    for (const auto& it : corr.items) ++items_per_frame[it.frame_id];
    for (const auto& [frame, err] : result.per_frame_reproj_px) {
      sum += err * static_cast<double>(items_per_frame[frame]);
      count += items_per_frame[frame];
    }
  }
  result.mean_reproj_px = count ? sum / static_cast<double>(count) : 0.0;
  std::map<int, int> votes;
  for (int j : chosen) ++votes[j];
  int top = 0;
  for (const auto& [j, v] : votes)
    if (v > top) {
      top = v;
      result.chosen_symmetry_index = j;
    }
  result.symmetry_order = objective.symmetry_order();
  result.scale_mode = scale.mode;
  result.scale_axis = scale.axis;
  result.converged = result.mean_reproj_px <= cfg.verify_tau_px;
  result.best_start = best_start;
  result.starts_completed = completed;
  return result;
}

// ---------------------------------------------------------------------------
// Verification

/// Programmatic stand-in for the human verification step: accept when the mean error is within
/// `tau_px` and no frame exceeds twice that.
inline bool verify_pose_proxy(double mean_px, const std::map<std::int64_t, double>& per_frame_px, double tau_px) {
  if (!(mean_px <= tau_px)) return false;
  return std::all_of(per_frame_px.begin(), per_frame_px.end(), [&](const auto& kv) { return kv.second <= 2 * tau_px; });
}

inline bool verify_pose_proxy(const SolveResult& result, double tau_px) {
  return verify_pose_proxy(result.mean_reproj_px, result.per_frame_reproj_px, tau_px);
}

}  // namespace cadkit
