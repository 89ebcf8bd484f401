#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cadkit/errors.hpp"
#include "cadkit/geometry.hpp"

namespace cadkit {

/// CAD model in its canonical frame.
struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;
  Vec3 up_axis = Vec3::UnitY();
  std::string model_id;
  std::string category;

  Vec3 bbox_min() const {
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    for (const auto& v : vertices) lo = lo.cwiseMin(v);
    return lo;
  }
  Vec3 bbox_max() const {
    Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());
    for (const auto& v : vertices) hi = hi.cwiseMax(v);
    return hi;
  }
  double bbox_diagonal() const { return (bbox_max() - bbox_min()).norm(); }

  double triangle_area(std::size_t t) const {
    const auto& tri = triangles[t];
    return 0.5 * (vertices[tri[1]] - vertices[tri[0]]).cross(vertices[tri[2]] - vertices[tri[0]]).norm();
  }

  double surface_area() const {
    double a = 0;
    for (std::size_t t = 0; t < triangles.size(); ++t) a += triangle_area(t);
    return a;
  }

  /// Area-weighted centroid of the surface.
  Vec3 surface_centroid() const {
    Vec3 c = Vec3::Zero();
    double total = 0;
    for (std::size_t t = 0; t < triangles.size(); ++t) {
      const double a = triangle_area(t);
      const auto& tri = triangles[t];
      c += a * (vertices[tri[0]] + vertices[tri[1]] + vertices[tri[2]]) / 3.0;
      total += a;
    }
    return total > 0 ? Vec3(c / total) : Vec3::Zero();
  }
};

/// Canonical axis (0=x, 1=y, 2=z) closest to `axis`.
inline int dominant_axis(const Vec3& axis) {
  Eigen::Index i = 0;
  axis.cwiseAbs().maxCoeff(&i);
  return static_cast<int>(i);
}

// ---------------------------------------------------------------------------
// Wavefront OBJ

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    const std::size_t start = i;
    while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

inline double parse_double(std::string_view tok, std::size_t line) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    throw ParseError("invalid number '" + std::string(tok) + "'", line);
  return v;
}

}  // namespace detail

/// Parses the `v` and `f` records of an OBJ document; polygons are fan-triangulated,
/// negative indices count back from the last vertex, all other records are ignored.
inline TriangleMesh load_mesh(std::string_view text) {
  TriangleMesh mesh;
  std::vector<std::vector<long>> faces;
  std::vector<std::size_t> face_lines;

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view line = detail::trim(text.substr(pos, end - pos));
    ++line_no;
    pos = end + 1;

    if (line.empty() || line.front() == '#') {
      if (end == text.size()) break;
      continue;
    }
    const auto tok = detail::split_ws(line);
    if (tok[0] == "v") {
      if (tok.size() < 4) throw ParseError("vertex needs 3 coordinates", line_no);
      mesh.vertices.emplace_back(detail::parse_double(tok[1], line_no), detail::parse_double(tok[2], line_no),
                                 detail::parse_double(tok[3], line_no));
    } else if (tok[0] == "f") {
      if (tok.size() < 4) throw ParseError("face needs at least 3 vertices", line_no);
      std::vector<long> idx;
      for (std::size_t i = 1; i < tok.size(); ++i) {
        const auto ref = tok[i].substr(0, tok[i].find('/'));
        long v = 0;
        auto [ptr, ec] = std::from_chars(ref.data(), ref.data() + ref.size(), v);
        if (ec != std::errc() || ptr != ref.data() + ref.size() || v == 0)
          throw ParseError("invalid face index '" + std::string(tok[i]) + "'", line_no);
        if (v < 0) v = static_cast<long>(mesh.vertices.size()) + v + 1;
        idx.push_back(v);
      }
      faces.push_back(std::move(idx));
      face_lines.push_back(line_no);
    }
    if (end == text.size()) break;
  }

  const long n = static_cast<long>(mesh.vertices.size());
  for (std::size_t f = 0; f < faces.size(); ++f) {
    for (long v : faces[f])
      if (v < 1 || v > n)
        throw ParseError("face index " + std::to_string(v) + " out of range (" + std::to_string(n) + " vertices)",
                         face_lines[f]);
    for (std::size_t k = 1; k + 1 < faces[f].size(); ++k)
      mesh.triangles.push_back({static_cast<std::uint32_t>(faces[f][0] - 1), static_cast<std::uint32_t>(faces[f][k] - 1),
                                static_cast<std::uint32_t>(faces[f][k + 1] - 1)});
  }
  if (mesh.triangles.empty()) throw ParseError("mesh has no faces");
  return mesh;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline TriangleMesh load_mesh_file(const std::string& path) { return load_mesh(read_file(path)); }

inline std::string to_obj(const TriangleMesh& mesh) {
  std::ostringstream out;
  out.precision(17);
  for (const auto& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& t : mesh.triangles) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  return out.str();
}

/// Mirror across the model's x = 0 plane.
inline Vec3 flip_point(const Vec3& p) { return {-p.x(), p.y(), p.z()}; }

// ---------------------------------------------------------------------------
// Sampling

/// `n` points distributed uniformly by area over the surface. Deterministic for a given seed.
inline std::vector<Vec3> sample_surface(const TriangleMesh& mesh, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("sample_surface needs n >= 1");
  std::vector<double> cumulative(mesh.triangles.size());
  double total = 0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    total += mesh.triangle_area(t);
    cumulative[t] = total;
  }
  if (!(total > 0)) throw DegenerateError("mesh has zero surface area");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<Vec3> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double pick = uni(rng) * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pick);
    const std::size_t t = std::min<std::size_t>(it - cumulative.begin(), cumulative.size() - 1);
    const double r1 = std::sqrt(uni(rng));
    const double r2 = uni(rng);
    const auto& tri = mesh.triangles[t];
    out.push_back((1 - r1) * mesh.vertices[tri[0]] + r1 * (1 - r2) * mesh.vertices[tri[1]] +
                  r1 * r2 * mesh.vertices[tri[2]]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Nearest-neighbour index

/// Uniform grid over a point set, for exact nearest-neighbour queries.
class GridIndex {
public:
  explicit GridIndex(std::span<const Vec3> points) : points_(points.begin(), points.end()) {
    if (points_.empty()) throw std::invalid_argument("GridIndex needs points");
    lo_ = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo_;
    for (const auto& p : points_) {
      lo_ = lo_.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    const Vec3 extent = (hi - lo_).cwiseMax(1e-9 * std::max(1.0, (hi - lo_).norm()));
    // Roughly one point per occupied cell for surface samples.
    const double area_proxy = extent.x() * extent.y() + extent.y() * extent.z() + extent.x() * extent.z();
    cell_ = std::max(std::sqrt(2.0 * area_proxy / static_cast<double>(points_.size())), 1e-12);
    for (int a = 0; a < 3; ++a)
      dims_[a] = std::clamp(static_cast<int>(std::ceil(extent(a) / cell_)), 1, 1024);
    cell_ = std::max({extent.x() / dims_[0], extent.y() / dims_[1], extent.z() / dims_[2], cell_});

    std::vector<std::size_t> counts(cell_count() + 1, 0);
    std::vector<std::size_t> cell_of(points_.size());
    for (std::size_t i = 0; i < points_.size(); ++i) {
      cell_of[i] = flat(cell_coords(points_[i]));
      ++counts[cell_of[i] + 1];
    }
    for (std::size_t c = 1; c < counts.size(); ++c) counts[c] += counts[c - 1];
    start_ = counts;
    order_.resize(points_.size());
    for (std::size_t i = 0; i < points_.size(); ++i) order_[counts[cell_of[i]]++] = static_cast<std::uint32_t>(i);
  }

  /// Distance to the nearest indexed point, or `max_radius` if nothing is closer.
  double nearest_distance(const Vec3& q,
                          double max_radius = std::numeric_limits<double>::infinity()) const {
    const auto c = cell_coords(q);
    double best2 = max_radius * max_radius;
    double outside = 0;
    for (int a = 0; a < 3; ++a) {
      const double lo = lo_(a), hi = lo_(a) + dims_[a] * cell_;
      outside = std::max({outside, lo - q(a), q(a) - hi});
    }
    if (outside >= max_radius) return max_radius;
    int max_ring = std::max({dims_[0], dims_[1], dims_[2]});
    if (std::isfinite(max_radius)) max_ring = std::min(max_ring, static_cast<int>(std::ceil(max_radius / cell_)) + 1);
    for (int r = 0; r <= max_ring; ++r) {
      for (int x = std::max(0, c[0] - r); x <= std::min(dims_[0] - 1, c[0] + r); ++x)
        for (int y = std::max(0, c[1] - r); y <= std::min(dims_[1] - 1, c[1] + r); ++y)
          for (int z = std::max(0, c[2] - r); z <= std::min(dims_[2] - 1, c[2] + r); ++z) {
            if (std::max({std::abs(x - c[0]), std::abs(y - c[1]), std::abs(z - c[2])}) != r) continue;
            const std::size_t f = flat({x, y, z});
            for (std::size_t k = start_[f]; k < start_[f + 1]; ++k)
              best2 = std::min(best2, (points_[order_[k]] - q).squaredNorm());
          }
      const double bound = r * cell_;
      if (best2 <= bound * bound) break;
    }
    return std::sqrt(best2);
  }

private:
  std::array<int, 3> cell_coords(const Vec3& p) const {
    std::array<int, 3> c{};
    for (int a = 0; a < 3; ++a)
      c[a] = std::clamp(static_cast<int>(std::floor((p(a) - lo_(a)) / cell_)), 0, dims_[a] - 1);
    return c;
  }
  std::size_t flat(const std::array<int, 3>& c) const {
    return (static_cast<std::size_t>(c[0]) * dims_[1] + c[1]) * dims_[2] + c[2];
  }
  std::size_t cell_count() const { return static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2]; }

  std::vector<Vec3> points_;
  Vec3 lo_;
  double cell_ = 1.0;
  std::array<int, 3> dims_{1, 1, 1};
  std::vector<std::size_t> start_;
  std::vector<std::uint32_t> order_;
};

/// Mean nearest-neighbour distance from `a` to `b`, averaged with the reverse direction.
/// Individual distances are truncated at `cap`.
inline double symmetric_chamfer(std::span<const Vec3> a, const GridIndex& a_index, std::span<const Vec3> b,
                                const GridIndex& b_index,
                                double cap = std::numeric_limits<double>::infinity()) {
  double ab = 0, ba = 0;
  for (const auto& p : a) ab += b_index.nearest_distance(p, cap);
  for (const auto& p : b) ba += a_index.nearest_distance(p, cap);
  return 0.5 * (ab / static_cast<double>(a.size()) + ba / static_cast<double>(b.size()));
}

// ---------------------------------------------------------------------------
// Rotational symmetry about the up axis

struct SymmetryClass {
  int order = 1;  ///< 1, 2, 4 or 36
  Vec3 axis = Vec3::UnitY();
};

inline constexpr std::array<int, 3> kSymmetryOrders{36, 4, 2};

struct SymmetryOptions {
  std::size_t samples = 20000;
  double tolerance = 5e-4;  ///< excess Chamfer allowed, as a fraction of the bounding-box diagonal
  std::uint64_t seed = 0x5eed5eedULL;
};

/// Symmetry element `j` of a class: rotation by 2πj/order about the up axis.
inline Mat3 symmetry_rotation(const SymmetryClass& sym, int j) {
  return rotation_about(sym.axis, 2.0 * kPi * j / sym.order);
}

/// Excess symmetric-Chamfer distance of a sample rotated by 2π/k about the up axis (through the
/// surface centroid), measured against an independent second sample and relative to the same
/// comparison without rotation. The subtraction removes the sampling floor, which otherwise
/// dominates the signal of near-symmetric shapes such as thin square slabs.
inline std::array<double, kSymmetryOrders.size()> symmetry_excess(const TriangleMesh& mesh,
                                                                  const SymmetryOptions& opt = {}) {
  const Vec3 axis = mesh.up_axis.normalized();
  const auto reference = sample_surface(mesh, opt.samples, opt.seed);
  const auto probe = sample_surface(mesh, opt.samples, opt.seed ^ 0x9e3779b97f4a7c15ULL);
  const GridIndex reference_index(reference);
  const GridIndex probe_index(probe);
  const Vec3 center = mesh.surface_centroid();
  const double diagonal = mesh.bbox_diagonal();

  const double floor = symmetric_chamfer(probe, probe_index, reference, reference_index);
  const double cap = 8.0 * (floor + opt.tolerance * diagonal);

  std::array<double, kSymmetryOrders.size()> excess{};
  std::vector<Vec3> rotated(probe.size());
  for (std::size_t i = 0; i < kSymmetryOrders.size(); ++i) {
    const Mat3 r = rotation_about(axis, 2.0 * kPi / kSymmetryOrders[i]);
    for (std::size_t p = 0; p < probe.size(); ++p) rotated[p] = center + r * (probe[p] - center);
    const GridIndex rotated_index(rotated);
    excess[i] = (symmetric_chamfer(rotated, rotated_index, reference, reference_index, cap) - floor) / diagonal;
  }
  return excess;
}

/// Largest order k in {36, 4, 2} whose rotation maps the surface onto itself within
/// `opt.tolerance` (see symmetry_excess); 1 when none does. Orders are tried in descending
/// order so a round object is never reported as 4-way.
inline SymmetryClass detect_symmetry(const TriangleMesh& mesh, const SymmetryOptions& opt = {}) {
  SymmetryClass result;
  result.axis = mesh.up_axis.normalized();
  const auto excess = symmetry_excess(mesh, opt);
  for (std::size_t i = 0; i < kSymmetryOrders.size(); ++i) {
    if (excess[i] <= opt.tolerance) {
      result.order = kSymmetryOrders[i];
      break;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Truncation

/// Fraction of `n` surface samples that land outside the image or behind the camera.
inline double truncation_fraction(const TriangleMesh& mesh, const Pose9DoF& pose, const CameraFrame& cam,
                                  std::size_t n = 2000, std::uint64_t seed = 1) {
  if (n < 100) throw std::invalid_argument("truncation_fraction needs n >= 100");
  const auto samples = sample_surface(mesh, n, seed);
  std::size_t outside = 0;
  for (const auto& p : samples) {
    const auto px = project_point(cam, apply_pose(pose, p));
    if (!px || !inside_image(cam, *px)) ++outside;
  }
  return static_cast<double>(outside) / static_cast<double>(n);
}

}  // namespace cadkit
