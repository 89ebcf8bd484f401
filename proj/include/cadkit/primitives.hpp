#pragma once

#include <string>
#include <vector>

#include "cadkit/mesh.hpp"

// Procedural meshes used by the synthetic harness and the tests. All are centered on the
// origin with +y up.
namespace cadkit::primitives {

namespace detail {

/// Appends a prism over a convex footprint polygon given counter-clockwise in (x, z) seen from +y.
inline void append_convex_prism(TriangleMesh& mesh, const std::vector<Eigen::Vector2d>& footprint, double y0,
                                double y1) {
  const auto base = static_cast<std::uint32_t>(mesh.vertices.size());
  const auto n = static_cast<std::uint32_t>(footprint.size());
  for (const auto& p : footprint) mesh.vertices.emplace_back(p.x(), y0, p.y());
  for (const auto& p : footprint) mesh.vertices.emplace_back(p.x(), y1, p.y());
  for (std::uint32_t k = 1; k + 1 < n; ++k) {
    mesh.triangles.push_back({base, base + k + 1, base + k});
    mesh.triangles.push_back({base + n, base + n + k, base + n + k + 1});
  }
  for (std::uint32_t k = 0; k < n; ++k) {
    const std::uint32_t a = base + k, b = base + (k + 1) % n;
    mesh.triangles.push_back({a, b, b + n});
    mesh.triangles.push_back({a, b + n, a + n});
  }
}

inline std::vector<Eigen::Vector2d> rectangle(double x0, double z0, double x1, double z1) {
  return {{x0, z1}, {x1, z1}, {x1, z0}, {x0, z0}};
}

}  // namespace detail

/// Axis-aligned box with extents (sx, sy, sz).
inline TriangleMesh box(const Vec3& size, std::string model_id = "box", std::string category = "table") {
  TriangleMesh m;
  m.model_id = std::move(model_id);
  m.category = std::move(category);
  detail::append_convex_prism(m, detail::rectangle(-size.x() / 2, -size.z() / 2, size.x() / 2, size.z() / 2),
                              -size.y() / 2, size.y() / 2);
  return m;
}

/// Regular n-gon prism; with large n it stands in for a cylinder.
inline TriangleMesh regular_prism(int sides, double radius, double height, std::string model_id = "prism",
                                  std::string category = "table") {
  TriangleMesh m;
  m.model_id = std::move(model_id);
  m.category = std::move(category);
  std::vector<Eigen::Vector2d> fp;
  for (int k = 0; k < sides; ++k) {
    const double a = -2.0 * kPi * k / sides;
    fp.emplace_back(radius * std::cos(a), radius * std::sin(a));
  }
  detail::append_convex_prism(m, fp, -height / 2, height / 2);
  return m;
}

/// L-shaped extrusion: a `width × depth` slab with a notch cut from one corner. No rotational symmetry.
inline TriangleMesh l_extrusion(double width, double depth, double height, std::string model_id = "l_shape",
                                std::string category = "sofa") {
  TriangleMesh m;
  m.model_id = std::move(model_id);
  m.category = std::move(category);
  const double x0 = -width / 2, z0 = -depth / 2, x1 = width / 2, z1 = depth / 2;
  const double xm = x0 + 0.4 * width, zm = z0 + 0.45 * depth;
  detail::append_convex_prism(m, detail::rectangle(x0, z0, x1, zm), -height / 2, height / 2);
  detail::append_convex_prism(m, detail::rectangle(x0, zm, xm, z1), -height / 2, height / 2);
  return m;
}

/// Seat, backrest and four legs. Mirror-symmetric but with no rotational symmetry about +y.
inline TriangleMesh chair(double width, double depth, double height, std::string model_id = "chair",
                          std::string category = "chair") {
  TriangleMesh m;
  m.model_id = std::move(model_id);
  m.category = std::move(category);
  const double seat_y = -height / 2 + 0.45 * height, seat_t = 0.06 * height, leg = 0.08 * width;
  const double x0 = -width / 2, x1 = width / 2, z0 = -depth / 2, z1 = depth / 2;
  detail::append_convex_prism(m, detail::rectangle(x0, z0, x1, z1), seat_y, seat_y + seat_t);
  detail::append_convex_prism(m, detail::rectangle(x0, z0, x1, z0 + 0.1 * depth), seat_y + seat_t, height / 2);
  for (double lx : {x0, x1 - leg})
    for (double lz : {z0, z1 - leg})
      detail::append_convex_prism(m, detail::rectangle(lx, lz, lx + leg, lz + leg), -height / 2, seat_y);
  return m;
}

}  // namespace cadkit::primitives
