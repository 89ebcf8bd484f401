#pragma once

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "cadkit/errors.hpp"
#include "cadkit/geometry.hpp"
#include "cadkit/mesh.hpp"

// Flat-shaded grayscale renderings of posed meshes, used to give synthetic scenes frame images.
namespace cadkit {

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  ///< row-major

  GrayImage(int w, int h, std::uint8_t fill) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}
  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

struct RenderItem {
  const TriangleMesh* mesh;
  Pose9DoF pose;
};

inline GrayImage render_silhouettes(const CameraFrame& cam, const std::vector<RenderItem>& items, std::uint8_t background = 210) {
  GrayImage img(cam.image_size.width, cam.image_size.height, background);
  std::vector<double> depth(img.pixels.size(), std::numeric_limits<double>::infinity());
  constexpr double kNear = 1e-3;
  for (const auto& item : items) {
    const auto& m = *item.mesh;
    for (const auto& tri : m.triangles) {
      std::array<Vec3, 3> c;
      bool behind = false;
      for (int k = 0; k < 3; ++k) {
        c[k] = cam.to_camera(apply_pose(item.pose, m.vertices[tri[k]]));
        behind = behind || c[k].z() < kNear;
      }
      if (behind) continue;
      const Vec3 n = (c[1] - c[0]).cross(c[2] - c[0]);
      if (n.norm() == 0) continue;
      const double facing = std::abs(n.normalized().dot(c[0].normalized()));
      const auto shade = static_cast<std::uint8_t>(40 + 170 * facing);
      std::array<Vec2, 3> p;
      for (int k = 0; k < 3; ++k)
        p[k] = {cam.intrinsics.fx * c[k].x() / c[k].z() + cam.intrinsics.cx, cam.intrinsics.fy * c[k].y() / c[k].z() + cam.intrinsics.cy};
      const double area = (p[1] - p[0]).x() * (p[2] - p[0]).y() - (p[1] - p[0]).y() * (p[2] - p[0]).x();
      if (std::abs(area) < 1e-12) continue;
      const int x0 = std::max(0, static_cast<int>(std::floor(std::min({p[0].x(), p[1].x(), p[2].x()}))));
      const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(std::max({p[0].x(), p[1].x(), p[2].x()}))));
      const int y0 = std::max(0, static_cast<int>(std::floor(std::min({p[0].y(), p[1].y(), p[2].y()}))));
      const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(std::max({p[0].y(), p[1].y(), p[2].y()}))));
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          const Vec2 q(x + 0.5, y + 0.5);
          auto edge = [&](const Vec2& a, const Vec2& b) { return (b - a).x() * (q - a).y() - (b - a).y() * (q - a).x(); };
          const double w0 = edge(p[1], p[2]) / area, w1 = edge(p[2], p[0]) / area, w2 = edge(p[0], p[1]) / area;
          if (w0 < 0 || w1 < 0 || w2 < 0) continue;
          const double z = w0 * c[0].z() + w1 * c[1].z() + w2 * c[2].z();
          auto& d = depth[static_cast<std::size_t>(y) * img.width + x];
          if (z < d) {
            d = z;
            img.at(x, y) = shade;
          }
        }
    }
  }
  return img;
}

inline void write_png(const std::string& path, const GrayImage& img) {
  FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw Error("cannot write " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw Error("png encoding failed: " + path);
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height; ++y) png_write_row(png, img.pixels.data() + static_cast<std::size_t>(y) * img.width);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

}  // namespace cadkit
