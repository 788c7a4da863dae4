#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "narrate/mesh.hpp"
#include "narrate/raster.hpp"

namespace fixtures {

using namespace narrate;

#ifndef NARRATE_TEST_DATA
#define NARRATE_TEST_DATA "tests/data"
#endif

inline std::filesystem::path data_path(const std::string& name) {
  return std::filesystem::path(NARRATE_TEST_DATA) / name;
}

/// Hemisphere of radius r pixels centred in a w x h frame; normals are unit,
/// heights z = sqrt(r^2 - d^2). Pixels with d < r are masked.
struct Sphere {
  NormalMap normals;
  HeightField height;
  double radius = 0;
  double cx = 0, cy = 0;
};

inline Sphere sphere(int w, int h, double r) {
  Sphere s{NormalMap(w, h), HeightField(w, h), r, 0.5 * (w - 1), 0.5 * (h - 1)};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double dx = x - s.cx, dy = s.cy - y;
      const double d2 = dx * dx + dy * dy;
      if (d2 >= r * r) continue;
      const double z = std::sqrt(r * r - d2);
      s.normals.set(x, y, Vec3{dx, dy, z} * (1.0 / r));
      s.height.z(x, y) = z;
      s.height.mask.set(x, y);
    }
  return s;
}

/// Ellipsoid cap over an axis-aligned elliptic mask: semi-axes (a, b) in
/// pixels and depth c.
inline Sphere ellipsoid(int w, int h, double cx, double cy, double a, double b, double c) {
  Sphere s{NormalMap(w, h), HeightField(w, h), c, cx, cy};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double u = (x - cx) / a, v = (cy - y) / b;
      const double q = 1 - u * u - v * v;
      if (q <= 0) continue;
      const double z = c * std::sqrt(q);
      // Gradient of the implicit (x/a)^2 + (y/b)^2 + (z/c)^2 = 1.
      const Vec3 n = normalized(Vec3{u / a, v / b, z / (c * c)});
      s.normals.set(x, y, n);
      s.height.z(x, y) = z;
      s.height.mask.set(x, y);
    }
  return s;
}

inline Mask disk(int w, int h, double cx, double cy, double r) {
  Mask m(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if ((x - cx) * (x - cx) + (y - cy) * (y - cy) < r * r) m.set(x, y);
  return m;
}

inline RgbImage random_image(int w, int h, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0,
                             ColorSpace space = ColorSpace::linear) {
  std::uniform_real_distribution<double> u(lo, hi);
  RgbImage img(w, h, space);
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = {u(rng), u(rng), u(rng)};
  return img;
}

/// Values on the 8-bit grid, so PNG round trips are exact.
inline RgbImage random_srgb8(int w, int h, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> u(0, 255);
  RgbImage img(w, h, ColorSpace::srgb8);
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = {u(rng) / 255.0, u(rng) / 255.0, u(rng) / 255.0};
  return img;
}

inline Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  for (;;) {
    const Vec3 v{g(rng), g(rng), g(rng)};
    if (norm(v) > 1e-6) return normalized(v);
  }
}

/// Smooth colourful texture, sRGB tagged, on the 8-bit grid.
inline RgbImage test_pattern(int w, int h) {
  RgbImage img(w, h, ColorSpace::srgb8);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double r = 0.5 + 0.4 * std::sin(x * 0.11) * std::cos(y * 0.07);
      const double g = 0.5 + 0.4 * std::cos(x * 0.05 + y * 0.09);
      const double b = 0.5 + 0.4 * std::sin((x - y) * 0.06);
      img(x, y) = {std::round(r * 255) / 255, std::round(g * 255) / 255, std::round(b * 255) / 255};
    }
  return img;
}

/// Scratch directory removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() / ("narrate-" + tag + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

}  // namespace fixtures
