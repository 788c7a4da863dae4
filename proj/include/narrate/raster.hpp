#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "narrate/error.hpp"
#include "narrate/geometry.hpp"

namespace narrate {

/// Largest width or height accepted anywhere in the toolkit.
inline constexpr int kMaxDimension = 8192;

void check_dimensions(int width, int height);

/// Row-major 2D array. Pixel (x, y) has x along columns, y along rows (downwards).
template <class T>
class Grid {
 public:
  Grid() = default;
  Grid(int width, int height, const T& fill = T{}) : width_(width), height_(height) {
    check_dimensions(width, height);
    data_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  bool contains(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }
  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  T& operator()(int x, int y) { return data_[index(x, y)]; }
  const T& operator()(int x, int y) const { return data_[index(x, y)]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }

  template <class U>
  bool same_shape(const Grid<U>& other) const noexcept {
    return width_ == other.width() && height_ == other.height();
  }

  bool operator==(const Grid&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

class Mask : public Grid<std::uint8_t> {
 public:
  using Grid::Grid;
  Mask(int width, int height, bool fill) : Grid(width, height, fill ? 1 : 0) {}

  bool test(int x, int y) const { return (*this)(x, y) != 0; }
  bool test_safe(int x, int y) const { return contains(x, y) && test(x, y); }
  void set(int x, int y, bool v = true) { (*this)(x, y) = v ? 1 : 0; }
  std::size_t count() const;
};

Mask operator&(const Mask& a, const Mask& b);
Mask operator|(const Mask& a, const Mask& b);

/// Square (Chebyshev) structuring element of the given radius; pixels outside
/// the frame count as unset.
Mask erode(const Mask& m, int radius);
Mask dilate(const Mask& m, int radius);
/// Set pixels with at least one 4-neighbour that is unset or outside the frame.
Mask inner_ring(const Mask& m);
/// Set pixels on the outermost row/column of the frame.
Mask frame_border(int width, int height);

struct Rgb {
  double r = 0, g = 0, b = 0;

  constexpr Rgb operator+(const Rgb& o) const { return {r + o.r, g + o.g, b + o.b}; }
  constexpr Rgb operator-(const Rgb& o) const { return {r - o.r, g - o.g, b - o.b}; }
  constexpr Rgb operator*(double s) const { return {r * s, g * s, b * s}; }
  constexpr Rgb operator*(const Rgb& o) const { return {r * o.r, g * o.g, b * o.b}; }
  constexpr Rgb& operator+=(const Rgb& o) {
    r += o.r;
    g += o.g;
    b += o.b;
    return *this;
  }
  constexpr double& operator[](int c) { return c == 0 ? r : (c == 1 ? g : b); }
  constexpr double operator[](int c) const { return c == 0 ? r : (c == 1 ? g : b); }
  constexpr bool operator==(const Rgb&) const = default;
};

/// Rec.709 luma.
constexpr double luminance(const Rgb& c) { return 0.2126 * c.r + 0.7152 * c.g + 0.0722 * c.b; }

enum class ColorSpace { srgb8, linear };

std::string_view to_string(ColorSpace cs) noexcept;

class RgbImage : public Grid<Rgb> {
 public:
  RgbImage() = default;
  RgbImage(int width, int height, ColorSpace space, Rgb fill = {})
      : Grid(width, height, fill), space_(space) {}

  ColorSpace space() const noexcept { return space_; }
  bool operator==(const RgbImage&) const = default;

 private:
  ColorSpace space_ = ColorSpace::linear;
};

/// Camera-space unit normals (+x right, +y up, +z toward the camera).
/// Unmasked pixels hold (0, 0, 0).
struct NormalMap {
  Grid<Vec3> normals;
  Mask mask;

  NormalMap() = default;
  NormalMap(int width, int height) : normals(width, height), mask(width, height) {}

  int width() const noexcept { return normals.width(); }
  int height() const noexcept { return normals.height(); }
  bool valid(int x, int y) const { return mask.test(x, y); }
  Vec3 at(int x, int y) const { return normals(x, y); }
  void set(int x, int y, const Vec3& n) {
    normals(x, y) = n;
    mask.set(x, y, true);
  }
  void clear(int x, int y) {
    normals(x, y) = {};
    mask.set(x, y, false);
  }

  /// Renormalizes masked pixels; idempotent. Throws domain error if a masked
  /// pixel is the zero vector.
  void renormalize();
  /// Whether every masked normal is unit length to `tol` and every unmasked
  /// pixel carries the zero sentinel.
  bool satisfies_invariants(double tol = 1e-4) const;
};

/// Height (depth toward the camera) in pixel units.
struct HeightField {
  Grid<double> z;
  Mask mask;

  HeightField() = default;
  HeightField(int width, int height) : z(width, height), mask(width, height) {}

  int width() const noexcept { return z.width(); }
  int height() const noexcept { return z.height(); }
};

/// Standard sRGB transfer functions on a single channel.
double srgb_eotf(double v);
double srgb_oetf(double v);

/// Contract error if the image is not tagged srgb8.
RgbImage srgb_to_linear(const RgbImage& img);
/// Contract error if the image is not tagged linear. Values are clamped to [0, 1].
RgbImage linear_to_srgb(const RgbImage& img);
/// Returns the image in linear space, converting if needed.
RgbImage as_linear(const RgbImage& img);

/// Bilinear sample at continuous pixel-centre coordinates; out-of-range
/// coordinates clamp to the frame.
Rgb sample_bilinear(const RgbImage& img, double x, double y);
Rgb sample_nearest(const RgbImage& img, double x, double y);

/// Fills pixels not set in `known` by hierarchical pull-push interpolation.
/// Known pixels are returned unchanged.
RgbImage pull_push_fill(const RgbImage& img, const Mask& known);

}  // namespace narrate
