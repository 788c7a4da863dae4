#include "narrate/raster.hpp"

#include <cmath>
#include <limits>

namespace narrate {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::format: return "format";
    case ErrorCode::unsupported: return "unsupported";
    case ErrorCode::io: return "io";
    case ErrorCode::contract: return "contract";
    case ErrorCode::domain: return "domain";
    case ErrorCode::convergence: return "convergence";
    case ErrorCode::limit: return "limit";
    case ErrorCode::precondition: return "precondition";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::validation: return "validation";
  }
  return "unknown";
}

std::string_view to_string(ColorSpace cs) noexcept {
  return cs == ColorSpace::srgb8 ? "srgb8" : "linear";
}

void check_dimensions(int width, int height) {
  if (width < 0 || height < 0) fail(ErrorCode::contract, "negative image dimensions");
  if (width > kMaxDimension || height > kMaxDimension)
    fail(ErrorCode::limit, "image dimensions exceed limit",
         std::to_string(width) + "x" + std::to_string(height) + " > " +
             std::to_string(kMaxDimension));
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count_if(data().begin(), data().end(),
                                                [](std::uint8_t b) { return b != 0; }));
}

Mask operator&(const Mask& a, const Mask& b) {
  require(a.same_shape(b), "mask dimensions differ");
  Mask out(a.width(), a.height());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = (a[i] && b[i]) ? 1 : 0;
  return out;
}

Mask operator|(const Mask& a, const Mask& b) {
  require(a.same_shape(b), "mask dimensions differ");
  Mask out(a.width(), a.height());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = (a[i] || b[i]) ? 1 : 0;
  return out;
}

namespace {

// One separable pass of a square min/max filter with radius r.
Mask morph_pass(const Mask& m, int r, bool horizontal, bool erode_mode) {
  Mask out(m.width(), m.height());
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) {
      bool acc = erode_mode;
      for (int k = -r; k <= r; ++k) {
        const int sx = horizontal ? x + k : x;
        const int sy = horizontal ? y : y + k;
        const bool v = m.test_safe(sx, sy);
        if (erode_mode ? !v : v) {
          acc = !erode_mode;
          break;
        }
      }
      out.set(x, y, acc);
    }
  return out;
}

}  // namespace

Mask erode(const Mask& m, int radius) {
  require(radius >= 0, "erosion radius must be non-negative");
  if (radius == 0) return m;
  return morph_pass(morph_pass(m, radius, true, true), radius, false, true);
}

Mask dilate(const Mask& m, int radius) {
  require(radius >= 0, "dilation radius must be non-negative");
  if (radius == 0) return m;
  return morph_pass(morph_pass(m, radius, true, false), radius, false, false);
}

Mask inner_ring(const Mask& m) {
  Mask out(m.width(), m.height());
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) {
      if (!m.test(x, y)) continue;
      const bool edge = !m.test_safe(x - 1, y) || !m.test_safe(x + 1, y) ||
                        !m.test_safe(x, y - 1) || !m.test_safe(x, y + 1);
      out.set(x, y, edge);
    }
  return out;
}

Mask frame_border(int width, int height) {
  Mask out(width, height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      if (x == 0 || y == 0 || x == width - 1 || y == height - 1) out.set(x, y);
  return out;
}

void NormalMap::renormalize() {
  for (std::size_t i = 0; i < normals.size(); ++i) {
    if (!mask[i]) {
      normals[i] = {};
      continue;
    }
    const double n = norm(normals[i]);
    if (!(n > 0)) fail(ErrorCode::domain, "masked normal is zero-length");
    if (std::abs(n - 1.0) <= 4 * std::numeric_limits<double>::epsilon()) continue;
    normals[i] = normals[i] / n;
  }
}

bool NormalMap::satisfies_invariants(double tol) const {
  if (!normals.same_shape(mask)) return false;
  for (std::size_t i = 0; i < normals.size(); ++i) {
    if (mask[i]) {
      if (std::abs(norm(normals[i]) - 1.0) > tol) return false;
    } else if (!(normals[i] == Vec3{})) {
      return false;
    }
  }
  return true;
}

double srgb_eotf(double v) {
  return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
}

double srgb_oetf(double v) {
  return v <= 0.0031308 ? v * 12.92 : 1.055 * std::pow(v, 1.0 / 2.4) - 0.055;
}

RgbImage srgb_to_linear(const RgbImage& img) {
  require(img.space() == ColorSpace::srgb8, "srgb_to_linear expects an srgb8 image");
  RgbImage out(img.width(), img.height(), ColorSpace::linear);
  for (std::size_t i = 0; i < img.size(); ++i) {
    const Rgb& c = img[i];
    out[i] = {srgb_eotf(c.r), srgb_eotf(c.g), srgb_eotf(c.b)};
  }
  return out;
}

RgbImage linear_to_srgb(const RgbImage& img) {
  require(img.space() == ColorSpace::linear, "linear_to_srgb expects a linear image");
  RgbImage out(img.width(), img.height(), ColorSpace::srgb8);
  auto enc = [](double v) { return srgb_oetf(std::clamp(v, 0.0, 1.0)); };
  for (std::size_t i = 0; i < img.size(); ++i) {
    const Rgb& c = img[i];
    out[i] = {enc(c.r), enc(c.g), enc(c.b)};
  }
  return out;
}

RgbImage as_linear(const RgbImage& img) {
  return img.space() == ColorSpace::linear ? img : srgb_to_linear(img);
}

Rgb sample_bilinear(const RgbImage& img, double x, double y) {
  const double cx = std::clamp(x, 0.0, static_cast<double>(img.width() - 1));
  const double cy = std::clamp(y, 0.0, static_cast<double>(img.height() - 1));
  const int x0 = static_cast<int>(std::floor(cx));
  const int y0 = static_cast<int>(std::floor(cy));
  const int x1 = std::min(x0 + 1, img.width() - 1);
  const int y1 = std::min(y0 + 1, img.height() - 1);
  const double fx = cx - x0, fy = cy - y0;
  const Rgb top = img(x0, y0) * (1 - fx) + img(x1, y0) * fx;
  const Rgb bottom = img(x0, y1) * (1 - fx) + img(x1, y1) * fx;
  return top * (1 - fy) + bottom * fy;
}

Rgb sample_nearest(const RgbImage& img, double x, double y) {
  const int ix = std::clamp(static_cast<int>(std::lround(x)), 0, img.width() - 1);
  const int iy = std::clamp(static_cast<int>(std::lround(y)), 0, img.height() - 1);
  return img(ix, iy);
}

RgbImage pull_push_fill(const RgbImage& img, const Mask& known) {
  require(img.same_shape(known), "pull_push_fill: mask dimensions differ");
  struct Level {
    int w, h;
    std::vector<Rgb> value;
    std::vector<double> weight;
  };
  std::vector<Level> levels;
  {
    Level base{img.width(), img.height(), {}, {}};
    base.value.resize(img.size());
    base.weight.resize(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) {
      base.weight[i] = known[i] ? 1.0 : 0.0;
      base.value[i] = known[i] ? img[i] : Rgb{};
    }
    levels.push_back(std::move(base));
  }
  // Pull: weighted 2x2 averages until a single pixel remains.
  while (levels.back().w > 1 || levels.back().h > 1) {
    const Level& f = levels.back();
    Level c{(f.w + 1) / 2, (f.h + 1) / 2, {}, {}};
    c.value.assign(static_cast<std::size_t>(c.w) * c.h, Rgb{});
    c.weight.assign(static_cast<std::size_t>(c.w) * c.h, 0.0);
    for (int y = 0; y < c.h; ++y)
      for (int x = 0; x < c.w; ++x) {
        Rgb sum{};
        double wsum = 0;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const int fx = 2 * x + dx, fy = 2 * y + dy;
            if (fx >= f.w || fy >= f.h) continue;
            const std::size_t fi = static_cast<std::size_t>(fy) * f.w + fx;
            sum += f.value[fi] * f.weight[fi];
            wsum += f.weight[fi];
          }
        const std::size_t ci = static_cast<std::size_t>(y) * c.w + x;
        if (wsum > 0) c.value[ci] = sum * (1.0 / wsum);
        c.weight[ci] = std::min(1.0, wsum);
      }
    levels.push_back(std::move(c));
  }
  // Push: blend each level with its parent where its own weight is short of 1.
  for (std::size_t l = levels.size() - 1; l-- > 0;) {
    Level& f = levels[l];
    const Level& c = levels[l + 1];
    for (int y = 0; y < f.h; ++y)
      for (int x = 0; x < f.w; ++x) {
        const std::size_t fi = static_cast<std::size_t>(y) * f.w + x;
        const std::size_t ci = static_cast<std::size_t>(y / 2) * c.w + x / 2;
        const double w = f.weight[fi];
        f.value[fi] = f.value[fi] * w + c.value[ci] * (1 - w);
        f.weight[fi] = 1.0;
      }
  }
  RgbImage out(img.width(), img.height(), img.space());
  for (std::size_t i = 0; i < img.size(); ++i) out[i] = known[i] ? img[i] : levels[0].value[i];
  return out;
}

}  // namespace narrate
