#include "narrate/stylize.hpp"

#include <array>
#include <cmath>

namespace narrate {

ShadingMap shading_map(const RgbImage& original, const RgbImage& relit, double eps) {
  require(original.space() == ColorSpace::linear && relit.space() == ColorSpace::linear,
          "shading maps are computed from linear images");
  require(original.same_shape(relit), "original and relit images differ in size");
  require(eps > 0, "shading floor must be positive");
  ShadingMap s{RgbImage(original.width(), original.height(), ColorSpace::linear),
               Mask(original.width(), original.height())};
  for (std::size_t i = 0; i < original.size(); ++i) {
    const Rgb& o = original[i];
    if (o.r < eps || o.g < eps || o.b < eps) continue;
    const Rgb& l = relit[i];
    s.ratio[i] = {l.r / o.r, l.g / o.g, l.b / o.b};
    s.valid[i] = 1;
  }
  return s;
}

RgbImage apply_shading(const ShadingMap& s, const RgbImage& styled) {
  require(styled.space() == ColorSpace::linear, "styled image must be linear");
  require(s.ratio.same_shape(styled) && s.valid.same_shape(styled),
          "shading map and styled image differ in size");
  RgbImage out = styled;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (s.valid[i]) out[i] = styled[i] * s.ratio[i];
  return out;
}

Bytes encode_shading_pfm(const ShadingMap& s) {
  RgbImage img = s.ratio;
  for (std::size_t i = 0; i < img.size(); ++i)
    if (!s.valid[i]) img[i] = {-1, -1, -1};
  return encode_pfm(img);
}

ShadingMap decode_shading_pfm(std::span<const std::uint8_t> bytes) {
  PfmImage pfm = decode_pfm(bytes);
  if (!std::holds_alternative<RgbImage>(pfm))
    fail(ErrorCode::format, "shading map must be a 3-channel PFM");
  ShadingMap s{std::move(std::get<RgbImage>(pfm)), {}};
  s.valid = Mask(s.width(), s.height());
  for (std::size_t i = 0; i < s.ratio.size(); ++i) {
    const Rgb& c = s.ratio[i];
    if (c.r < 0 || c.g < 0 || c.b < 0)
      s.ratio[i] = {};
    else
      s.valid[i] = 1;
  }
  return s;
}

void write_shading_pfm(const ShadingMap& s, const std::filesystem::path& path) {
  write_file(path, encode_shading_pfm(s));
}

ShadingMap read_shading_pfm(const std::filesystem::path& path) {
  return decode_shading_pfm(read_file(path));
}

Grid<double> smooth_masked(const Grid<double>& values, const Mask& mask, double sigma) {
  require(values.same_shape(mask), "values and mask differ in size");
  require(sigma >= 0, "smoothing sigma must be non-negative");
  const int w = values.width(), h = values.height();
  Grid<double> out(w, h);
  if (sigma == 0) {
    for (std::size_t i = 0; i < out.size(); ++i)
      if (mask[i]) out[i] = values[i];
    return out;
  }
  const int r = static_cast<int>(std::ceil(3 * sigma));
  // kernels g(i) i^a for a = 0, 1, 2
  std::vector<double> k[3];
  for (auto& v : k) v.resize(2 * r + 1);
  for (int i = -r; i <= r; ++i) {
    const double g = std::exp(-0.5 * i * i / (sigma * sigma));
    k[0][i + r] = g;
    k[1][i + r] = g * i;
    k[2][i + r] = g * i * i;
  }
  auto pass = [&](const Grid<double>& g, const std::vector<double>& ker, bool horizontal) {
    Grid<double> res(w, h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0;
        for (int i = -r; i <= r; ++i) {
          const int sx = horizontal ? x + i : x, sy = horizontal ? y : y + i;
          if (g.contains(sx, sy)) acc += ker[i + r] * g(sx, sy);
        }
        res(x, y) = acc;
      }
    return res;
  };
  Grid<double> m(w, h), mz(w, h);
  for (std::size_t i = 0; i < values.size(); ++i)
    if (mask[i]) {
      m[i] = 1;
      mz[i] = values[i];
    }
  Grid<double> mh[3], zh[2];
  for (int a = 0; a < 3; ++a) mh[a] = pass(m, k[a], true);
  for (int a = 0; a < 2; ++a) zh[a] = pass(mz, k[a], true);
  const Grid<double> m00 = pass(mh[0], k[0], false), m10 = pass(mh[1], k[0], false),
                     m01 = pass(mh[0], k[1], false), m20 = pass(mh[2], k[0], false),
                     m11 = pass(mh[1], k[1], false), m02 = pass(mh[0], k[2], false),
                     z00 = pass(zh[0], k[0], false), z10 = pass(zh[1], k[0], false),
                     z01 = pass(zh[0], k[1], false);

  // Weighted least-squares plane c + a dx + b dy around each pixel; c is the
  // smoothed value. Falls back to the weighted mean on degenerate supports.
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!mask[i]) continue;
    const double s0 = m00[i], sx = m10[i], sy = m01[i], sxx = m20[i], sxy = m11[i], syy = m02[i];
    const double c00 = sxx * syy - sxy * sxy, c01 = sy * sxy - sx * syy, c02 = sx * sxy - sy * sxx;
    const double det = s0 * c00 + sx * c01 + sy * c02;
    if (det > 1e-9 * s0 * s0 * s0)
      out[i] = (c00 * z00[i] + c01 * z10[i] + c02 * z01[i]) / det;
    else
      out[i] = z00[i] / s0;
  }
  return out;
}

namespace {

struct Eigen2 {
  double k1, k2;
  Vec2 e1;
};

Vec2 unit2(Vec2 v) {
  const double n = std::hypot(v.x, v.y);
  return {v.x / n, v.y / n};
}

// Symmetric [[a, b], [b, c]].
Eigen2 eigen_sym2(double a, double b, double c) {
  const double m = 0.5 * (a + c);
  const double d = std::hypot(0.5 * (a - c), b);
  const double hi = m + d, lo = m - d;
  const double k1 = std::abs(hi) >= std::abs(lo) ? hi : lo;
  const double k2 = k1 == hi ? lo : hi;
  if (d < kUmbilicTolerance * 0.5 || std::abs(k1 - k2) < kUmbilicTolerance) return {k1, k2, {1, 0}};
  // Two candidate eigenvectors for k1; keep the better conditioned one.
  const Vec2 u{k1 - c, b}, v{b, k1 - a};
  Vec2 e = std::hypot(u.x, u.y) >= std::hypot(v.x, v.y) ? unit2(u) : unit2(v);
  if (e.x < 0 || (e.x == 0 && e.y < 0)) e = {-e.x, -e.y};
  return {k1, k2, e};
}

}  // namespace

PrincipalField principal_directions(const HeightField& height, double sigma) {
  require(height.z.same_shape(height.mask), "height field and mask differ in size");
  if (height.mask.count() == 0) fail(ErrorCode::domain, "height field mask is empty");
  const int w = height.width(), h = height.height();
  const Grid<double> z = smooth_masked(height.z, height.mask, sigma);
  PrincipalField f{Grid<Vec2>(w, h), Grid<Vec2>(w, h), Grid<double>(w, h), Grid<double>(w, h),
                   erode(height.mask, 1), Mask(w, h)};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!f.mask.test(x, y)) continue;
      const double zxx = z(x + 1, y) - 2 * z(x, y) + z(x - 1, y);
      const double zyy = z(x, y + 1) - 2 * z(x, y) + z(x, y - 1);
      const double zxy = 0.25 * (z(x + 1, y + 1) - z(x - 1, y + 1) - z(x + 1, y - 1) + z(x - 1, y - 1));
      const Eigen2 eg = eigen_sym2(zxx, zxy, zyy);
      f.k1(x, y) = eg.k1;
      f.k2(x, y) = eg.k2;
      f.e1(x, y) = eg.e1;
      f.e2(x, y) = {-eg.e1.y, eg.e1.x};
      f.umbilic.set(x, y, std::abs(eg.k1 - eg.k2) < kUmbilicTolerance);
    }
  return f;
}

void HatchParams::validate() const {
  require(levels >= 2, "hatching needs at least two tone levels");
  require(spacing > 0 && length > 0, "stroke spacing and length must be positive");
  require(cross_threshold < levels - 1, "cross-hatch threshold must be below the brightest tone");
  require(sigma >= 0, "curvature smoothing sigma must be non-negative");
}

int tone_level(double luma, int levels) {
  const double l = std::clamp(luma, 0.0, 1.0);
  return std::min(levels - 1, static_cast<int>(std::floor(l * levels)));
}

namespace {

constexpr std::array<int, 16> kBayer4{0, 8, 2, 10, 12, 4, 14, 6, 3, 11, 1, 9, 15, 7, 13, 5};

}  // namespace

HatchResult hatch(const HeightField& height, const RgbImage& shading, const HatchParams& params) {
  params.validate();
  require(shading.same_shape(height.z), "shading and height field differ in size");
  const int w = height.width(), h = height.height();
  HatchResult res{RgbImage(w, h, ColorSpace::linear, Rgb{1, 1, 1}), {}};
  if (height.mask.count() == 0) return res;
  const PrincipalField field = principal_directions(height, params.sigma);

  Grid<int> tone(w, h);
  for (std::size_t i = 0; i < tone.size(); ++i) tone[i] = tone_level(luminance(shading[i]), params.levels);
  auto darkness = [&](int x, int y) {
    return static_cast<double>(params.levels - 1 - tone(x, y)) / (params.levels - 1);
  };

  const double step = 0.5;
  const int half_steps = params.length;  // length / 2 pixels each way at 0.5 px per step
  for (int sy = params.spacing / 2, j = 0; sy < h; sy += params.spacing, ++j)
    for (int sx = params.spacing / 2, i = 0; sx < w; sx += params.spacing, ++i) {
      if (!field.mask.test(sx, sy)) continue;
      const double level = (kBayer4[(j % 4) * 4 + i % 4] + 0.5) / 16.0;
      for (StrokeFamily fam : {StrokeFamily::along_e2, StrokeFamily::along_e1}) {
        const bool cross = fam == StrokeFamily::along_e1;
        auto active = [&](int x, int y) {
          return darkness(x, y) >= level && (!cross || tone(x, y) <= params.cross_threshold);
        };
        if (!active(sx, sy)) continue;
        const Grid<Vec2>& dir_field = cross ? field.e1 : field.e2;
        Stroke stroke{fam, sx, sy, {}};
        std::vector<StrokePixel> back;
        for (int sign : {-1, 1}) {
          std::vector<StrokePixel>& out = sign < 0 ? back : stroke.pixels;
          Vec2 d = dir_field(sx, sy);
          d = {d.x * sign, d.y * sign};
          if (sign > 0) out.push_back({sx, sy, d});
          double px = sx, py = sy;
          int lx = sx, ly = sy;
          for (int k = 0; k < half_steps; ++k) {
            px += step * d.x;
            py += step * d.y;
            const int qx = static_cast<int>(std::lround(px)), qy = static_cast<int>(std::lround(py));
            if (!field.mask.test_safe(qx, qy) || !active(qx, qy)) break;
            Vec2 e = dir_field(qx, qy);
            if (e.x * d.x + e.y * d.y < 0) e = {-e.x, -e.y};
            d = e;
            if (qx == lx && qy == ly) continue;
            out.push_back({qx, qy, d});
            lx = qx;
            ly = qy;
          }
        }
        std::vector<StrokePixel> all(back.rbegin(), back.rend());
        for (auto& p : all) p.direction = {-p.direction.x, -p.direction.y};
        all.insert(all.end(), stroke.pixels.begin(), stroke.pixels.end());
        stroke.pixels = std::move(all);
        for (const auto& p : stroke.pixels) res.image(p.x, p.y) = {};
        res.strokes.push_back(std::move(stroke));
      }
    }
  return res;
}

}  // namespace narrate
