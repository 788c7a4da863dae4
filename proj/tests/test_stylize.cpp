#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "fixtures.hpp"
#include "narrate/stylize.hpp"

using namespace narrate;

namespace {

RgbImage filled(int w, int h, Rgb c) {
  RgbImage img(w, h, ColorSpace::linear);
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = c;
  return img;
}

HeightField full_field(int w, int h, auto&& z) {
  HeightField f(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      f.z(x, y) = z(x - 0.5 * (w - 1), y - 0.5 * (h - 1));
      f.mask.set(x, y);
    }
  return f;
}

HeightField cylinder(int n, double r) {
  return full_field(n, n, [r](double x, double) { return -x * x / (2 * r); });
}

bool interior(int x, int y, int w, int h, int margin) {
  return x >= margin && y >= margin && x < w - margin && y < h - margin;
}

std::size_t stroked(const RgbImage& img) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < img.size(); ++i) n += img[i].r < 0.5;
  return n;
}

double mean_luma(const RgbImage& img) {
  double s = 0;
  for (std::size_t i = 0; i < img.size(); ++i) s += luminance(img[i]);
  return s / img.size();
}

RgbImage ramp(int w, int h) {
  RgbImage img(w, h, ColorSpace::linear);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double v = static_cast<double>(x) / (w - 1);
      img(x, y) = {v, v, v};
    }
  return img;
}

}  // namespace

TEST(Shading, RatioExamples) {
  std::mt19937_64 rng(21);
  const RgbImage orig = fixtures::random_image(16, 12, rng, 0.05, 1.0);
  const ShadingMap one = shading_map(orig, orig);
  EXPECT_EQ(one.valid.count(), orig.size());
  for (std::size_t i = 0; i < orig.size(); ++i) EXPECT_EQ(one.ratio[i], (Rgb{1, 1, 1}));
  RgbImage half = orig;
  for (std::size_t i = 0; i < half.size(); ++i) half[i] = half[i] * 0.5;
  const ShadingMap s = shading_map(orig, half);
  for (std::size_t i = 0; i < orig.size(); ++i) {
    EXPECT_NEAR(s.ratio[i].r, 0.5, 1e-15);
    EXPECT_NEAR(s.ratio[i].b, 0.5, 1e-15);
  }
}

TEST(Shading, InvalidBelowFloor) {
  RgbImage orig = filled(3, 1, {0.5, 0.5, 0.5});
  orig(1, 0) = {0.5, 1e-4, 0.5};
  const ShadingMap s = shading_map(orig, filled(3, 1, {0.2, 0.2, 0.2}));
  EXPECT_FALSE(s.valid.test(1, 0));
  EXPECT_EQ(s.ratio(1, 0), (Rgb{0, 0, 0}));
  EXPECT_TRUE(s.valid.test(0, 0));
  EXPECT_THROW(shading_map(RgbImage(3, 1, ColorSpace::srgb8), orig), Error);
}

TEST(Shading, RoundTripReproducesRelit) {
  std::mt19937_64 rng(22);
  for (int t = 0; t < 5; ++t) {
    const RgbImage orig = fixtures::random_image(20, 20, rng, 0.01, 1.0);
    const RgbImage relit = fixtures::random_image(20, 20, rng, 0.0, 3.0);
    const RgbImage back = apply_shading(shading_map(orig, relit), orig);
    for (std::size_t i = 0; i < orig.size(); ++i) {
      EXPECT_NEAR(back[i].r, relit[i].r, 1e-6);
      EXPECT_NEAR(back[i].g, relit[i].g, 1e-6);
      EXPECT_NEAR(back[i].b, relit[i].b, 1e-6);
    }
  }
}

TEST(ApplyShading, Examples) {
  std::mt19937_64 rng(23);
  const RgbImage styled = fixtures::random_image(10, 10, rng);
  ShadingMap one{filled(10, 10, {1, 1, 1}), Mask(10, 10, true)};
  EXPECT_EQ(apply_shading(one, styled), styled);
  ShadingMap zero{filled(10, 10, {0, 0, 0}), Mask(10, 10, true)};
  zero.valid.set(3, 3, false);
  const RgbImage black = apply_shading(zero, styled);
  for (std::size_t i = 0; i < black.size(); ++i)
    if (zero.valid[i]) EXPECT_EQ(black[i], (Rgb{0, 0, 0}));
  EXPECT_EQ(black(3, 3), styled(3, 3));
  EXPECT_THROW(apply_shading(one, RgbImage(10, 10, ColorSpace::srgb8)), Error);
}

TEST(ApplyShading, ScalarCommutesWithPermutation) {
  std::mt19937_64 rng(24);
  for (int t = 0; t < 5; ++t) {
    const double alpha = std::uniform_real_distribution<double>(0, 2)(rng);
    const RgbImage styled = fixtures::random_image(9, 7, rng);
    std::vector<std::size_t> perm(styled.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    RgbImage permuted = styled;
    for (std::size_t i = 0; i < perm.size(); ++i) permuted[i] = styled[perm[i]];
    const ShadingMap s{filled(9, 7, {alpha, alpha, alpha}), Mask(9, 7, true)};
    const RgbImage a = apply_shading(s, styled), b = apply_shading(s, permuted);
    for (std::size_t i = 0; i < perm.size(); ++i) EXPECT_EQ(b[i], a[perm[i]]);
  }
}

TEST(ShadingPfm, SentinelRoundTrip) {
  std::mt19937_64 rng(25);
  ShadingMap s = shading_map(fixtures::random_image(7, 5, rng, 0.1, 1), fixtures::random_image(7, 5, rng));
  s.valid.set(2, 3, false);
  s.ratio(2, 3) = {0, 0, 0};
  const ShadingMap back = decode_shading_pfm(encode_shading_pfm(s));
  EXPECT_EQ(back.valid, s.valid);
  for (std::size_t i = 0; i < s.ratio.size(); ++i) {
    if (!s.valid[i]) continue;
    EXPECT_NEAR(back.ratio[i].r, s.ratio[i].r, 1e-6 * std::max(1.0, s.ratio[i].r));
  }
  fixtures::TempDir dir("shading");
  write_shading_pfm(s, dir.path / "s.pfm");
  const ShadingMap file = read_shading_pfm(dir.path / "s.pfm");
  EXPECT_EQ(file.valid, s.valid);
  const PfmImage raw = decode_pfm(encode_shading_pfm(s));
  ASSERT_TRUE(std::holds_alternative<RgbImage>(raw));
  EXPECT_EQ(std::get<RgbImage>(raw)(2, 3), (Rgb{-1, -1, -1}));
}

TEST(Principal, PlaneIsUmbilic) {
  const HeightField plane = full_field(32, 24, [](double x, double y) { return 0.3 * x - 0.7 * y + 2; });
  const PrincipalField f = principal_directions(plane, 1.5);
  ASSERT_GT(f.mask.count(), 0u);
  for (std::size_t i = 0; i < f.mask.size(); ++i) {
    if (!f.mask[i]) continue;
    EXPECT_NEAR(f.k1[i], 0, 1e-9);
    EXPECT_NEAR(f.k2[i], 0, 1e-9);
    EXPECT_TRUE(f.umbilic[i]);
    EXPECT_EQ(f.e1[i], (Vec2{1, 0}));
  }
}

TEST(Principal, CylinderFrames) {
  const int n = 128;
  const double r = 40;
  const PrincipalField f = principal_directions(cylinder(n, r), 1.5);
  int checked = 0;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      if (!f.mask.test(x, y) || !interior(x, y, n, n, 8)) continue;
      ++checked;
      EXPECT_NEAR(f.e1(x, y).x, 1, 1e-3);
      EXPECT_NEAR(f.e1(x, y).y, 0, 1e-3);
      EXPECT_NEAR(std::abs(f.e2(x, y).y), 1, 1e-3);
      EXPECT_NEAR(f.k1(x, y), -1 / r, 1e-3);
      EXPECT_NEAR(f.k2(x, y), 0, 1e-3);
    }
  EXPECT_GT(checked, 10000);
}

TEST(Principal, ShallowSphereCapIsUmbilic) {
  const int n = 128;
  const double big_r = 5000;
  const HeightField cap = full_field(n, n, [big_r](double x, double y) {
    return std::sqrt(big_r * big_r - x * x - y * y) - big_r;
  });
  const PrincipalField f = principal_directions(cap, 1.5);
  std::size_t total = 0, flagged = 0;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      if (!f.mask.test(x, y) || !interior(x, y, n, n, 8)) continue;
      ++total;
      flagged += f.umbilic.test(x, y);
    }
  EXPECT_GE(static_cast<double>(flagged) / total, 0.95);
}

TEST(Principal, OrthonormalFramesSolveTheEigenEquation) {
  const int n = 64;
  const auto e = fixtures::ellipsoid(n, n, 30.5, 33, 26, 20, 18);
  const double sigma = 1.0;
  const PrincipalField f = principal_directions(e.height, sigma);
  const Grid<double> z = smooth_masked(e.height.z, e.height.mask, sigma);
  int checked = 0;
  for (int y = 1; y < n - 1; ++y)
    for (int x = 1; x < n - 1; ++x) {
      if (!f.mask.test(x, y)) continue;
      const double hxx = z(x + 1, y) - 2 * z(x, y) + z(x - 1, y);
      const double hyy = z(x, y + 1) - 2 * z(x, y) + z(x, y - 1);
      const double hxy = 0.25 * (z(x + 1, y + 1) - z(x + 1, y - 1) - z(x - 1, y + 1) + z(x - 1, y - 1));
      const Vec2 e1 = f.e1(x, y), e2 = f.e2(x, y);
      EXPECT_LE(std::abs(e1.x * e2.x + e1.y * e2.y), 1e-6);
      EXPECT_NEAR(std::hypot(e1.x, e1.y), 1, 1e-9);
      EXPECT_GE(e1.x, 0);
      EXPECT_GE(std::abs(f.k1(x, y)), std::abs(f.k2(x, y)));
      if (f.umbilic.test(x, y)) continue;
      for (auto [v, k] : {std::pair{e1, f.k1(x, y)}, std::pair{e2, f.k2(x, y)}}) {
        const double rx = hxx * v.x + hxy * v.y - k * v.x;
        const double ry = hxy * v.x + hyy * v.y - k * v.y;
        EXPECT_LE(std::hypot(rx, ry), 1e-6);
      }
      ++checked;
    }
  EXPECT_GT(checked, 1000);
}

TEST(Hatch, ToneLevels) {
  EXPECT_EQ(tone_level(0.0, 6), 0);
  EXPECT_EQ(tone_level(1.0, 6), 5);
  EXPECT_EQ(tone_level(0.5, 6), 3);
  EXPECT_EQ(tone_level(-1.0, 6), 0);
  EXPECT_EQ(tone_level(7.0, 6), 5);
}

TEST(Hatch, BrightShadingIsWhite) {
  const HatchResult r = hatch(cylinder(64, 30), filled(64, 64, {1, 1, 1}));
  EXPECT_TRUE(r.strokes.empty());
  for (std::size_t i = 0; i < r.image.size(); ++i) EXPECT_EQ(r.image[i], (Rgb{1, 1, 1}));
}

TEST(Hatch, DarkShadingIsDense) {
  const HatchResult r = hatch(cylinder(96, 40), filled(96, 96, {0, 0, 0}));
  EXPECT_LT(mean_luma(r.image), 0.5);
  bool both = false;
  for (const auto& s : r.strokes) both |= s.family == StrokeFamily::along_e1;
  EXPECT_TRUE(both);
}

TEST(Hatch, RampStrokesFollowE2) {
  const int n = 128;
  const HeightField cyl = cylinder(n, 40);
  auto fraction_aligned = [&](const HatchResult& r, bool e2_only) {
    std::size_t total = 0, good = 0;
    for (const auto& s : r.strokes) {
      if (e2_only && s.family != StrokeFamily::along_e2) continue;
      for (const auto& p : s.pixels) {
        ++total;
        good += std::abs(p.direction.y) >= std::cos(radians(5.0));
      }
    }
    EXPECT_GT(total, 1000u);
    return static_cast<double>(good) / total;
  };
  HatchParams single;
  single.cross_threshold = -1;
  EXPECT_GE(fraction_aligned(hatch(cyl, ramp(n, n), single), false), 0.9);
  EXPECT_GE(fraction_aligned(hatch(cyl, ramp(n, n)), true), 0.9);
}

TEST(Hatch, DarkerNeverStrokesLess) {
  std::mt19937_64 rng(26);
  const auto e = fixtures::ellipsoid(80, 80, 40, 40, 34, 30, 25);
  RgbImage shade = fixtures::random_image(80, 80, rng);
  std::size_t prev = stroked(hatch(e.height, shade).image);
  for (double f : {0.9, 0.7, 0.5, 0.3, 0.1, 0.0}) {
    RgbImage darker = shade;
    for (std::size_t i = 0; i < darker.size(); ++i) darker[i] = darker[i] * f;
    const std::size_t now = stroked(hatch(e.height, darker).image);
    EXPECT_GE(now, prev) << f;
    prev = now;
    shade = darker;
  }
}

TEST(Hatch, Deterministic) {
  std::mt19937_64 rng(27);
  const auto e = fixtures::ellipsoid(60, 60, 30, 30, 25, 22, 20);
  const RgbImage shade = fixtures::random_image(60, 60, rng);
  const HatchResult a = hatch(e.height, shade), b = hatch(e.height, shade);
  EXPECT_EQ(a.image, b.image);
  ASSERT_EQ(a.strokes.size(), b.strokes.size());
  for (std::size_t i = 0; i < a.strokes.size(); ++i) {
    ASSERT_EQ(a.strokes[i].pixels.size(), b.strokes[i].pixels.size());
    for (std::size_t k = 0; k < a.strokes[i].pixels.size(); ++k) {
      EXPECT_EQ(a.strokes[i].pixels[k].x, b.strokes[i].pixels[k].x);
      EXPECT_EQ(a.strokes[i].pixels[k].direction, b.strokes[i].pixels[k].direction);
    }
  }
}

TEST(Hatch, ParameterValidation) {
  HatchParams p;
  p.levels = 1;
  EXPECT_THROW(p.validate(), Error);
  p = {};
  p.cross_threshold = 5;
  EXPECT_THROW(p.validate(), Error);
  EXPECT_THROW(hatch(cylinder(8, 4), filled(9, 8, {1, 1, 1})), Error);
}
