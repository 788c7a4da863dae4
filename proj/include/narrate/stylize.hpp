#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "narrate/io.hpp"
#include "narrate/raster.hpp"

namespace narrate {

inline constexpr double kDefaultShadingFloor = 1e-3;

/// Per-pixel linear ratio relit / original. Invalid pixels hold zero.
struct ShadingMap {
  RgbImage ratio;
  Mask valid;

  int width() const noexcept { return ratio.width(); }
  int height() const noexcept { return ratio.height(); }
};

/// S = relit / max(original, eps) per channel; pixels where any channel of
/// the original is below eps are invalid. Both images must be linear.
ShadingMap shading_map(const RgbImage& original, const RgbImage& relit, double eps = kDefaultShadingFloor);

/// S * styled on valid pixels, styled elsewhere. Styled must be linear.
RgbImage apply_shading(const ShadingMap& s, const RgbImage& styled);

/// 3-channel PFM; invalid pixels are stored as -1 in every channel.
Bytes encode_shading_pfm(const ShadingMap& s);
ShadingMap decode_shading_pfm(std::span<const std::uint8_t> bytes);
void write_shading_pfm(const ShadingMap& s, const std::filesystem::path& path);
ShadingMap read_shading_pfm(const std::filesystem::path& path);

/// Principal frames of the height-field Hessian, in image coordinates
/// (x along columns, y down rows). |k1| >= |k2|; e1 has a non-negative x
/// component and e2 = (-e1.y, e1.x). Umbilic pixels get e1 = (1, 0).
struct PrincipalField {
  Grid<Vec2> e1;
  Grid<Vec2> e2;
  Grid<double> k1;
  Grid<double> k2;
  Mask mask;     // pixels with a full 3x3 stencil inside the height mask
  Mask umbilic;  // |k1 - k2| < 1e-6

  int width() const noexcept { return mask.width(); }
  int height() const noexcept { return mask.height(); }
};

inline constexpr double kUmbilicTolerance = 1e-6;

/// Masked Gaussian smoothing of z (see smooth_masked; sigma = 0 skips it)
/// followed by central-difference Hessians and a closed-form 2x2
/// eigen-decomposition.
PrincipalField principal_directions(const HeightField& height, double sigma);

/// Gaussian-weighted local plane fit over the masked neighbourhood, evaluated
/// at the centre pixel. Linear fields pass through unchanged up to the mask
/// edge. Zero outside the mask.
Grid<double> smooth_masked(const Grid<double>& values, const Mask& mask, double sigma);

struct HatchParams {
  int levels = 6;
  int spacing = 3;
  int length = 12;
  /// Tones <= this index also get strokes along e1; negative disables.
  int cross_threshold = 2;
  double sigma = 1.5;

  void validate() const;
};

enum class StrokeFamily { along_e2, along_e1 };

struct StrokePixel {
  int x = 0;
  int y = 0;
  Vec2 direction;  // unit tangent of the stroke at this pixel
};

struct Stroke {
  StrokeFamily family = StrokeFamily::along_e2;
  int seed_x = 0;
  int seed_y = 0;
  std::vector<StrokePixel> pixels;
};

struct HatchResult {
  RgbImage image;  // linear; black strokes on white
  std::vector<Stroke> strokes;
};

/// Tone index min(K - 1, floor(L K)) of the clamped luma L.
int tone_level(double luma, int levels);

/// Shading luma is quantized into `levels` tones; the brightest draws nothing.
/// Seeds lie on a grid of the given spacing and switch on through a 4x4
/// ordered-dither ladder as the tone darkens; each active seed traces a
/// polyline of `length` pixels along e2 and, at tones <= cross_threshold,
/// along e1. Strokes stop where the local tone would not activate their seed.
HatchResult hatch(const HeightField& height, const RgbImage& shading, const HatchParams& params = {});

}  // namespace narrate
