#pragma once

#include "narrate/raster.hpp"

namespace narrate {

/// Guidance field for the blend: gradients of the source, or per edge the
/// larger-magnitude of the source and destination differences.
enum class GradientMode { source, mixed };

struct BlendReport {
  int iterations = 0;
  double relative_residual = 0;
};

inline constexpr double kDefaultBlendTol = 1e-8;

/// Discrete divergence of the guidance field at every pixel of `region`:
/// div v(p) = sum over the 4 neighbours q of v_pq, with v_pq = s_q - s_p in
/// source mode. Zero outside the region.
Grid<double> guidance_divergence(const Grid<double>& destination, const Grid<double>& source,
                                 const Mask& region, GradientMode mode);

/// Solves lap f = div v inside `region` with f = destination elsewhere. The
/// unknown is the correction f - destination, so an unchanged guidance field
/// returns the destination bit for bit. Contract error if the region touches
/// the frame border; convergence error if the solver stalls.
Grid<double> blend_channel(const Grid<double>& destination, const Grid<double>& source,
                           const Mask& region, GradientMode mode, double tol = kDefaultBlendTol,
                           BlendReport* report = nullptr);

/// Per-channel blend. Both images must share a colour-space tag.
RgbImage blend(const RgbImage& destination, const RgbImage& source, const Mask& region,
               GradientMode mode = GradientMode::source, double tol = kDefaultBlendTol,
               BlendReport* report = nullptr);

/// Components blended independently, then renormalized; the output mask is
/// the union of both masks.
NormalMap blend(const NormalMap& destination, const NormalMap& source, const Mask& region,
                GradientMode mode = GradientMode::source, double tol = kDefaultBlendTol,
                BlendReport* report = nullptr);

/// Coverage eroded by `erode_r` (square element) with the frame border
/// cleared, so the result is a valid blend region. Domain error if empty.
Mask face_region(const Mask& coverage, int erode_r = 2);

}  // namespace narrate
