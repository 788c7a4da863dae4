#pragma once

#include <vector>

#include "narrate/raster.hpp"

namespace narrate {

/// One soft depth constraint, in HeightField units.
struct DepthSample {
  int x = 0;
  int y = 0;
  double depth = 0;
  double weight = 1;
};

using DepthPrior = std::vector<DepthSample>;

enum class SolverKind { cg, direct };

/// How the additive constant is fixed on mask components no prior reaches.
///  mean_zero       such components get zero mean.
///  prior_anchored  every component must carry a prior; otherwise domain error.
enum class Gauge { mean_zero, prior_anchored };

struct IntegrationConfig {
  double prior_weight = 1.0;   // lambda
  double nz_threshold = 0.1;   // tau
  SolverKind solver = SolverKind::cg;
  double cg_tol = 1e-8;
  int cg_max_iter = 0;         // 0 selects 10 * (width + height)
  Gauge gauge = Gauge::mean_zero;

  void validate() const;
};

/// Target surface slopes. p = dz/dx (x right), q = dz/dy with y pointing up,
/// i.e. opposite the row index. `clamped` marks masked pixels whose n_z fell
/// below the threshold; their slopes are zero and never used.
struct SurfaceGradients {
  Grid<double> p;
  Grid<double> q;
  Mask mask;
  Mask clamped;
};

SurfaceGradients gradients_from_normals(const NormalMap& normals, double nz_threshold);

/// Pixels where n_z < tau, dilated by one, plus the one-pixel inner ring of
/// the mask. Callers attach depth priors here.
Mask discontinuity_pixels(const NormalMap& normals, double nz_threshold);

/// Samples `depth` at every set pixel of `where` that is also valid in `depth`.
DepthPrior prior_from_depth(const HeightField& depth, const Mask& where, double weight = 1.0);

struct IntegrationReport {
  int iterations = 0;
  double relative_residual = 0;
  int components = 0;
  std::size_t unconstrained_pixels = 0;
};

/// Screened Poisson integration.
///
/// Minimizes  sum_edges (z_j - z_i - g_ij)^2 + lambda * sum_k w_k (z_k - d_k)^2
/// over the masked pixels. Edges join 4-adjacent masked pixels, i to its right
/// or lower neighbour j, and g_ij is the forward difference target along the
/// edge (p for horizontal edges, -q for vertical ones since rows run down):
///  - both endpoints unclamped: mean of the two endpoint slopes;
///  - one endpoint clamped and carrying no prior: the other endpoint's slope;
///  - otherwise the edge contributes nothing.
/// Masked pixels touched by neither an edge nor a prior are filled afterwards
/// by harmonic interpolation from their neighbours; they do not affect the
/// rest of the solution. Components without a prior are handled per `gauge`.
HeightField integrate_gradients(const SurfaceGradients& gradients, const DepthPrior& prior,
                                const IntegrationConfig& config,
                                IntegrationReport* report = nullptr);

HeightField integrate(const NormalMap& normals, const DepthPrior& prior,
                      const IntegrationConfig& config, IntegrationReport* report = nullptr);

}  // namespace narrate
