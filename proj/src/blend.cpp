#include "narrate/blend.hpp"

#include <cmath>

#include "narrate/detail/sparse.hpp"

namespace narrate {

namespace {

constexpr int kDx[4] = {-1, 1, 0, 0};
constexpr int kDy[4] = {0, 0, -1, 1};

void check_region(const Grid<double>& destination, const Grid<double>& source, const Mask& region) {
  require(destination.same_shape(source) && destination.same_shape(region),
          "blend inputs differ in size");
  for (int y = 0; y < region.height(); ++y)
    for (int x = 0; x < region.width(); ++x)
      if (region.test(x, y) &&
          (x == 0 || y == 0 || x == region.width() - 1 || y == region.height() - 1))
        fail(ErrorCode::contract, "blend region touches the frame border");
}

double guidance(const Grid<double>& d, const Grid<double>& s, int px, int py, int qx, int qy,
                GradientMode mode) {
  const double gs = s(qx, qy) - s(px, py);
  if (mode == GradientMode::source) return gs;
  const double gd = d(qx, qy) - d(px, py);
  return std::abs(gd) > std::abs(gs) ? gd : gs;
}

}  // namespace

Grid<double> guidance_divergence(const Grid<double>& destination, const Grid<double>& source,
                                 const Mask& region, GradientMode mode) {
  check_region(destination, source, region);
  Grid<double> div(region.width(), region.height());
  for (int y = 0; y < region.height(); ++y)
    for (int x = 0; x < region.width(); ++x) {
      if (!region.test(x, y)) continue;
      double s = 0;
      for (int k = 0; k < 4; ++k) s += guidance(destination, source, x, y, x + kDx[k], y + kDy[k], mode);
      div(x, y) = s;
    }
  return div;
}

Grid<double> blend_channel(const Grid<double>& destination, const Grid<double>& source,
                           const Mask& region, GradientMode mode, double tol, BlendReport* report) {
  require(tol > 0, "blend tolerance must be positive");
  const Grid<double> div = guidance_divergence(destination, source, region, mode);
  Grid<double> out = destination;

  Grid<int> unknown(region.width(), region.height(), -1);
  std::vector<std::size_t> pixels;
  for (std::size_t i = 0; i < region.size(); ++i)
    if (region[i]) {
      unknown[i] = static_cast<int>(pixels.size());
      pixels.push_back(i);
    }
  if (report) *report = {};
  if (pixels.empty()) return out;

  // A u = lap(d) - div v, A = -lap restricted to the region (Dirichlet rows eliminated).
  const int n = static_cast<int>(pixels.size());
  detail::TripletBuilder builder(n);
  std::vector<double> b(static_cast<std::size_t>(n));
  double div_max = 0;
  for (int u = 0; u < n; ++u) {
    const int x = static_cast<int>(pixels[u] % region.width());
    const int y = static_cast<int>(pixels[u] / region.width());
    double lap_d = 0;
    builder.add(u, u, 4.0);
    for (int k = 0; k < 4; ++k) {
      const int qx = x + kDx[k], qy = y + kDy[k];
      lap_d += destination(qx, qy) - destination(x, y);
      if (unknown(qx, qy) >= 0) builder.add(u, unknown(qx, qy), -1.0);
    }
    b[u] = lap_d - div(x, y);
    div_max = std::max(div_max, std::abs(div(x, y)));
  }
  const detail::CsrMatrix a = builder.build();
  double b_max = 0;
  for (double v : b) b_max = std::max(b_max, std::abs(v));

  detail::CgOptions opts;
  opts.rel_tol = tol;
  opts.max_iter = 50 * (region.width() + region.height()) + 1000;
  opts.max_abs_residual = tol * (div_max > 0 ? div_max : b_max);
  std::vector<double> corr(static_cast<std::size_t>(n), 0.0);
  const auto res = detail::conjugate_gradient(a, b, corr, opts);
  if (!res.converged)
    throw ConvergenceError("poisson blend did not converge", res.relative_residual, res.iterations);
  for (int u = 0; u < n; ++u) out[pixels[u]] = destination[pixels[u]] + corr[u];
  if (report) *report = {res.iterations, res.relative_residual};
  return out;
}

RgbImage blend(const RgbImage& destination, const RgbImage& source, const Mask& region,
               GradientMode mode, double tol, BlendReport* report) {
  require(destination.space() == source.space(), "blend inputs carry different colour spaces");
  require(destination.same_shape(source) && destination.same_shape(region), "blend inputs differ in size");
  RgbImage out = destination;
  BlendReport worst;
  for (int c = 0; c < 3; ++c) {
    Grid<double> d(destination.width(), destination.height()), s(source.width(), source.height());
    for (std::size_t i = 0; i < d.size(); ++i) {
      d[i] = destination[i][c];
      s[i] = source[i][c];
    }
    BlendReport rep;
    const Grid<double> f = blend_channel(d, s, region, mode, tol, &rep);
    for (std::size_t i = 0; i < f.size(); ++i) out[i][c] = f[i];
    worst.iterations = std::max(worst.iterations, rep.iterations);
    worst.relative_residual = std::max(worst.relative_residual, rep.relative_residual);
  }
  if (report) *report = worst;
  return out;
}

NormalMap blend(const NormalMap& destination, const NormalMap& source, const Mask& region,
                GradientMode mode, double tol, BlendReport* report) {
  require(destination.normals.same_shape(source.normals) && destination.normals.same_shape(region),
          "blend inputs differ in size");
  const int w = destination.width(), h = destination.height();
  if (report) *report = {};
  Grid<double> comps[3];
  for (int c = 0; c < 3; ++c) {
    Grid<double> d(w, h), s(w, h);
    for (std::size_t i = 0; i < d.size(); ++i) {
      const Vec3 dv = destination.normals[i], sv = source.normals[i];
      d[i] = c == 0 ? dv.x : (c == 1 ? dv.y : dv.z);
      s[i] = c == 0 ? sv.x : (c == 1 ? sv.y : sv.z);
    }
    BlendReport rep;
    comps[c] = blend_channel(d, s, region, mode, tol, &rep);
    if (report) {
      report->iterations = std::max(report->iterations, rep.iterations);
      report->relative_residual = std::max(report->relative_residual, rep.relative_residual);
    }
  }
  NormalMap out(w, h);
  const Mask united = destination.mask | source.mask;
  for (std::size_t i = 0; i < out.normals.size(); ++i) {
    if (!united[i]) continue;
    out.mask[i] = 1;
    if (!region[i] && destination.mask[i]) {
      out.normals[i] = destination.normals[i];
      continue;
    }
    const Vec3 v{comps[0][i], comps[1][i], comps[2][i]};
    const double len = norm(v);
    if (len > 1e-9) out.normals[i] = v / len;
    else out.normals[i] = destination.mask[i] ? destination.normals[i] : source.normals[i];
  }
  return out;
}

Mask face_region(const Mask& coverage, int erode_r) {
  require(erode_r >= 1, "face region erosion radius must be >= 1");
  Mask region = erode(coverage, erode_r);
  const Mask border = frame_border(coverage.width(), coverage.height());
  for (std::size_t i = 0; i < region.size(); ++i)
    if (border[i]) region[i] = 0;
  if (region.count() == 0) fail(ErrorCode::domain, "face region is empty after erosion");
  return region;
}

}  // namespace narrate
