#include "narrate/integrate.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <cmath>
#include <numeric>

#include "narrate/detail/sparse.hpp"

namespace narrate {

void IntegrationConfig::validate() const {
  require(prior_weight >= 0 && std::isfinite(prior_weight), "prior weight must be >= 0");
  require(nz_threshold > 0 && nz_threshold < 1, "nz threshold must lie in (0, 1)");
  require(cg_tol > 0, "cg tolerance must be positive");
  require(cg_max_iter >= 0, "cg iteration cap must be non-negative");
}

SurfaceGradients gradients_from_normals(const NormalMap& normals, double nz_threshold) {
  require(nz_threshold > 0 && nz_threshold < 1, "nz threshold must lie in (0, 1)");
  if (normals.mask.count() == 0) fail(ErrorCode::domain, "normal map has an empty mask");
  const int w = normals.width(), h = normals.height();
  SurfaceGradients g{Grid<double>(w, h), Grid<double>(w, h), normals.mask, Mask(w, h)};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!normals.valid(x, y)) continue;
      const Vec3 n = normals.at(x, y);
      if (n.z < nz_threshold) {
        g.clamped.set(x, y);
        continue;
      }
      g.p(x, y) = -n.x / n.z;
      g.q(x, y) = -n.y / n.z;
    }
  return g;
}

Mask discontinuity_pixels(const NormalMap& normals, double nz_threshold) {
  Mask steep(normals.width(), normals.height());
  for (int y = 0; y < normals.height(); ++y)
    for (int x = 0; x < normals.width(); ++x)
      if (normals.valid(x, y) && normals.at(x, y).z < nz_threshold) steep.set(x, y);
  return (dilate(steep, 1) & normals.mask) | inner_ring(normals.mask);
}

DepthPrior prior_from_depth(const HeightField& depth, const Mask& where, double weight) {
  require(depth.z.same_shape(where), "depth and selection mask differ in size");
  DepthPrior prior;
  for (int y = 0; y < where.height(); ++y)
    for (int x = 0; x < where.width(); ++x)
      if (where.test(x, y) && depth.mask.test(x, y)) prior.push_back({x, y, depth.z(x, y), weight});
  return prior;
}

namespace {

struct Edge {
  int i, j;  // pixel indices, j is the right or lower neighbour of i
  double target;
};

int find_root(std::vector<int>& parent, int a) {
  while (parent[a] != a) {
    parent[a] = parent[parent[a]];
    a = parent[a];
  }
  return a;
}

std::vector<double> solve_direct(const detail::CsrMatrix& a, const std::vector<double>& b) {
  Eigen::SparseMatrix<double> m(a.n, a.n);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(a.val.size());
  for (int i = 0; i < a.n; ++i)
    for (int k = a.row_ptr[i]; k < a.row_ptr[i + 1]; ++k) trips.emplace_back(i, a.col[k], a.val[k]);
  m.setFromTriplets(trips.begin(), trips.end());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(m);
  if (ldlt.info() != Eigen::Success) fail(ErrorCode::convergence, "sparse factorization failed");
  const Eigen::Map<const Eigen::VectorXd> rhs(b.data(), a.n);
  const Eigen::VectorXd sol = ldlt.solve(rhs);
  return {sol.data(), sol.data() + sol.size()};
}

}  // namespace

HeightField integrate_gradients(const SurfaceGradients& g, const DepthPrior& prior,
                                const IntegrationConfig& config, IntegrationReport* report) {
  config.validate();
  if (config.prior_weight == 0 && config.gauge == Gauge::prior_anchored)
    fail(ErrorCode::contract, "prior_anchored gauge needs a positive prior weight");
  const Mask& mask = g.mask;
  require(g.p.same_shape(mask) && g.q.same_shape(mask) && g.clamped.same_shape(mask),
          "gradient layers differ in size");
  if (mask.count() == 0) fail(ErrorCode::domain, "integration mask is empty");
  const int w = mask.width(), h = mask.height();
  const std::size_t npix = mask.size();

  // Prior terms accumulated per pixel: lambda * sum w and lambda * sum w d.
  std::vector<double> prior_w(npix, 0.0), prior_wd(npix, 0.0);
  for (const auto& s : prior) {
    require(mask.test_safe(s.x, s.y), "depth prior outside the integration mask");
    require(s.weight >= 0 && std::isfinite(s.depth), "depth prior needs finite depth and weight >= 0");
    const std::size_t k = mask.index(s.x, s.y);
    prior_w[k] += config.prior_weight * s.weight;
    prior_wd[k] += config.prior_weight * s.weight * s.depth;
  }

  auto usable = [&](std::size_t k) { return mask[k] && !g.clamped[k]; };
  std::vector<Edge> edges;
  auto consider = [&](std::size_t a, std::size_t b, double ga, double gb) {
    if (!mask[a] || !mask[b]) return;
    const bool ua = usable(a), ub = usable(b);
    double target;
    if (ua && ub) target = 0.5 * (ga + gb);
    else if (ua && prior_w[b] == 0) target = ga;
    else if (ub && prior_w[a] == 0) target = gb;
    else return;
    edges.push_back({static_cast<int>(a), static_cast<int>(b), target});
  };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t a = mask.index(x, y);
      if (x + 1 < w) consider(a, mask.index(x + 1, y), g.p[a], g.p[mask.index(x + 1, y)]);
      if (y + 1 < h) consider(a, mask.index(x, y + 1), -g.q[a], -g.q[mask.index(x, y + 1)]);
    }

  // Unknown numbering over constrained pixels, in row-major order.
  std::vector<char> constrained(npix, 0);
  for (const auto& e : edges) constrained[e.i] = constrained[e.j] = 1;
  for (std::size_t k = 0; k < npix; ++k)
    if (mask[k] && prior_w[k] > 0) constrained[k] = 1;
  std::vector<int> unknown(npix, -1);
  std::vector<std::size_t> pixel_of;
  for (std::size_t k = 0; k < npix; ++k)
    if (constrained[k]) {
      unknown[k] = static_cast<int>(pixel_of.size());
      pixel_of.push_back(k);
    }
  const int n = static_cast<int>(pixel_of.size());

  HeightField out(w, h);
  out.mask = mask;
  IntegrationReport rep;

  if (n > 0) {
    std::vector<int> parent(static_cast<std::size_t>(n));
    std::iota(parent.begin(), parent.end(), 0);
    for (const auto& e : edges) {
      const int a = find_root(parent, unknown[e.i]), b = find_root(parent, unknown[e.j]);
      if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
    std::vector<int> comp(static_cast<std::size_t>(n));
    std::vector<int> comp_id(static_cast<std::size_t>(n), -1);
    int ncomp = 0;
    for (int u = 0; u < n; ++u) {
      const int r = find_root(parent, u);
      if (comp_id[r] < 0) comp_id[r] = ncomp++;
      comp[u] = comp_id[r];
    }
    std::vector<char> anchored(static_cast<std::size_t>(ncomp), 0);
    for (int u = 0; u < n; ++u)
      if (prior_w[pixel_of[u]] > 0) anchored[comp[u]] = 1;
    if (config.gauge == Gauge::prior_anchored)
      for (int c = 0; c < ncomp; ++c)
        if (!anchored[c]) fail(ErrorCode::domain, "mask component carries no depth prior");
    rep.components = ncomp;

    detail::TripletBuilder builder(n);
    std::vector<double> b(static_cast<std::size_t>(n), 0.0);
    for (const auto& e : edges) {
      const int a = unknown[e.i], c = unknown[e.j];
      builder.add(a, a, 1.0);
      builder.add(c, c, 1.0);
      builder.add(a, c, -1.0);
      builder.add(c, a, -1.0);
      b[a] -= e.target;
      b[c] += e.target;
    }
    for (int u = 0; u < n; ++u) {
      const std::size_t k = pixel_of[u];
      if (prior_w[k] > 0) {
        builder.add(u, u, prior_w[k]);
        b[u] += prior_wd[k];
      }
    }

    // Free components: remove the rounding-level inconsistency of b with the
    // constant null vector so the singular system stays consistent.
    std::vector<double> comp_sum(static_cast<std::size_t>(ncomp), 0.0);
    std::vector<int> comp_count(static_cast<std::size_t>(ncomp), 0);
    for (int u = 0; u < n; ++u) {
      comp_sum[comp[u]] += b[u];
      ++comp_count[comp[u]];
    }
    for (int u = 0; u < n; ++u)
      if (!anchored[comp[u]]) b[u] -= comp_sum[comp[u]] / comp_count[comp[u]];

    std::vector<double> z(static_cast<std::size_t>(n), 0.0);
    const detail::CsrMatrix a = builder.build();
    if (config.solver == SolverKind::direct) {
      if (n > 512 * 512) fail(ErrorCode::limit, "direct solver limited to 512x512 unknowns");
      // Pin the first unknown of each free component; the pinned system has
      // the same solutions up to a per-component constant.
      std::vector<char> pinned(static_cast<std::size_t>(ncomp), 0);
      for (int u = 0; u < n; ++u)
        if (!anchored[comp[u]] && !pinned[comp[u]]) {
          pinned[comp[u]] = 1;
          builder.add(u, u, 1.0);
        }
      z = solve_direct(builder.build(), b);
      std::vector<double> az(z.size());
      a.multiply(z, az);
      double rr = 0, bb = 0;
      for (int u = 0; u < n; ++u) {
        rr += (b[u] - az[u]) * (b[u] - az[u]);
        bb += b[u] * b[u];
      }
      rep.relative_residual = bb > 0 ? std::sqrt(rr / bb) : 0.0;
    } else {
      detail::CgOptions opts;
      opts.rel_tol = config.cg_tol;
      opts.max_iter = config.cg_max_iter > 0 ? config.cg_max_iter : 10 * (w + h);
      const auto res = detail::conjugate_gradient(a, b, z, opts);
      rep.iterations = res.iterations;
      rep.relative_residual = res.relative_residual;
      if (!res.converged)
        throw ConvergenceError("normal integration did not converge", res.relative_residual,
                               res.iterations);
    }

    std::fill(comp_sum.begin(), comp_sum.end(), 0.0);
    for (int u = 0; u < n; ++u) comp_sum[comp[u]] += z[u];
    for (int u = 0; u < n; ++u) {
      const double shift = anchored[comp[u]] ? 0.0 : comp_sum[comp[u]] / comp_count[comp[u]];
      out.z[pixel_of[u]] = z[u] - shift;
    }
  }

  // Harmonic fill of masked pixels the energy does not reach.
  std::vector<std::size_t> free_pixels;
  std::vector<int> free_index(npix, -1);
  for (std::size_t k = 0; k < npix; ++k)
    if (mask[k] && !constrained[k]) {
      free_index[k] = static_cast<int>(free_pixels.size());
      free_pixels.push_back(k);
    }
  rep.unconstrained_pixels = free_pixels.size();
  if (!free_pixels.empty()) {
    const int m = static_cast<int>(free_pixels.size());
    detail::TripletBuilder builder(m);
    std::vector<double> b(static_cast<std::size_t>(m), 0.0);
    for (int u = 0; u < m; ++u) {
      const std::size_t k = free_pixels[u];
      const int x = static_cast<int>(k % w), y = static_cast<int>(k / w);
      const int nx[4] = {x - 1, x + 1, x, x};
      const int ny[4] = {y, y, y - 1, y + 1};
      for (int d = 0; d < 4; ++d) {
        if (!mask.test_safe(nx[d], ny[d])) continue;
        const std::size_t q = mask.index(nx[d], ny[d]);
        builder.add(u, u, 1.0);
        if (free_index[q] >= 0) builder.add(u, free_index[q], -1.0);
        else b[u] += out.z[q];
      }
    }
    const detail::CsrMatrix a = builder.build();
    std::vector<double> z(static_cast<std::size_t>(m), 0.0);
    detail::CgOptions opts;
    opts.rel_tol = 1e-12;
    opts.max_iter = 10 * (w + h) + 100;
    detail::conjugate_gradient(a, b, z, opts);
    for (int u = 0; u < m; ++u) out.z[free_pixels[u]] = z[u];
  }

  if (report) *report = rep;
  return out;
}

HeightField integrate(const NormalMap& normals, const DepthPrior& prior,
                      const IntegrationConfig& config, IntegrationReport* report) {
  config.validate();
  return integrate_gradients(gradients_from_normals(normals, config.nz_threshold), prior, config,
                             report);
}

}  // namespace narrate
