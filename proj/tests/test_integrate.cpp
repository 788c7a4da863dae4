#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <chrono>
#include <random>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "narrate/integrate.hpp"

using namespace narrate;

namespace {

NormalMap constant_normals(int w, int h, Vec3 n) {
  NormalMap m(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) m.set(x, y, n);
  return m;
}

double masked_mean(const HeightField& h) {
  double s = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < h.z.size(); ++i)
    if (h.mask[i]) s += h.z[i], ++n;
  return s / n;
}

}  // namespace

TEST(Gradients, FlatPlane) {
  const auto g = gradients_from_normals(constant_normals(8, 8, {0, 0, 1}), 0.1);
  for (std::size_t i = 0; i < g.p.size(); ++i) {
    EXPECT_EQ(g.p[i], 0);
    EXPECT_EQ(g.q[i], 0);
  }
}

TEST(Gradients, SlantedPlane) {
  const double t = radians(30.0);
  const auto g = gradients_from_normals(constant_normals(4, 4, {-std::sin(t), 0, std::cos(t)}), 0.1);
  EXPECT_NEAR(g.p(2, 2), 0.5773502691896258, 1e-12);
  EXPECT_NEAR(g.q(2, 2), 0, 1e-15);
}

TEST(Gradients, SphereMatchesAnalyticSlopes) {
  const auto s = fixtures::sphere(128, 128, 50);
  const auto g = gradients_from_normals(s.normals, 0.1);
  const Mask inner = erode(s.normals.mask, 3);
  for (int y = 0; y < 128; ++y)
    for (int x = 0; x < 128; ++x) {
      if (!inner.test(x, y)) continue;
      const double dx = x - s.cx, dy = s.cy - y, z = s.height.z(x, y);
      EXPECT_NEAR(g.p(x, y), -dx / z, 1e-10);
      EXPECT_NEAR(g.q(x, y), -dy / z, 1e-10);
    }
}

TEST(Gradients, EmptyMaskIsDomainError) {
  try {
    gradients_from_normals(NormalMap(4, 4), 0.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::domain);
  }
}

TEST(Discontinuities, FlatFullFrameGivesBorderRing) {
  const Mask d = discontinuity_pixels(constant_normals(10, 7, {0, 0, 1}), 0.1);
  EXPECT_EQ(d, frame_border(10, 7));
}

TEST(Discontinuities, ThresholdNearOneFlagsEverything) {
  const auto s = fixtures::sphere(32, 32, 14);
  const Mask d = discontinuity_pixels(s.normals, 1 - 1e-12);
  EXPECT_EQ(d, s.normals.mask);
}

TEST(Discontinuities, SphereRingFollowsAnalyticNz) {
  const auto s = fixtures::sphere(64, 64, 28);
  const double tau = 0.3;
  Mask steep(64, 64);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x)
      if (s.normals.valid(x, y) && s.height.z(x, y) / s.radius < tau) steep.set(x, y);
  const Mask expected = (dilate(steep, 1) & s.normals.mask) | inner_ring(s.normals.mask);
  EXPECT_EQ(discontinuity_pixels(s.normals, tau), expected);
  EXPECT_GT(steep.count(), 0u);
}

TEST(Integrate, FlatPinnedByOnePrior) {
  const auto n = constant_normals(16, 16, {0, 0, 1});
  IntegrationConfig cfg;
  const auto h = integrate(n, {{3, 4, 5.0, 1.0}}, cfg);
  for (std::size_t i = 0; i < h.z.size(); ++i) EXPECT_NEAR(h.z[i], 5.0, 1e-6);
}

TEST(Integrate, SlantedPlaneMeanZero) {
  const double t = radians(30.0);
  const auto n = constant_normals(64, 64, {-std::sin(t), 0, std::cos(t)});
  IntegrationConfig cfg;
  const auto h = integrate(n, {}, cfg);
  const double mean_x = 31.5;
  double worst = 0;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) worst = std::max(worst, std::abs(h.z(x, y) - (x - mean_x) * std::tan(t)));
  EXPECT_LE(worst, 1e-6);
}

TEST(Integrate, HemisphereAccuracyAndRuntime) {
  const auto s = fixtures::sphere(256, 256, 120);
  const auto t0 = std::chrono::steady_clock::now();
  IntegrationReport rep;
  const auto h = integrate(s.normals, {}, IntegrationConfig{}, &rep);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double mz = masked_mean(s.height), mh = masked_mean(h);
  double se = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < h.z.size(); ++i)
    if (h.mask[i]) {
      const double d = (h.z[i] - mh) - (s.height.z[i] - mz);
      se += d * d;
      ++n;
    }
  EXPECT_EQ(h.mask, s.normals.mask);
  EXPECT_NEAR(mh, 0, 1e-9);
  EXPECT_LE(std::sqrt(se / n), 0.005 * s.radius);
  EXPECT_LE(secs, 5.0);
  EXPECT_LE(rep.relative_residual, 1e-8);
}

TEST(Integrate, GaugeShift) {
  const auto s = fixtures::sphere(48, 48, 20);
  DepthPrior prior = prior_from_depth(s.height, inner_ring(s.normals.mask));
  IntegrationConfig cfg;
  cfg.cg_tol = 1e-13;
  const auto a = integrate(s.normals, prior, cfg);
  for (auto& p : prior) p.depth += 7.25;
  const auto b = integrate(s.normals, prior, cfg);
  for (std::size_t i = 0; i < a.z.size(); ++i)
    if (a.mask[i]) EXPECT_NEAR(b.z[i] - a.z[i], 7.25, 1e-8);
}

TEST(Integrate, Linearity) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  const int w = 32, h = 32;
  SurfaceGradients g1{Grid<double>(w, h), Grid<double>(w, h), Mask(w, h, true), Mask(w, h)};
  SurfaceGradients g2 = g1, sum = g1;
  for (std::size_t i = 0; i < g1.p.size(); ++i) {
    g1.p[i] = u(rng), g1.q[i] = u(rng), g2.p[i] = u(rng), g2.q[i] = u(rng);
    sum.p[i] = g1.p[i] + g2.p[i];
    sum.q[i] = g1.q[i] + g2.q[i];
  }
  const DepthPrior zeros{{0, 0, 0.0, 1.0}, {31, 31, 0.0, 2.0}, {10, 20, 0.0, 0.5}};
  IntegrationConfig cfg;
  cfg.cg_tol = 1e-14;
  const auto a = integrate_gradients(g1, zeros, cfg), b = integrate_gradients(g2, zeros, cfg),
             c = integrate_gradients(sum, zeros, cfg);
  for (std::size_t i = 0; i < a.z.size(); ++i) EXPECT_NEAR(c.z[i], a.z[i] + b.z[i], 1e-8);
}

TEST(Integrate, MatchesDenseNormalEquations) {
  std::mt19937_64 rng(33);
  std::uniform_real_distribution<double> u(-0.6, 0.6), w01(0.2, 2.0), d(-5, 5);
  for (int trial = 0; trial < 10; ++trial) {
    const Mask m = oracles::random_blob_mask(16, 16, rng);
    NormalMap n(16, 16);
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x)
        if (m.test(x, y)) n.set(x, y, normalized(Vec3{u(rng), u(rng), 1}));
    DepthPrior prior;
    std::uniform_int_distribution<int> pix(0, 15);
    for (int k = 0; k < 4; ++k) {
      const int x = pix(rng), y = pix(rng);
      if (m.test(x, y)) prior.push_back({x, y, d(rng), w01(rng)});
    }
    IntegrationConfig cfg;
    cfg.cg_tol = 1e-13;
    cfg.prior_weight = 1.5;
    const auto h = integrate(n, prior, cfg);
    std::vector<int> index;
    const Eigen::VectorXd z = oracles::dense_integration(n, prior, cfg.prior_weight, index);
    for (int i = 0; i < 256; ++i)
      if (index[i] >= 0) EXPECT_NEAR(h.z[i], z(index[i]), 1e-9) << "trial " << trial;

    cfg.solver = SolverKind::direct;
    const auto hd = integrate(n, prior, cfg);
    for (int i = 0; i < 256; ++i)
      if (index[i] >= 0) EXPECT_NEAR(hd.z[i], z(index[i]), 1e-9) << "direct, trial " << trial;
  }
}

TEST(Integrate, LargeWeightScreening) {
  const auto s = fixtures::sphere(64, 64, 28);
  DepthPrior prior = prior_from_depth(s.height, inner_ring(s.normals.mask));
  for (auto& p : prior) p.depth += 3.0;  // inconsistent with the gradients on purpose
  IntegrationConfig cfg;
  cfg.prior_weight = 1e6;
  cfg.cg_tol = 1e-12;
  cfg.cg_max_iter = 20000;
  const auto h = integrate(s.normals, prior, cfg);
  for (const auto& p : prior) EXPECT_NEAR(h.z(p.x, p.y), p.depth, 1e-3);
}

TEST(Integrate, SilhouettePriorsAtUnitWeight) {
  const auto s = fixtures::sphere(256, 256, 120);
  const DepthPrior prior = prior_from_depth(s.height, inner_ring(s.normals.mask));
  IntegrationConfig cfg;
  cfg.cg_tol = 1e-12;
  cfg.cg_max_iter = 20000;
  const auto h = integrate(s.normals, prior, cfg);
  for (const auto& p : prior) EXPECT_NEAR(h.z(p.x, p.y), p.depth, 1e-3 * 120);
}

TEST(Integrate, DisconnectedComponentsEachMeanZero) {
  const double t = radians(20.0);
  NormalMap n(20, 6);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 20; ++x)
      if (x < 8 || x > 11) n.set(x, y, {-std::sin(t), 0, std::cos(t)});
  IntegrationReport rep;
  const auto h = integrate(n, {}, IntegrationConfig{}, &rep);
  EXPECT_EQ(rep.components, 2);
  double left = 0, right = 0;
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 8; ++x) left += h.z(x, y), right += h.z(x + 12, y);
  EXPECT_NEAR(left, 0, 1e-7);
  EXPECT_NEAR(right, 0, 1e-7);
  EXPECT_NEAR(h.z(7, 2) - h.z(0, 2), 7 * std::tan(t), 1e-6);
}

TEST(Integrate, PriorAnchoredRules) {
  const auto n = constant_normals(8, 8, {0, 0, 1});
  IntegrationConfig cfg;
  cfg.gauge = Gauge::prior_anchored;
  try {
    integrate(n, {}, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::domain);
  }
  cfg.prior_weight = 0;
  try {
    integrate(n, {{1, 1, 2.0, 1.0}}, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::contract);
  }
  cfg.prior_weight = 1;
  const auto h = integrate(n, {{1, 1, 2.0, 1.0}}, cfg);
  EXPECT_NEAR(h.z(7, 7), 2.0, 1e-6);
}

TEST(Integrate, PriorOutsideMaskIsContractError) {
  auto n = constant_normals(8, 8, {0, 0, 1});
  n.clear(0, 0);
  try {
    integrate(n, {{0, 0, 1.0, 1.0}}, IntegrationConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::contract);
  }
}

TEST(Integrate, ConvergenceErrorCarriesResidual) {
  const auto s = fixtures::sphere(64, 64, 28);
  IntegrationConfig cfg;
  cfg.cg_max_iter = 2;
  try {
    integrate(s.normals, {}, cfg);
    FAIL();
  } catch (const ConvergenceError& e) {
    EXPECT_EQ(e.code(), ErrorCode::convergence);
    EXPECT_GT(e.residual(), cfg.cg_tol);
  }
}

TEST(Integrate, IsDeterministic) {
  const auto s = fixtures::sphere(64, 64, 28);
  const auto a = integrate(s.normals, {}, IntegrationConfig{});
  const auto b = integrate(s.normals, {}, IntegrationConfig{});
  EXPECT_EQ(a.z, b.z);
}
