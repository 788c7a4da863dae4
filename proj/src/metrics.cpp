#include "narrate/metrics.hpp"

#include <cmath>
#include <limits>

#include <json.hpp>

namespace narrate {

AngularErrorReport angular_error(const NormalMap& a, const NormalMap& b, const std::vector<double>& thresholds) {
  require(a.normals.same_shape(b.normals), "normal maps differ in size");
  require(!thresholds.empty(), "at least one threshold is required");
  for (std::size_t k = 1; k < thresholds.size(); ++k)
    require(thresholds[k] >= thresholds[k - 1], "thresholds must be nondecreasing");

  std::vector<double> errors;
  for (std::size_t i = 0; i < a.normals.size(); ++i) {
    if (!a.mask[i] || !b.mask[i]) continue;
    const double c = std::clamp(dot(a.normals[i], b.normals[i]), -1.0, 1.0);
    errors.push_back(degrees(std::acos(c)));
  }
  if (errors.empty()) fail(ErrorCode::domain, "normal maps share no masked pixels");

  AngularErrorReport r{thresholds, std::vector<double>(thresholds.size(), 0.0), 0, 0};
  double sum = 0;
  std::vector<std::size_t> below(thresholds.size(), 0);
  for (double e : errors) {
    sum += e;
    for (std::size_t k = 0; k < thresholds.size(); ++k)
      if (e < thresholds[k]) ++below[k];
  }
  const double n = static_cast<double>(errors.size());
  for (std::size_t k = 0; k < thresholds.size(); ++k) r.fractions[k] = below[k] / n;
  r.mean_error = sum / n;
  std::sort(errors.begin(), errors.end());
  const std::size_t m = errors.size() / 2;
  r.median_error = errors.size() % 2 ? errors[m] : 0.5 * (errors[m - 1] + errors[m]);
  return r;
}

double psnr_from_rmse(double rmse) {
  if (rmse == 0) return std::numeric_limits<double>::infinity();
  return -20.0 * std::log10(rmse);
}

namespace {

std::vector<double> gaussian_window(const SsimWindow& win) {
  std::vector<double> k(win.size);
  const double c = 0.5 * (win.size - 1);
  double s = 0;
  for (int i = 0; i < win.size; ++i) {
    k[i] = std::exp(-0.5 * (i - c) * (i - c) / (win.sigma * win.sigma));
    s += k[i];
  }
  for (double& v : k) v /= s;
  return k;
}

// Separable valid-region filtering: output is (w - n + 1) x (h - n + 1).
Grid<double> filter_valid(const Grid<double>& g, const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int ow = g.width() - n + 1, oh = g.height() - n + 1;
  Grid<double> rows(ow, g.height());
  for (int y = 0; y < g.height(); ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int i = 0; i < n; ++i) acc += k[i] * g(x + i, y);
      rows(x, y) = acc;
    }
  Grid<double> out(ow, oh);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int i = 0; i < n; ++i) acc += k[i] * rows(x, y + i);
      out(x, y) = acc;
    }
  return out;
}

}  // namespace

ImageQualityReport image_quality(const RgbImage& a, const RgbImage& b, SsimWindow window) {
  require(a.same_shape(b), "images differ in size");
  require(a.space() == b.space(), "images carry different colour-space tags");
  require(window.size >= 1 && window.sigma > 0, "invalid SSIM window");
  require(a.width() >= window.size && a.height() >= window.size, "image is smaller than the SSIM window");
  const int w = a.width(), h = a.height();

  long double se = 0;
  Grid<double> ya(w, h), yb(w, h);
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (int c = 0; c < 3; ++c) {
      require(a[i][c] >= 0 && a[i][c] <= 1 && b[i][c] >= 0 && b[i][c] <= 1,
              "image values must lie in [0, 1]");
      const double d = a[i][c] - b[i][c];
      se += d * d;
    }
    ya[i] = luminance(a[i]);
    yb[i] = luminance(b[i]);
  }
  ImageQualityReport r;
  r.rmse = std::sqrt(static_cast<double>(se / (3.0L * static_cast<long double>(a.size()))));
  r.psnr = psnr_from_rmse(r.rmse);

  const auto k = gaussian_window(window);
  Grid<double> aa(w, h), bb(w, h), ab(w, h);
  for (std::size_t i = 0; i < ya.size(); ++i) {
    aa[i] = ya[i] * ya[i];
    bb[i] = yb[i] * yb[i];
    ab[i] = ya[i] * yb[i];
  }
  const Grid<double> mu_a = filter_valid(ya, k), mu_b = filter_valid(yb, k);
  const Grid<double> e_aa = filter_valid(aa, k), e_bb = filter_valid(bb, k), e_ab = filter_valid(ab, k);
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double sum = 0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double va = e_aa[i] - ma * ma, vb = e_bb[i] - mb * mb, cov = e_ab[i] - ma * mb;
    sum += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  r.ssim = sum / static_cast<double>(mu_a.size());
  return r;
}

std::string to_json(const AngularErrorReport& r) {
  nlohmann::json j{{"thresholds", r.thresholds},
                   {"fractions", r.fractions},
                   {"mean_error", r.mean_error},
                   {"median_error", r.median_error}};
  return j.dump(2);
}

std::string to_json(const ImageQualityReport& r) {
  nlohmann::json j{{"ssim", r.ssim}, {"rmse", r.rmse}};
  j["psnr"] = std::isinf(r.psnr) ? nlohmann::json(nullptr) : nlohmann::json(r.psnr);
  return j.dump(2);
}

}  // namespace narrate
