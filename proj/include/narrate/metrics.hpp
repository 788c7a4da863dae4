#pragma once

#include <string>
#include <vector>

#include "narrate/raster.hpp"

namespace narrate {

inline const std::vector<double> kDefaultAngularThresholds{5, 15, 25, 30};

struct AngularErrorReport {
  std::vector<double> thresholds;  // degrees
  std::vector<double> fractions;   // share of pixels with error strictly below each threshold
  double mean_error = 0;           // degrees
  double median_error = 0;         // degrees
};

/// Per-pixel arccos(clamp(a.b)) over the mask intersection. Domain error if
/// the intersection is empty.
AngularErrorReport angular_error(const NormalMap& a, const NormalMap& b,
                                 const std::vector<double>& thresholds = kDefaultAngularThresholds);

struct SsimWindow {
  int size = 11;
  double sigma = 1.5;
};

struct ImageQualityReport {
  double ssim = 0;
  double psnr = 0;  // +inf when rmse == 0
  double rmse = 0;
};

/// RMSE over all channels, PSNR = 20 log10(1 / rmse), SSIM as the mean of
/// local Gaussian-window SSIM on Rec.709 luma (k1 = 0.01, k2 = 0.03, L = 1),
/// evaluated where the window fits inside the image. Values must lie in
/// [0, 1]; both images must share a colour-space tag.
ImageQualityReport image_quality(const RgbImage& a, const RgbImage& b, SsimWindow window = {});

double psnr_from_rmse(double rmse);

std::string to_json(const AngularErrorReport& r);
/// psnr is null when infinite.
std::string to_json(const ImageQualityReport& r);

}  // namespace narrate
