#pragma once

#include <span>
#include <variant>
#include <vector>

#include "narrate/mesh.hpp"
#include "narrate/raster.hpp"

namespace narrate {

struct DirectionalLight {
  Vec3 direction;  // unit vector toward the light, camera frame
  Rgb intensity;
};

/// Incident light: an equirectangular radiance map or a set of directional
/// lights.
///
/// Lat-long layout: row j has polar angle theta = pi (j + 0.5) / H measured
/// from +y, column i has azimuth phi = 2 pi (i + 0.5) / W - pi with phi = 0 at
/// the centre column, and the direction is
/// (sin theta sin phi, cos theta, sin theta cos phi); the map centre looks
/// along +z, toward the camera.
class EnvironmentLight {
 public:
  static EnvironmentLight from_latlong(RgbImage radiance);
  static EnvironmentLight from_directionals(std::vector<DirectionalLight> lights);

  bool is_latlong() const noexcept { return std::holds_alternative<RgbImage>(data_); }
  const RgbImage& latlong() const { return std::get<RgbImage>(data_); }
  const std::vector<DirectionalLight>& directionals() const {
    return std::get<std::vector<DirectionalLight>>(data_);
  }

  EnvironmentLight scaled(double alpha) const;

 private:
  explicit EnvironmentLight(std::variant<RgbImage, std::vector<DirectionalLight>> d)
      : data_(std::move(d)) {}
  std::variant<RgbImage, std::vector<DirectionalLight>> data_;
};

Vec3 latlong_direction(int column, int row, int width, int height);
double latlong_solid_angle(int row, int width, int height);
/// Box-filters a lat-long map down to `height` rows (no-op if already smaller).
RgbImage downsample_latlong(const RgbImage& radiance, int height);

struct SpecularMap {
  double exponent = 1;
  RgbImage map;
};

struct LightMaps {
  RgbImage diffuse;
  std::vector<SpecularMap> speculars;
  Mask mask;
};

inline const std::vector<double> kDefaultShininess{1, 8, 32, 128};
inline const std::vector<double> kDefaultSpecularGains{0.25, 0.25, 0.25, 0.25};

/// Directional: sum I max(0, n.d). Lat-long: (1/pi) sum L max(0, n.w) dOmega.
/// Unmasked pixels are zero.
RgbImage diffuse_map(const NormalMap& normals, const EnvironmentLight& light);

/// Phong lobes around r = 2 (n.e) n - e with e = (0, 0, 1). Directional:
/// sum I max(0, r.d)^s. Lat-long: ((s + 1) / 2 pi) sum L max(0, r.w)^s dOmega.
/// Exponents must be >= 1 and strictly increasing.
std::vector<SpecularMap> specular_maps(const NormalMap& normals, const EnvironmentLight& light,
                                       std::span<const double> exponents);

LightMaps light_maps(const NormalMap& normals, const EnvironmentLight& light,
                     std::span<const double> exponents = kDefaultShininess);

struct RelitComposition {
  RgbImage albedo;  // linear
  double diffuse_gain = 1.0;
  std::vector<double> specular_gains = kDefaultSpecularGains;
};

/// albedo * (k_d D) + sum_j k_j S_j, clamped at zero; zero outside the mask.
RgbImage compose_relit(const LightMaps& maps, const RelitComposition& comp);

struct RelightParams {
  double diffuse_gain = 1.0;
  std::vector<double> specular_gains = kDefaultSpecularGains;
  std::vector<double> exponents = kDefaultShininess;
  /// Rotation taking light-frame directions into the view's camera frame.
  /// Identity when the light is specified relative to this view.
  Mat3 view_from_light = Mat3::identity();
};

/// Relights a fused view from its own (warped, never re-estimated) normal
/// layer. Pixels outside coverage keep the view colour, linearized. Output
/// is linear.
RgbImage relight_view(const RenderOutput& fused_view, const RgbImage& albedo_view,
                      const EnvironmentLight& light, const RelightParams& params = {});

}  // namespace narrate
