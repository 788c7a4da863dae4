#include "narrate/relight.hpp"

#include <cmath>
#include <cstring>
#include <unordered_map>

namespace narrate {

EnvironmentLight EnvironmentLight::from_latlong(RgbImage radiance) {
  require(radiance.space() == ColorSpace::linear, "environment map must be linear radiance");
  require(radiance.height() > 0 && radiance.width() == 2 * radiance.height(),
          "lat-long environment map must be exactly twice as wide as tall");
  for (std::size_t i = 0; i < radiance.size(); ++i) {
    const Rgb& c = radiance[i];
    require(c.r >= 0 && c.g >= 0 && c.b >= 0, "environment radiance must be non-negative");
  }
  return EnvironmentLight(std::move(radiance));
}

EnvironmentLight EnvironmentLight::from_directionals(std::vector<DirectionalLight> lights) {
  for (const auto& l : lights) {
    require(std::abs(norm(l.direction) - 1.0) <= 1e-6, "light direction must be unit length");
    require(l.intensity.r >= 0 && l.intensity.g >= 0 && l.intensity.b >= 0,
            "light intensity must be non-negative");
  }
  return EnvironmentLight(std::move(lights));
}

EnvironmentLight EnvironmentLight::scaled(double alpha) const {
  require(alpha >= 0, "light scale must be non-negative");
  if (is_latlong()) {
    RgbImage img = latlong();
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = img[i] * alpha;
    return EnvironmentLight(std::move(img));
  }
  auto lights = directionals();
  for (auto& l : lights) l.intensity = l.intensity * alpha;
  return EnvironmentLight(std::move(lights));
}

Vec3 latlong_direction(int column, int row, int width, int height) {
  const double theta = kPi * (row + 0.5) / height;
  const double phi = 2 * kPi * (column + 0.5) / width - kPi;
  return {std::sin(theta) * std::sin(phi), std::cos(theta), std::sin(theta) * std::cos(phi)};
}

double latlong_solid_angle(int row, int width, int height) {
  const double theta = kPi * (row + 0.5) / height;
  return (kPi / height) * (2 * kPi / width) * std::sin(theta);
}

RgbImage downsample_latlong(const RgbImage& radiance, int height) {
  require(height > 0, "target height must be positive");
  if (radiance.height() <= height) return radiance;
  const int h = height, w = 2 * height;
  RgbImage out(w, h, radiance.space());
  // Solid-angle weighted box filter.
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int y0 = y * radiance.height() / h, y1 = (y + 1) * radiance.height() / h;
      const int x0 = x * radiance.width() / w, x1 = (x + 1) * radiance.width() / w;
      Rgb sum{};
      double wsum = 0;
      for (int sy = y0; sy < y1; ++sy) {
        const double sa = latlong_solid_angle(sy, radiance.width(), radiance.height());
        for (int sx = x0; sx < x1; ++sx) {
          sum += radiance(sx, sy) * sa;
          wsum += sa;
        }
      }
      out(x, y) = wsum > 0 ? sum * (1.0 / wsum) : Rgb{};
    }
  return out;
}

namespace {

struct Texel {
  Vec3 direction;
  Rgb weighted;  // L * dOmega
};

std::vector<Texel> texels(const RgbImage& env) {
  std::vector<Texel> out;
  for (int y = 0; y < env.height(); ++y) {
    const double sa = latlong_solid_angle(y, env.width(), env.height());
    for (int x = 0; x < env.width(); ++x) {
      const Rgb& l = env(x, y);
      if (l.r == 0 && l.g == 0 && l.b == 0) continue;
      out.push_back({latlong_direction(x, y, env.width(), env.height()), l * sa});
    }
  }
  return out;
}

struct VecHash {
  std::size_t operator()(const Vec3& v) const noexcept {
    std::uint64_t h = 1469598103934665603ull;
    for (double c : {v.x, v.y, v.z}) {
      std::uint64_t bits;
      std::memcpy(&bits, &c, sizeof bits);
      h = (h ^ bits) * 1099511628211ull;
    }
    return static_cast<std::size_t>(h);
  }
};

// Shading kernels shared by the public maps and relight_view, parameterized
// by the eye direction (the view vector in the light's frame).
class Shader {
 public:
  Shader(const EnvironmentLight& light, std::span<const double> exponents)
      : light_(light), exponents_(exponents.begin(), exponents.end()) {
    if (light.is_latlong()) texels_ = texels(light.latlong());
  }

  Rgb diffuse(const Vec3& n) const {
    Rgb acc{};
    if (!light_.is_latlong()) {
      for (const auto& l : light_.directionals()) acc += l.intensity * std::max(0.0, dot(n, l.direction));
      return acc;
    }
    for (const auto& t : texels_) {
      const double c = dot(n, t.direction);
      if (c > 0) acc += t.weighted * c;
    }
    return acc * (1.0 / kPi);
  }

  // One value per exponent, written to `out`.
  void specular(const Vec3& r, std::vector<Rgb>& out) const {
    out.assign(exponents_.size(), Rgb{});
    if (!light_.is_latlong()) {
      for (const auto& l : light_.directionals()) {
        const double c = dot(r, l.direction);
        if (c <= 0) continue;
        for (std::size_t k = 0; k < exponents_.size(); ++k)
          out[k] += l.intensity * std::pow(c, exponents_[k]);
      }
      return;
    }
    for (const auto& t : texels_) {
      const double c = dot(r, t.direction);
      if (c <= 0) continue;
      const double lc = std::log(c);
      for (std::size_t k = 0; k < exponents_.size(); ++k)
        out[k] += t.weighted * std::exp(exponents_[k] * lc);
    }
    for (std::size_t k = 0; k < exponents_.size(); ++k)
      out[k] = out[k] * ((exponents_[k] + 1) / (2 * kPi));
  }

 private:
  const EnvironmentLight& light_;
  std::vector<double> exponents_;
  std::vector<Texel> texels_;
};

void check_exponents(std::span<const double> exponents) {
  for (std::size_t k = 0; k < exponents.size(); ++k) {
    require(exponents[k] >= 1, "shininess exponents must be >= 1");
    require(k == 0 || exponents[k] > exponents[k - 1], "shininess exponents must strictly increase");
  }
}

Vec3 reflect_eye(const Vec3& n, const Vec3& eye) { return n * (2 * dot(n, eye)) - eye; }

// Light maps for normals expressed in the light frame, eye = view direction
// in the same frame.
LightMaps compute_maps(const NormalMap& normals, const EnvironmentLight& light,
                       std::span<const double> exponents, const Mat3& light_from_view) {
  check_exponents(exponents);
  const int w = normals.width(), h = normals.height();
  const Vec3 eye = light_from_view * Vec3{0, 0, 1};
  Shader shader(light, exponents);
  LightMaps maps{RgbImage(w, h, ColorSpace::linear), {}, normals.mask};
  for (double s : exponents) maps.speculars.push_back({s, RgbImage(w, h, ColorSpace::linear)});

  struct Cached {
    Rgb diffuse;
    std::vector<Rgb> spec;
  };
  std::unordered_map<Vec3, Cached, VecHash> cache;
  std::vector<Rgb> spec;
  for (std::size_t i = 0; i < normals.normals.size(); ++i) {
    if (!normals.mask[i]) continue;
    const Vec3 n = light_from_view * normals.normals[i];
    auto it = cache.find(n);
    if (it == cache.end()) {
      shader.specular(reflect_eye(n, eye), spec);
      it = cache.emplace(n, Cached{shader.diffuse(n), spec}).first;
    }
    maps.diffuse[i] = it->second.diffuse;
    for (std::size_t k = 0; k < exponents.size(); ++k) maps.speculars[k].map[i] = it->second.spec[k];
  }
  return maps;
}

}  // namespace

RgbImage diffuse_map(const NormalMap& normals, const EnvironmentLight& light) {
  return compute_maps(normals, light, {}, Mat3::identity()).diffuse;
}

std::vector<SpecularMap> specular_maps(const NormalMap& normals, const EnvironmentLight& light,
                                       std::span<const double> exponents) {
  return compute_maps(normals, light, exponents, Mat3::identity()).speculars;
}

LightMaps light_maps(const NormalMap& normals, const EnvironmentLight& light,
                     std::span<const double> exponents) {
  return compute_maps(normals, light, exponents, Mat3::identity());
}

RgbImage compose_relit(const LightMaps& maps, const RelitComposition& comp) {
  require(comp.specular_gains.size() == maps.speculars.size(),
          "specular gain count does not match the number of specular maps");
  require(comp.diffuse_gain >= 0, "diffuse gain must be non-negative");
  for (double k : comp.specular_gains) require(k >= 0, "specular gains must be non-negative");
  require(comp.albedo.space() == ColorSpace::linear, "albedo must be linear");
  require(comp.albedo.same_shape(maps.diffuse) && maps.diffuse.same_shape(maps.mask),
          "albedo and light maps differ in size");
  for (const auto& s : maps.speculars) require(s.map.same_shape(maps.diffuse), "light maps differ in size");

  RgbImage out(maps.diffuse.width(), maps.diffuse.height(), ColorSpace::linear);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!maps.mask[i]) continue;
    Rgb v = comp.albedo[i] * maps.diffuse[i] * comp.diffuse_gain;
    for (std::size_t k = 0; k < maps.speculars.size(); ++k)
      v += maps.speculars[k].map[i] * comp.specular_gains[k];
    out[i] = {std::max(0.0, v.r), std::max(0.0, v.g), std::max(0.0, v.b)};
  }
  return out;
}

RgbImage relight_view(const RenderOutput& fused_view, const RgbImage& albedo_view,
                      const EnvironmentLight& light, const RelightParams& params) {
  const NormalMap& n = fused_view.normal;
  require(fused_view.color.same_shape(n.normals) && fused_view.coverage.same_shape(n.normals) &&
              albedo_view.same_shape(n.normals),
          "fused view layers and albedo differ in size");
  const LightMaps maps = compute_maps(n, light, params.exponents, params.view_from_light.transposed());
  const RgbImage relit = compose_relit(
      maps, {as_linear(albedo_view), params.diffuse_gain, params.specular_gains});
  RgbImage out = as_linear(fused_view.color);
  for (std::size_t i = 0; i < out.size(); ++i)
    if (fused_view.coverage[i] && n.mask[i]) out[i] = relit[i];
  return out;
}

}  // namespace narrate
