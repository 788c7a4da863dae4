#include "narrate/service/pipeline.hpp"

#include <charconv>
#include <cmath>

namespace narrate::service {

CameraPose view_camera(const CameraPose& ref_cam, double yaw_deg, double pitch_deg) {
  CameraPose cam = ref_cam;
  cam.yaw += radians(yaw_deg);
  cam.pitch += radians(pitch_deg);
  cam.validate();
  return cam;
}

Mat3 view_from_reference(const CameraPose& ref_cam, const CameraPose& cam) {
  return cam.rotation() * ref_cam.rotation().transposed();
}

ViewLayers compose_view(const ViewInputs& in, const FaceMesh& mesh, double yaw_deg, double pitch_deg) {
  const bool reference = yaw_deg == 0 && pitch_deg == 0;
  ViewLayers v;
  v.cam = view_camera(in.ref_cam, yaw_deg, pitch_deg);
  const RgbImage portrait = as_linear(in.portrait);
  v.mesh = render(mesh, portrait, in.ref_cam, v.cam, Sampling::bilinear);
  v.albedo = render(mesh, in.albedo, in.ref_cam, v.cam, Sampling::bilinear).color;

  NormalMap dest_normal;
  if (reference) {
    v.destination = portrait;
    dest_normal = in.normals;
  } else {
    const int w = v.cam.width, h = v.cam.height;
    RgbImage layer(w, h, ColorSpace::linear);
    Mask known(w, h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        if (v.mesh.coverage.test(x, y)) {
          layer(x, y) = v.mesh.color(x, y);
          known.set(x, y);
        } else if (x < portrait.width() && y < portrait.height() && !in.face.test(x, y)) {
          layer(x, y) = portrait(x, y);
          known.set(x, y);
        }
      }
    v.destination = pull_push_fill(layer, known);
    dest_normal = v.mesh.normal;
  }

  v.region = face_region(v.mesh.coverage, 2);
  v.fused = v.mesh;
  v.fused.color = blend(v.destination, v.mesh.color, v.region);
  v.fused.normal = blend(dest_normal, v.mesh.normal, v.region);
  // Relighting and hatching only act where the mesh landed.
  for (std::size_t i = 0; i < v.fused.normal.mask.size(); ++i)
    if (!v.fused.coverage[i]) {
      v.fused.normal.normals[i] = {};
      v.fused.normal.mask[i] = 0;
    }
  return v;
}

std::vector<std::string> light_preset_names() { return {"loop", "split", "rembrandt", "off"}; }

std::optional<EnvironmentLight> light_preset(std::string_view name) {
  const Rgb white{1, 1, 1};
  if (name == "loop")
    return EnvironmentLight::from_directionals({{normalized({0.35, 0.45, 0.82}), white},
                                                {normalized({-0.5, 0.1, 0.86}), white * 0.25}});
  if (name == "split")
    return EnvironmentLight::from_directionals({{normalized({0.98, 0.1, 0.17}), white}});
  if (name == "rembrandt")
    return EnvironmentLight::from_directionals({{normalized({0.6, 0.5, 0.62}), white},
                                                {normalized({-0.55, 0.1, 0.83}), white * 0.2}});
  if (name == "off") return EnvironmentLight::from_directionals({});
  return std::nullopt;
}

namespace {

std::optional<std::vector<double>> parse_numbers(std::string_view s) {
  std::vector<double> out;
  while (!s.empty()) {
    const std::size_t comma = s.find(',');
    const std::string_view tok = s.substr(0, comma);
    double v = 0;
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || ptr != tok.data() + tok.size() || !std::isfinite(v)) return std::nullopt;
    out.push_back(v);
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return out;
}

}  // namespace

std::optional<EnvironmentLight> parse_directional_spec(std::string_view spec) {
  if (!spec.starts_with("dir:")) return std::nullopt;
  spec.remove_prefix(4);
  std::vector<DirectionalLight> lights;
  while (!spec.empty()) {
    const std::size_t semi = spec.find(';');
    const auto nums = parse_numbers(spec.substr(0, semi));
    if (!nums || nums->size() != 6) return std::nullopt;
    const Vec3 d{(*nums)[0], (*nums)[1], (*nums)[2]};
    if (norm(d) == 0) return std::nullopt;
    const Rgb c{(*nums)[3], (*nums)[4], (*nums)[5]};
    if (c.r < 0 || c.g < 0 || c.b < 0) return std::nullopt;
    lights.push_back({normalized(d), c});
    if (semi == std::string_view::npos) break;
    spec.remove_prefix(semi + 1);
  }
  if (lights.empty()) return std::nullopt;
  return EnvironmentLight::from_directionals(std::move(lights));
}

RgbImage relit_layer(const ViewLayers& v, const EnvironmentLight& light, const CameraPose& ref_cam,
                     double kd, const std::vector<double>& ks) {
  RelightParams p;
  p.diffuse_gain = kd;
  p.specular_gains = ks;
  p.view_from_light = view_from_reference(ref_cam, v.cam);
  return relight_view(v.fused, v.albedo, light, p);
}

RgbImage hatch_layer(const ViewLayers& v, const EnvironmentLight& light, const CameraPose& ref_cam,
                     const HatchParams& params) {
  const int w = v.cam.width, h = v.cam.height;
  RenderOutput white = v.fused;
  white.color = RgbImage(w, h, ColorSpace::linear, Rgb{1, 1, 1});
  RelightParams p;
  p.specular_gains.assign(p.exponents.size(), 0.0);
  p.view_from_light = view_from_reference(ref_cam, v.cam);
  const RgbImage shading = relight_view(white, white.color, light, p);

  // View-space height in pixel units from the depth layer.
  const double s = height_scale(v.cam);
  HeightField hz(w, h);
  for (std::size_t i = 0; i < hz.z.size(); ++i)
    if (v.fused.normal.mask[i]) {
      hz.z[i] = -v.fused.depth.z[i] / s;
      hz.mask[i] = 1;
    }
  return hatch(hz, shading, params).image;
}

}  // namespace narrate::service
