#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "narrate/blend.hpp"
#include "narrate/mesh.hpp"
#include "narrate/relight.hpp"
#include "narrate/stylize.hpp"

namespace narrate::service {

/// Everything a view needs, decoded. The portrait stays in sRGB; albedo is
/// linear; normals are cleared outside the face mask.
struct ViewInputs {
  RgbImage portrait;
  RgbImage albedo;
  NormalMap normals;
  Mask face;
  HeightField height;
  CameraPose ref_cam;
};

struct ViewLayers {
  CameraPose cam;
  RenderOutput mesh;        // mesh render of the linear portrait
  RgbImage albedo;          // mesh render of the albedo, linear
  RgbImage destination;     // linear; the neural layer or its stand-in
  Mask region;              // blend region
  RenderOutput fused;       // color linear, normal blended
};

/// Reference camera rotated by the given yaw/pitch offsets (degrees).
CameraPose view_camera(const CameraPose& ref_cam, double yaw_deg, double pitch_deg);

/// Mesh render at the requested pose, destination layer and Poisson fusion.
/// At the reference pose the destination is the portrait itself; elsewhere
/// it is the mesh render, the portrait's non-face pixels in place, and a
/// pull-push fill for the remaining holes.
ViewLayers compose_view(const ViewInputs& in, const FaceMesh& mesh, double yaw_deg, double pitch_deg);

/// Shipped presets: loop, split, rembrandt and off. Directions are in the
/// reference camera frame.
std::optional<EnvironmentLight> light_preset(std::string_view name);
std::vector<std::string> light_preset_names();

/// "dir:x,y,z,r,g,b[;x,y,z,r,g,b...]"; directions are normalized.
std::optional<EnvironmentLight> parse_directional_spec(std::string_view spec);

/// Rotation taking reference-camera directions into `cam`'s frame.
Mat3 view_from_reference(const CameraPose& ref_cam, const CameraPose& cam);

inline constexpr int kServiceEnvironmentHeight = 32;

/// Relit fused view, linear.
RgbImage relit_layer(const ViewLayers& v, const EnvironmentLight& light, const CameraPose& ref_cam,
                     double kd, const std::vector<double>& ks);

/// Hatching over the view's depth with diffuse shading from `light`.
RgbImage hatch_layer(const ViewLayers& v, const EnvironmentLight& light, const CameraPose& ref_cam,
                     const HatchParams& params = {});

}  // namespace narrate::service
