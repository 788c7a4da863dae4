#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "narrate/raster.hpp"

namespace narrate {

/// Pinhole camera orbiting the world origin (the face centroid).
///
/// World frame: +y up. At yaw = pitch = 0 the camera sits at (0, 0, radius)
/// looking down -z, so its frame coincides with the world frame translated by
/// `radius`. Camera frame: +x right, +y up, +z toward the viewer; visible
/// points have negative z. Pixel centres sit at integer coordinates and the
/// principal point is ((width - 1) / 2, (height - 1) / 2).
struct CameraPose {
  double yaw = 0;     // radians, about world +y
  double pitch = 0;   // radians, positive looks from above
  double radius = 2.7;
  double fov_y = radians(12.0);
  int width = 0;
  int height = 0;
  /// Extra translation of the camera in its own frame, world units.
  Vec3 shift{};

  void validate() const;

  /// World-to-camera rotation.
  Mat3 rotation() const;
  /// Camera centre in world coordinates.
  Vec3 position() const;
  double focal_px() const;
  Vec2 principal_point() const;

  Vec3 to_camera(const Vec3& world) const;
  Vec3 to_world(const Vec3& camera) const;
  /// Pixel coordinates of a camera-frame point; requires -z > 0.
  Vec2 project(const Vec3& camera) const;
  /// Camera-frame point on the ray through `pixel` at view depth `depth` (> 0).
  Vec3 unproject(Vec2 pixel, double depth) const;
};

CameraPose default_camera(int width, int height);

/// JSON object {yaw, pitch, radius, fov_y, width, height}; angles in radians.
/// Optional "shift": [x, y, z].
CameraPose camera_from_json(std::string_view json_text);
std::string camera_to_json(const CameraPose& cam);
CameraPose read_camera(const std::filesystem::path& path);

struct FaceMesh {
  std::vector<Vec3> vertices;                // reference camera frame
  std::vector<std::array<int, 3>> triangles; // counter-clockwise seen from the camera
  std::vector<Vec2> texcoords;               // reference image pixel coordinates
  std::vector<Vec3> normals;                 // reference camera frame, unit length
  int ref_width = 0;
  int ref_height = 0;

  bool empty() const noexcept { return triangles.empty(); }
};

/// World units per HeightField unit: the footprint of one pixel at the orbit
/// distance, so lifted geometry keeps its aspect ratio.
double height_scale(const CameraPose& ref_cam);

inline constexpr double kDefaultEdgeJump = 3.0;

/// One vertex per masked pixel (row-major) at view depth radius - s * z.
/// Each 2x2 cell yields two triangles (one when only three corners are
/// masked); triangles whose height values span more than `edge_jump` are
/// dropped.
FaceMesh build_mesh(const HeightField& height, const NormalMap& normals, const CameraPose& ref_cam,
                    double edge_jump = kDefaultEdgeJump);

enum class Sampling { nearest, bilinear };

struct RenderOutput {
  RgbImage color;
  NormalMap normal;   // new camera frame
  HeightField depth;  // view depth along -z of the new camera, world units
  Mask coverage;
};

/// Z-buffered rasterization with perspective-correct interpolation. Ties keep
/// the earlier triangle.
RenderOutput render(const FaceMesh& mesh, const RgbImage& ref_image, const CameraPose& ref_cam,
                    const CameraPose& new_cam, Sampling sampling = Sampling::nearest);

/// Backward correspondence: for each target pixel, absolute coordinates in
/// the source frame. Coordinates may fall outside the source frame.
struct MotionField {
  Grid<Vec2> map;
  Mask valid;
  int source_width = 0;
  int source_height = 0;

  int width() const noexcept { return map.width(); }
  int height() const noexcept { return map.height(); }
};

MotionField identity_flow(int width, int height);

MotionField mesh_flow(const FaceMesh& mesh, const CameraPose& ref_cam, const CameraPose& new_cam);

enum class ComposeMode { resample, additive };

/// `outer` maps target pixels into the frame `inner` is defined on; the
/// result maps target pixels into `inner`'s source frame.
///  resample: inner evaluated bilinearly at outer(x).
///  additive: x + (outer(x) - x) + (inner(x) - x), displacements summed
///            at the same pixel.
MotionField compose_flow(const MotionField& outer, const MotionField& inner,
                         ComposeMode mode = ComposeMode::resample);

/// Pulls `source` through a backward field. Invalid or out-of-frame pixels
/// receive `fill` and are cleared in `coverage` when given.
RgbImage warp_backward(const RgbImage& source, const MotionField& flow, Sampling sampling,
                       Rgb fill = {}, Mask* coverage = nullptr);

/// Wavefront OBJ text with v/vt/vn/f records; vt normalized to [0, 1] with v up.
std::string obj_string(const FaceMesh& mesh);
void export_obj(const FaceMesh& mesh, const std::filesystem::path& path);

}  // namespace narrate
