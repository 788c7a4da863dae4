#include "narrate/mesh.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include "narrate/io.hpp"

namespace narrate {

void CameraPose::validate() const {
  require(std::isfinite(yaw) && std::isfinite(pitch), "camera angles must be finite");
  require(std::abs(pitch) < kPi / 2, "camera pitch must satisfy |pitch| < pi/2");
  require(radius > 0 && std::isfinite(radius), "camera radius must be positive");
  require(fov_y > 0 && fov_y < kPi, "camera fov_y must lie in (0, pi)");
  require(width > 0 && height > 0, "camera image size must be positive");
  check_dimensions(width, height);
}

Mat3 CameraPose::rotation() const {
  const Vec3 back{std::sin(yaw) * std::cos(pitch), std::sin(pitch), std::cos(yaw) * std::cos(pitch)};
  const Vec3 right = normalized(cross(Vec3{0, 1, 0}, back));
  const Vec3 up = cross(back, right);
  return Mat3::from_rows(right, up, back);
}

Vec3 CameraPose::position() const {
  const Vec3 orbit{radius * std::sin(yaw) * std::cos(pitch), radius * std::sin(pitch),
                   radius * std::cos(yaw) * std::cos(pitch)};
  return orbit + rotation().transposed() * shift;
}

double CameraPose::focal_px() const { return 0.5 * height / std::tan(0.5 * fov_y); }

Vec2 CameraPose::principal_point() const { return {0.5 * (width - 1), 0.5 * (height - 1)}; }

Vec3 CameraPose::to_camera(const Vec3& world) const {
  const Vec3 orbit{radius * std::sin(yaw) * std::cos(pitch), radius * std::sin(pitch),
                   radius * std::cos(yaw) * std::cos(pitch)};
  return rotation() * (world - orbit) - shift;
}

Vec3 CameraPose::to_world(const Vec3& camera) const {
  const Vec3 orbit{radius * std::sin(yaw) * std::cos(pitch), radius * std::sin(pitch),
                   radius * std::cos(yaw) * std::cos(pitch)};
  return rotation().transposed() * (camera + shift) + orbit;
}

Vec2 CameraPose::project(const Vec3& p) const {
  const double f = focal_px();
  const Vec2 c = principal_point();
  const double depth = -p.z;
  return {c.x + f * p.x / depth, c.y - f * p.y / depth};
}

Vec3 CameraPose::unproject(Vec2 pixel, double depth) const {
  const double f = focal_px();
  const Vec2 c = principal_point();
  return {(pixel.x - c.x) * depth / f, -(pixel.y - c.y) * depth / f, -depth};
}

CameraPose default_camera(int width, int height) {
  CameraPose cam;
  cam.width = width;
  cam.height = height;
  return cam;
}

double height_scale(const CameraPose& ref_cam) { return ref_cam.radius / ref_cam.focal_px(); }

FaceMesh build_mesh(const HeightField& height, const NormalMap& normals, const CameraPose& ref_cam,
                    double edge_jump) {
  ref_cam.validate();
  require(edge_jump > 0, "edge jump threshold must be positive");
  require(height.z.same_shape(normals.normals), "height field and normal map differ in size");
  require(height.mask == normals.mask, "height field and normal map masks differ");
  require(ref_cam.width == height.width() && ref_cam.height == height.height(),
          "reference camera size differs from the height field");
  if (height.mask.count() == 0) fail(ErrorCode::domain, "cannot build a mesh from an empty mask");

  const int w = height.width(), h = height.height();
  const double s = height_scale(ref_cam);
  FaceMesh mesh;
  mesh.ref_width = w;
  mesh.ref_height = h;
  Grid<int> vid(w, h, -1);
  std::vector<double> vertex_z;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!height.mask.test(x, y)) continue;
      const double depth = ref_cam.radius - s * height.z(x, y);
      if (!(depth > 0)) fail(ErrorCode::domain, "height field reaches behind the reference camera");
      vid(x, y) = static_cast<int>(mesh.vertices.size());
      vertex_z.push_back(height.z(x, y));
      const Vec2 px{static_cast<double>(x), static_cast<double>(y)};
      mesh.vertices.push_back(ref_cam.unproject(px, depth));
      mesh.texcoords.push_back(px);
      mesh.normals.push_back(normalized(normals.at(x, y)));
    }

  auto emit = [&](int a, int b, int c) {
    const double ha = vertex_z[a], hb = vertex_z[b], hc = vertex_z[c];
    if (std::max({ha, hb, hc}) - std::min({ha, hb, hc}) > edge_jump) return;
    mesh.triangles.push_back({a, b, c});
  };
  for (int y = 0; y + 1 < h; ++y)
    for (int x = 0; x + 1 < w; ++x) {
      const int p00 = vid(x, y), p10 = vid(x + 1, y), p01 = vid(x, y + 1), p11 = vid(x + 1, y + 1);
      const int present = (p00 >= 0) + (p10 >= 0) + (p01 >= 0) + (p11 >= 0);
      if (present == 4) {
        emit(p00, p01, p10);
        emit(p10, p01, p11);
      } else if (present == 3) {
        if (p11 < 0) emit(p00, p01, p10);
        else if (p00 < 0) emit(p10, p01, p11);
        else if (p10 < 0) emit(p00, p01, p11);
        else emit(p00, p11, p10);
      }
    }
  return mesh;
}

namespace {

// Per-pixel rasterization result: winning triangle and perspective-correct
// barycentric weights.
struct Fragment {
  int triangle = -1;
  double depth = std::numeric_limits<double>::infinity();
  double w0 = 0, w1 = 0, w2 = 0;
};

Grid<Fragment> rasterize(const FaceMesh& mesh, const CameraPose& ref_cam, const CameraPose& new_cam) {
  ref_cam.validate();
  new_cam.validate();
  if (mesh.empty()) fail(ErrorCode::contract, "cannot render an empty mesh");

  std::vector<Vec3> cam_pts(mesh.vertices.size());
  std::vector<Vec2> screen(mesh.vertices.size());
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    cam_pts[i] = new_cam.to_camera(ref_cam.to_world(mesh.vertices[i]));
    if (-cam_pts[i].z > 0) screen[i] = new_cam.project(cam_pts[i]);
  }

  constexpr double kNear = 1e-6;
  constexpr double kInsideTol = 1e-9;
  Grid<Fragment> frags(new_cam.width, new_cam.height);
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    const double d0 = -cam_pts[tri[0]].z, d1 = -cam_pts[tri[1]].z, d2 = -cam_pts[tri[2]].z;
    if (d0 <= kNear || d1 <= kNear || d2 <= kNear) continue;
    const Vec2 a = screen[tri[0]], b = screen[tri[1]], c = screen[tri[2]];
    const double area = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
    if (std::abs(area) < 1e-12) continue;
    const int x0 = std::max(0, static_cast<int>(std::ceil(std::min({a.x, b.x, c.x}) - 1e-7)));
    const int x1 = std::min(new_cam.width - 1, static_cast<int>(std::floor(std::max({a.x, b.x, c.x}) + 1e-7)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(std::min({a.y, b.y, c.y}) - 1e-7)));
    const int y1 = std::min(new_cam.height - 1, static_cast<int>(std::floor(std::max({a.y, b.y, c.y}) + 1e-7)));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const double px = x, py = y;
        const double l0 = ((b.x - px) * (c.y - py) - (b.y - py) * (c.x - px)) / area;
        const double l1 = ((c.x - px) * (a.y - py) - (c.y - py) * (a.x - px)) / area;
        const double l2 = 1.0 - l0 - l1;
        if (l0 < -kInsideTol || l1 < -kInsideTol || l2 < -kInsideTol) continue;
        const double q0 = l0 / d0, q1 = l1 / d1, q2 = l2 / d2;
        const double sum = q0 + q1 + q2;
        if (!(sum > 0)) continue;
        const double depth = 1.0 / sum;
        Fragment& f = frags(x, y);
        if (depth < f.depth) {
          f = {static_cast<int>(t), depth, q0 / sum, q1 / sum, q2 / sum};
        }
      }
  }
  return frags;
}

}  // namespace

RenderOutput render(const FaceMesh& mesh, const RgbImage& ref_image, const CameraPose& ref_cam,
                    const CameraPose& new_cam, Sampling sampling) {
  require(ref_image.width() == mesh.ref_width && ref_image.height() == mesh.ref_height,
          "reference image does not match the mesh texture space");
  const Grid<Fragment> frags = rasterize(mesh, ref_cam, new_cam);
  const Mat3 normal_xform = new_cam.rotation() * ref_cam.rotation().transposed();

  const int w = new_cam.width, h = new_cam.height;
  RenderOutput out{RgbImage(w, h, ref_image.space()), NormalMap(w, h), HeightField(w, h), Mask(w, h)};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const Fragment& f = frags(x, y);
      if (f.triangle < 0) continue;
      const auto& tri = mesh.triangles[static_cast<std::size_t>(f.triangle)];
      const Vec2 uv = mesh.texcoords[tri[0]] * f.w0 + mesh.texcoords[tri[1]] * f.w1 +
                      mesh.texcoords[tri[2]] * f.w2;
      out.color(x, y) = sampling == Sampling::nearest ? sample_nearest(ref_image, uv.x, uv.y)
                                                      : sample_bilinear(ref_image, uv.x, uv.y);
      const Vec3 n = mesh.normals[tri[0]] * f.w0 + mesh.normals[tri[1]] * f.w1 +
                     mesh.normals[tri[2]] * f.w2;
      const Vec3 rotated = normalized(normal_xform * n);
      if (norm(rotated) > 0) out.normal.set(x, y, rotated);
      out.depth.z(x, y) = f.depth;
      out.depth.mask.set(x, y);
      out.coverage.set(x, y);
    }
  // Keep the normal layer masked exactly where coverage is set.
  for (std::size_t i = 0; i < out.coverage.size(); ++i)
    if (out.coverage[i] && !out.normal.mask[i]) {
      out.coverage[i] = 0;
      out.depth.mask[i] = 0;
      out.depth.z[i] = 0;
      out.color[i] = {};
    }
  return out;
}

MotionField identity_flow(int width, int height) {
  MotionField f{Grid<Vec2>(width, height), Mask(width, height, true), width, height};
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) f.map(x, y) = {static_cast<double>(x), static_cast<double>(y)};
  return f;
}

MotionField mesh_flow(const FaceMesh& mesh, const CameraPose& ref_cam, const CameraPose& new_cam) {
  const Grid<Fragment> frags = rasterize(mesh, ref_cam, new_cam);
  MotionField flow{Grid<Vec2>(new_cam.width, new_cam.height), Mask(new_cam.width, new_cam.height),
                   mesh.ref_width, mesh.ref_height};
  for (int y = 0; y < new_cam.height; ++y)
    for (int x = 0; x < new_cam.width; ++x) {
      const Fragment& f = frags(x, y);
      if (f.triangle < 0) continue;
      const auto& tri = mesh.triangles[static_cast<std::size_t>(f.triangle)];
      flow.map(x, y) = mesh.texcoords[tri[0]] * f.w0 + mesh.texcoords[tri[1]] * f.w1 +
                       mesh.texcoords[tri[2]] * f.w2;
      flow.valid.set(x, y);
    }
  return flow;
}

namespace {

// Bilinear lookup of a field at continuous coordinates; neighbours with zero
// weight are not required to be valid.
std::optional<Vec2> sample_field(const MotionField& f, Vec2 at) {
  if (!std::isfinite(at.x) || !std::isfinite(at.y)) return std::nullopt;
  if (at.x < 0 || at.y < 0 || at.x > f.width() - 1 || at.y > f.height() - 1) return std::nullopt;
  const int x0 = static_cast<int>(std::floor(at.x)), y0 = static_cast<int>(std::floor(at.y));
  const double fx = at.x - x0, fy = at.y - y0;
  Vec2 acc{};
  for (int dy = 0; dy < 2; ++dy)
    for (int dx = 0; dx < 2; ++dx) {
      const double wgt = (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy);
      if (wgt == 0) continue;
      const int sx = x0 + dx, sy = y0 + dy;
      if (!f.valid.test_safe(sx, sy)) return std::nullopt;
      acc = acc + f.map(sx, sy) * wgt;
    }
  return acc;
}

}  // namespace

MotionField compose_flow(const MotionField& outer, const MotionField& inner, ComposeMode mode) {
  require(outer.map.same_shape(outer.valid) && inner.map.same_shape(inner.valid),
          "motion field layers differ in size");
  require(outer.source_width == inner.width() && outer.source_height == inner.height(),
          "outer flow's source frame does not match inner flow's target frame");
  const int w = outer.width(), h = outer.height();
  MotionField out{Grid<Vec2>(w, h), Mask(w, h), inner.source_width, inner.source_height};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!outer.valid.test(x, y)) continue;
      const Vec2 o = outer.map(x, y);
      if (mode == ComposeMode::resample) {
        if (auto v = sample_field(inner, o)) {
          out.map(x, y) = *v;
          out.valid.set(x, y);
        }
      } else {
        if (!inner.valid.test_safe(x, y)) continue;
        const Vec2 here{static_cast<double>(x), static_cast<double>(y)};
        out.map(x, y) = here + (o - here) + (inner.map(x, y) - here);
        out.valid.set(x, y);
      }
    }
  return out;
}

RgbImage warp_backward(const RgbImage& source, const MotionField& flow, Sampling sampling, Rgb fill,
                       Mask* coverage) {
  const int w = flow.width(), h = flow.height();
  RgbImage out(w, h, source.space(), fill);
  if (coverage) *coverage = Mask(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!flow.valid.test(x, y)) continue;
      const Vec2 s = flow.map(x, y);
      if (s.x < -0.5 || s.y < -0.5 || s.x > source.width() - 0.5 || s.y > source.height() - 0.5)
        continue;
      out(x, y) = sampling == Sampling::nearest ? sample_nearest(source, s.x, s.y)
                                                : sample_bilinear(source, s.x, s.y);
      if (coverage) coverage->set(x, y);
    }
  return out;
}

std::string obj_string(const FaceMesh& mesh) {
  if (mesh.empty() || mesh.vertices.empty()) fail(ErrorCode::contract, "cannot export an empty mesh");
  std::string out;
  out.reserve(mesh.vertices.size() * 96 + mesh.triangles.size() * 40);
  char buf[160];
  for (const auto& v : mesh.vertices) {
    std::snprintf(buf, sizeof buf, "v %.6f %.6f %.6f\n", v.x, v.y, v.z);
    out += buf;
  }
  for (const auto& t : mesh.texcoords) {
    std::snprintf(buf, sizeof buf, "vt %.6f %.6f\n", (t.x + 0.5) / mesh.ref_width,
                  1.0 - (t.y + 0.5) / mesh.ref_height);
    out += buf;
  }
  for (const auto& n : mesh.normals) {
    std::snprintf(buf, sizeof buf, "vn %.6f %.6f %.6f\n", n.x, n.y, n.z);
    out += buf;
  }
  for (const auto& t : mesh.triangles) {
    std::snprintf(buf, sizeof buf, "f %d/%d/%d %d/%d/%d %d/%d/%d\n", t[0] + 1, t[0] + 1, t[0] + 1,
                  t[1] + 1, t[1] + 1, t[1] + 1, t[2] + 1, t[2] + 1, t[2] + 1);
    out += buf;
  }
  return out;
}

void export_obj(const FaceMesh& mesh, const std::filesystem::path& path) {
  const std::string text = obj_string(mesh);
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace narrate
