#include <json.hpp>

#include "narrate/io.hpp"
#include "narrate/mesh.hpp"

namespace narrate {

CameraPose camera_from_json(std::string_view json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::format, "camera JSON does not parse", e.what());
  }
  if (!j.is_object()) fail(ErrorCode::format, "camera JSON must be an object");
  CameraPose cam;
  try {
    cam.yaw = j.value("yaw", 0.0);
    cam.pitch = j.value("pitch", 0.0);
    cam.radius = j.value("radius", cam.radius);
    cam.fov_y = j.value("fov_y", cam.fov_y);
    cam.width = j.at("width").get<int>();
    cam.height = j.at("height").get<int>();
    if (j.contains("shift")) {
      const auto& s = j.at("shift");
      if (!s.is_array() || s.size() != 3) fail(ErrorCode::format, "camera shift must be [x, y, z]");
      cam.shift = {s[0].get<double>(), s[1].get<double>(), s[2].get<double>()};
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::format, "camera JSON has missing or mistyped fields", e.what());
  }
  cam.validate();
  return cam;
}

std::string camera_to_json(const CameraPose& cam) {
  nlohmann::json j{{"yaw", cam.yaw},       {"pitch", cam.pitch}, {"radius", cam.radius},
                   {"fov_y", cam.fov_y},   {"width", cam.width}, {"height", cam.height}};
  if (!(cam.shift == Vec3{})) j["shift"] = {cam.shift.x, cam.shift.y, cam.shift.z};
  return j.dump();
}

CameraPose read_camera(const std::filesystem::path& path) {
  const Bytes bytes = read_file(path);
  return camera_from_json(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

}  // namespace narrate
