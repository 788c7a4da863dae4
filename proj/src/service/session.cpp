#include "narrate/service/session.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <sstream>

#include <json.hpp>

#include "narrate/integrate.hpp"
#include "narrate/service/hash.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace narrate::service {

namespace {

constexpr int kManifestSchema = 1;
constexpr const char* kPipelineVersion = "narrate-render-1";

std::string now_utc() {
  const auto now = std::chrono::system_clock::now();
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count();
  const std::time_t t = static_cast<std::time_t>(ms / 1000);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms % 1000));
  return out;
}

std::span<const std::uint8_t> as_bytes(const std::string& s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

json read_json(const fs::path& path) {
  const Bytes b = read_file(path);
  try {
    return json::parse(b.begin(), b.end());
  } catch (const json::exception& e) {
    fail(ErrorCode::format, "corrupt JSON file", path.string() + ": " + e.what());
  }
}

void write_json_atomic(const fs::path& path, const json& j) {
  write_file_atomic(path, as_bytes(j.dump(2) + "\n"));
}

std::string dims(int w, int h) { return std::to_string(w) + "x" + std::to_string(h); }

void check_upload_size(std::string_view name, int w, int h, int max_dimension) {
  if (w > max_dimension || h > max_dimension)
    fail(ErrorCode::limit, std::string(name) + " exceeds the maximum image dimension",
         dims(w, h) + " > " + std::to_string(max_dimension));
}

template <class F>
auto decode_asset(std::string_view name, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.code(), std::string(name) + ": " + e.what(), e.detail());
  }
}

IntegrationConfig stage_integration_config() { return IntegrationConfig{}; }

json integration_config_json(const IntegrationConfig& c) {
  return {{"prior_weight", c.prior_weight}, {"nz_threshold", c.nz_threshold},
          {"solver", c.solver == SolverKind::cg ? "cg" : "direct"},
          {"cg_tol", c.cg_tol}, {"cg_max_iter", c.cg_max_iter},
          {"gauge", c.gauge == Gauge::mean_zero ? "mean_zero" : "prior_anchored"}};
}

}  // namespace

std::string_view to_string(Stage s) noexcept { return s == Stage::integrate ? "integrate" : "mesh"; }

std::optional<Stage> parse_stage(std::string_view s) {
  if (s == "integrate") return Stage::integrate;
  if (s == "mesh") return Stage::mesh;
  return std::nullopt;
}

std::string_view to_string(OutputLayer o) noexcept {
  switch (o) {
    case OutputLayer::fused: return "fused";
    case OutputLayer::relit: return "relit";
    case OutputLayer::hatch: return "hatch";
    case OutputLayer::normal: return "normal";
    case OutputLayer::mesh_only: return "mesh-only";
    case OutputLayer::neural_only: return "neural-only";
  }
  return "fused";
}

std::optional<OutputLayer> parse_output(std::string_view s) {
  for (OutputLayer o : {OutputLayer::fused, OutputLayer::relit, OutputLayer::hatch, OutputLayer::normal,
                        OutputLayer::mesh_only, OutputLayer::neural_only})
    if (s == to_string(o)) return o;
  return std::nullopt;
}

void RenderParams::validate() const {
  if (!std::isfinite(yaw) || std::abs(yaw) > 90)
    fail(ErrorCode::validation, "yaw outside the [-90, 90] degree guardrail", std::to_string(yaw));
  if (!std::isfinite(pitch) || std::abs(pitch) > 45)
    fail(ErrorCode::validation, "pitch outside the [-45, 45] degree guardrail", std::to_string(pitch));
  if (!std::isfinite(kd) || kd < 0) fail(ErrorCode::validation, "kd must be non-negative");
  if (ks.size() != kDefaultShininess.size())
    fail(ErrorCode::validation, "ks needs one gain per specular lobe",
         "expected " + std::to_string(kDefaultShininess.size()) + ", got " + std::to_string(ks.size()));
  for (double k : ks)
    if (!std::isfinite(k) || k < 0) fail(ErrorCode::validation, "ks gains must be non-negative");
  if (light.empty()) fail(ErrorCode::validation, "light must not be empty");
}

std::string RenderParams::canonical() const {
  json j{{"yaw", yaw}, {"pitch", pitch}, {"light", light}, {"kd", kd}, {"ks", ks},
         {"output", std::string(to_string(output))}};
  return j.dump();
}

SessionStore::SessionStore(StoreConfig config) : config_(std::move(config)) {
  require(config_.max_dimension > 0 && config_.max_dimension <= kMaxDimension,
          "max dimension must lie in [1, " + std::to_string(kMaxDimension) + "]");
  require(config_.cache_size > 0, "cache size must be positive");
  fs::create_directories(config_.root);
}

fs::path SessionStore::session_dir(const std::string& id) const { return config_.root / id; }

void SessionStore::check_id(const std::string& id) const {
  const bool well_formed = !id.empty() && id.size() <= 64 &&
                           std::all_of(id.begin(), id.end(), [](char c) {
                             return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
                           });
  if (!well_formed || !fs::exists(session_dir(id) / "manifest.json"))
    fail(ErrorCode::not_found, "no such session", id);
}

bool SessionStore::exists(const std::string& id) const {
  try {
    check_id(id);
    return true;
  } catch (const Error&) {
    return false;
  }
}

std::shared_ptr<std::shared_mutex> SessionStore::lock_for(const std::string& id) {
  std::lock_guard g(locks_mutex_);
  auto& slot = locks_[id];
  if (!slot) slot = std::make_shared<std::shared_mutex>();
  return slot;
}

std::string SessionStore::create_session(const SessionAssets& assets) {
  if (assets.portrait.empty()) fail(ErrorCode::validation, "portrait asset is required");
  if (assets.normal.empty()) fail(ErrorCode::validation, "normal asset is required");
  if (assets.mask.empty()) fail(ErrorCode::validation, "mask asset is required");

  const RgbImage portrait = decode_asset("portrait", [&] { return decode_rgb_png(assets.portrait); });
  check_upload_size("portrait", portrait.width(), portrait.height(), config_.max_dimension);
  const NormalMap normals = decode_asset("normal", [&] { return decode_normal_png(assets.normal); });
  check_upload_size("normal", normals.width(), normals.height(), config_.max_dimension);
  const Mask mask = decode_asset("mask", [&] { return decode_mask_png(assets.mask); });
  check_upload_size("mask", mask.width(), mask.height(), config_.max_dimension);

  const int w = portrait.width(), h = portrait.height();
  auto agree = [&](std::string_view name, int aw, int ah) {
    if (aw != w || ah != h)
      fail(ErrorCode::validation, "asset dimensions disagree: " + std::string(name) + " vs portrait",
           std::string(name) + " " + dims(aw, ah) + ", portrait " + dims(w, h));
  };
  agree("normal", normals.width(), normals.height());
  agree("mask", mask.width(), mask.height());
  if (assets.albedo) {
    const RgbImage albedo = decode_asset("albedo", [&] { return decode_rgb_png(*assets.albedo); });
    check_upload_size("albedo", albedo.width(), albedo.height(), config_.max_dimension);
    agree("albedo", albedo.width(), albedo.height());
  }
  if (assets.coarse_depth) {
    const PfmImage depth = decode_asset("coarse_depth", [&] { return decode_pfm(*assets.coarse_depth); });
    if (!std::holds_alternative<HeightField>(depth))
      fail(ErrorCode::validation, "coarse_depth must be a one-channel PFM");
    const auto& d = std::get<HeightField>(depth);
    check_upload_size("coarse_depth", d.width(), d.height(), config_.max_dimension);
    agree("coarse_depth", d.width(), d.height());
  }
  if (!normals.satisfies_invariants(1e-3))
    fail(ErrorCode::validation, "normal map has non-unit vectors inside its mask");
  if ((normals.mask & mask).count() == 0)
    fail(ErrorCode::validation, "normal map and face mask share no pixels");

  const CameraPose ref_cam = assets.ref_cam ? camera_from_json(*assets.ref_cam) : default_camera(w, h);
  if (ref_cam.width != w || ref_cam.height != h)
    fail(ErrorCode::validation, "asset dimensions disagree: ref_cam vs portrait",
         "ref_cam " + dims(ref_cam.width, ref_cam.height) + ", portrait " + dims(w, h));
  const json cam_json = json::parse(camera_to_json(ref_cam));

  struct File {
    const char* name;
    const char* file;
    const Bytes* bytes;
  };
  std::vector<File> files{{"portrait", "portrait.png", &assets.portrait},
                          {"normal", "normal.png", &assets.normal},
                          {"mask", "mask.png", &assets.mask},
                          {"albedo", "albedo.png", assets.albedo ? &*assets.albedo : &assets.portrait}};
  if (assets.coarse_depth) files.push_back({"coarse_depth", "coarse_depth.pfm", &*assets.coarse_depth});

  json asset_json = json::object();
  std::string identity;
  for (const File& f : files) {
    const std::string h = sha256_hex(*f.bytes);
    asset_json[f.name] = {{"file", std::string("assets/") + f.file}, {"sha256", h}};
    identity += std::string(f.name) + ":" + h + "\n";
  }
  asset_json["albedo"]["default"] = !assets.albedo.has_value();
  identity += "albedo_default:" + std::to_string(!assets.albedo.has_value()) + "\n";
  identity += "ref_cam:" + cam_json.dump() + "\n";
  const std::string id = sha256_hex(identity).substr(0, 32);

  auto lock = lock_for(id);
  std::unique_lock guard(*lock);
  const fs::path dir = session_dir(id);
  const fs::path manifest_path = dir / "manifest.json";
  const std::string now = now_utc();
  if (fs::exists(manifest_path)) {
    json m = read_json(manifest_path);
    m["updated"] = now;
    write_json_atomic(manifest_path, m);
    return id;
  }
  fs::create_directories(dir / "assets");
  fs::create_directories(dir / "derived");
  fs::create_directories(dir / "cache");
  for (const File& f : files) write_file_atomic(dir / "assets" / f.file, *f.bytes);
  json m{{"schema", kManifestSchema}, {"id", id},       {"created", now},
         {"updated", now},            {"width", w},     {"height", h},
         {"ref_cam", cam_json},       {"assets", asset_json},
         {"stages", json::object()},  {"lights", json::object()}};
  write_json_atomic(manifest_path, m);
  return id;
}

std::string SessionStore::manifest(const std::string& id) const {
  check_id(id);
  return read_json(session_dir(id) / "manifest.json").dump(2);
}

namespace {

struct DecodedAssets {
  RgbImage portrait;
  RgbImage albedo;
  NormalMap normals;  // cleared outside the face mask
  Mask face;
  std::optional<HeightField> coarse_depth;
  CameraPose ref_cam;
};

DecodedAssets decode_assets(const fs::path& dir, const json& m) {
  DecodedAssets a;
  const auto& assets = m.at("assets");
  auto path = [&](const char* name) { return dir / assets.at(name).at("file").get<std::string>(); };
  a.portrait = read_rgb_png(path("portrait"));
  a.albedo = as_linear(read_rgb_png(path("albedo")));
  a.face = read_mask_png(path("mask"));
  a.normals = read_normal_png(path("normal"));
  for (std::size_t i = 0; i < a.normals.mask.size(); ++i)
    if (!a.face[i]) {
      a.normals.normals[i] = {};
      a.normals.mask[i] = 0;
    }
  if (assets.contains("coarse_depth")) a.coarse_depth = read_height_pfm(path("coarse_depth"));
  a.ref_cam = camera_from_json(m.at("ref_cam").dump());
  return a;
}

std::string input_hash_for_integrate(const json& m) {
  const auto& a = m.at("assets");
  std::string s = "normal:" + a.at("normal").at("sha256").get<std::string>() +
                  "\nmask:" + a.at("mask").at("sha256").get<std::string>();
  if (a.contains("coarse_depth")) s += "\ncoarse_depth:" + a.at("coarse_depth").at("sha256").get<std::string>();
  return sha256_hex(s);
}

}  // namespace

StageResult SessionStore::run_stage(const std::string& id, Stage stage) {
  check_id(id);
  auto lock = lock_for(id);
  std::unique_lock guard(*lock);
  const fs::path dir = session_dir(id);
  const fs::path manifest_path = dir / "manifest.json";
  json m = read_json(manifest_path);
  json& stages = m["stages"];

  std::string config_hash, input_hash;
  if (stage == Stage::integrate) {
    config_hash = sha256_hex(integration_config_json(stage_integration_config()).dump());
    input_hash = input_hash_for_integrate(m);
  } else {
    if (!stages.contains("integrate"))
      fail(ErrorCode::precondition, "mesh stage requires the integrate stage", id);
    config_hash = sha256_hex(json{{"edge_jump", kDefaultEdgeJump}}.dump());
    input_hash = sha256_hex("height:" + stages["integrate"].at("sha256").get<std::string>() +
                            "\nnormal:" + m["assets"]["normal"]["sha256"].get<std::string>() +
                            "\nmask:" + m["assets"]["mask"]["sha256"].get<std::string>() +
                            "\nref_cam:" + m["ref_cam"].dump());
  }
  const std::string key(to_string(stage));
  if (stages.contains(key)) {
    const json& rec = stages[key];
    if (rec.value("config_hash", "") == config_hash && rec.value("input_hash", "") == input_hash &&
        fs::exists(dir / rec.at("output").get<std::string>()))
      return {true, rec.dump()};
  }

  const DecodedAssets a = decode_assets(dir, m);
  json rec{{"config_hash", config_hash}, {"input_hash", input_hash}};
  try {
    if (stage == Stage::integrate) {
      const IntegrationConfig cfg = stage_integration_config();
      DepthPrior prior;
      if (a.coarse_depth)
        prior = prior_from_depth(*a.coarse_depth, discontinuity_pixels(a.normals, cfg.nz_threshold),
                                 cfg.prior_weight);
      IntegrationReport report;
      const HeightField height = integrate(a.normals, prior, cfg, &report);
      const Bytes pfm = encode_pfm(height);
      write_file_atomic(dir / "derived" / "height.pfm", pfm);
      rec["output"] = "derived/height.pfm";
      rec["sha256"] = sha256_hex(pfm);
      rec["config"] = integration_config_json(cfg);
      rec["iterations"] = report.iterations;
      rec["relative_residual"] = report.relative_residual;
      rec["prior_samples"] = prior.size();
    } else {
      HeightField height = read_height_pfm(dir / stages["integrate"].at("output").get<std::string>());
      height.mask = a.normals.mask;
      const FaceMesh mesh = build_mesh(height, a.normals, a.ref_cam);
      const std::string obj = obj_string(mesh);
      write_file_atomic(dir / "derived" / "mesh.obj", as_bytes(obj));
      rec["output"] = "derived/mesh.obj";
      rec["sha256"] = sha256_hex(obj);
      rec["vertices"] = mesh.vertices.size();
      rec["triangles"] = mesh.triangles.size();
    }
  } catch (const Error& e) {
    throw Error(e.code(), key + " stage failed: " + e.what(), e.detail());
  }
  const std::string now = now_utc();
  rec["completed_at"] = now;
  stages[key] = rec;
  // A new height field invalidates the mesh built from the old one.
  if (stage == Stage::integrate) stages.erase("mesh");
  m["updated"] = now;
  write_json_atomic(manifest_path, m);
  return {false, rec.dump()};
}

ViewInputs SessionStore::load_view_inputs(const std::string& id) const {
  check_id(id);
  const fs::path dir = session_dir(id);
  const json m = read_json(dir / "manifest.json");
  if (!m.at("stages").contains("integrate"))
    fail(ErrorCode::precondition, "render requires the integrate and mesh stages", id);
  DecodedAssets a = decode_assets(dir, m);
  ViewInputs in;
  in.height = read_height_pfm(dir / m["stages"]["integrate"].at("output").get<std::string>());
  in.height.mask = a.normals.mask;
  for (std::size_t i = 0; i < in.height.z.size(); ++i)
    if (!in.height.mask[i]) in.height.z[i] = 0;
  in.portrait = std::move(a.portrait);
  in.albedo = std::move(a.albedo);
  in.normals = std::move(a.normals);
  in.face = std::move(a.face);
  in.ref_cam = a.ref_cam;
  return in;
}

EnvironmentLight SessionStore::resolve_light(const std::string& id, std::string_view light) const {
  if (auto preset = light_preset(light)) return *preset;
  if (light.starts_with("dir:")) {
    if (auto d = parse_directional_spec(light)) return *d;
    fail(ErrorCode::validation, "malformed directional light list", std::string(light));
  }
  const json m = read_json(session_dir(id) / "manifest.json");
  const std::string key(light);
  if (!m.at("lights").contains(key)) fail(ErrorCode::validation, "unknown light", key);
  RgbImage env = read_rgb_pfm(session_dir(id) / m["lights"][key].at("file").get<std::string>());
  return EnvironmentLight::from_latlong(downsample_latlong(env, kServiceEnvironmentHeight));
}

void SessionStore::evict_cache(const fs::path& cache_dir) const {
  std::vector<std::pair<fs::file_time_type, fs::path>> entries;
  std::error_code ec;
  for (const auto& e : fs::directory_iterator(cache_dir, ec))
    if (e.is_regular_file() && e.path().extension() == ".png")
      entries.emplace_back(e.last_write_time(ec), e.path());
  if (entries.size() <= config_.cache_size) return;
  std::sort(entries.begin(), entries.end());
  for (std::size_t i = 0; i + config_.cache_size < entries.size(); ++i) fs::remove(entries[i].second, ec);
}

RenderResult SessionStore::render_view(const std::string& id, const RenderParams& params) {
  params.validate();
  check_id(id);
  auto lock = lock_for(id);
  std::shared_lock guard(*lock);
  const fs::path dir = session_dir(id);
  const json m = read_json(dir / "manifest.json");
  const bool passthrough = params.output == OutputLayer::neural_only && params.at_reference();
  if (!passthrough && !m.at("stages").contains("mesh"))
    fail(ErrorCode::precondition, "render requires the integrate and mesh stages", id);

  json key_json{{"version", kPipelineVersion}, {"params", json::parse(params.canonical())},
                {"assets", m.at("assets")}, {"ref_cam", m.at("ref_cam")}};
  if (!passthrough) {
    key_json["height"] = m["stages"]["integrate"].at("sha256");
    key_json["mesh"] = m["stages"]["mesh"].at("sha256");
    if (m.at("lights").contains(params.light)) key_json["light"] = m["lights"][params.light].at("sha256");
  }
  const std::string key = sha256_hex(key_json.dump());
  const fs::path cached = dir / "cache" / (key + ".png");
  if (fs::exists(cached)) {
    try {
      return {read_file(cached), true, key};
    } catch (const Error&) {
      // evicted between the check and the read; recompute
    }
  }

  Bytes png;
  if (passthrough) {
    png = read_file(dir / m["assets"]["portrait"].at("file").get<std::string>());
  } else {
    const EnvironmentLight light = resolve_light(id, params.light);
    const ViewInputs in = load_view_inputs(id);
    const FaceMesh mesh = build_mesh(in.height, in.normals, in.ref_cam);
    const ViewLayers v = compose_view(in, mesh, params.yaw, params.pitch);
    switch (params.output) {
      case OutputLayer::fused: png = encode_rgb_png(v.fused.color); break;
      case OutputLayer::mesh_only: png = encode_rgb_png(v.mesh.color); break;
      case OutputLayer::neural_only: png = encode_rgb_png(v.destination); break;
      case OutputLayer::normal: png = encode_normal_png(v.fused.normal); break;
      case OutputLayer::relit:
        png = encode_rgb_png(relit_layer(v, light, in.ref_cam, params.kd, params.ks));
        break;
      case OutputLayer::hatch: png = encode_rgb_png(hatch_layer(v, light, in.ref_cam)); break;
    }
  }
  write_file_atomic(cached, png);
  evict_cache(dir / "cache");
  return {std::move(png), false, key};
}

std::string SessionStore::add_light(const std::string& id, std::span<const std::uint8_t> pfm) {
  check_id(id);
  const PfmImage img = decode_asset("light", [&] { return decode_pfm(pfm); });
  if (!std::holds_alternative<RgbImage>(img))
    fail(ErrorCode::validation, "environment light must be a 3-channel PFM");
  const RgbImage& env = std::get<RgbImage>(img);
  check_upload_size("light", env.width(), env.height(), config_.max_dimension);
  if (env.width() != 2 * env.height())
    fail(ErrorCode::validation, "lat-long environment must be twice as wide as tall",
         dims(env.width(), env.height()));
  for (std::size_t i = 0; i < env.size(); ++i)
    if (env[i].r < 0 || env[i].g < 0 || env[i].b < 0)
      fail(ErrorCode::validation, "environment radiance must be non-negative");

  const std::string h = sha256_hex(pfm);
  const std::string light_id = "env-" + h.substr(0, 16);
  auto lock = lock_for(id);
  std::unique_lock guard(*lock);
  const fs::path dir = session_dir(id);
  json m = read_json(dir / "manifest.json");
  if (!m["lights"].contains(light_id)) {
    fs::create_directories(dir / "assets" / "lights");
    const std::string file = "assets/lights/" + light_id + ".pfm";
    write_file_atomic(dir / file, pfm);
    m["lights"][light_id] = {{"file", file}, {"sha256", h}};
    m["updated"] = now_utc();
    write_json_atomic(dir / "manifest.json", m);
  }
  return light_id;
}

std::string SessionStore::mesh_obj(const std::string& id) {
  check_id(id);
  auto lock = lock_for(id);
  std::shared_lock guard(*lock);
  const fs::path dir = session_dir(id);
  const json m = read_json(dir / "manifest.json");
  if (!m.at("stages").contains("mesh")) fail(ErrorCode::precondition, "mesh stage has not run", id);
  const Bytes b = read_file(dir / m["stages"]["mesh"].at("output").get<std::string>());
  return std::string(b.begin(), b.end());
}

}  // namespace narrate::service
