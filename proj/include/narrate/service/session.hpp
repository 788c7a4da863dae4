#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "narrate/io.hpp"
#include "narrate/relight.hpp"
#include "narrate/service/pipeline.hpp"

namespace narrate::service {

/// Raw uploaded files. portrait, normal and mask are required.
struct SessionAssets {
  Bytes portrait;
  Bytes normal;
  Bytes mask;
  std::optional<Bytes> albedo;
  std::optional<Bytes> coarse_depth;  // one-channel PFM, height-field units
  std::optional<std::string> ref_cam; // camera JSON
};

enum class Stage { integrate, mesh };
std::string_view to_string(Stage s) noexcept;
std::optional<Stage> parse_stage(std::string_view s);

enum class OutputLayer { fused, relit, hatch, normal, mesh_only, neural_only };
std::string_view to_string(OutputLayer o) noexcept;
std::optional<OutputLayer> parse_output(std::string_view s);

struct RenderParams {
  double yaw = 0;    // degrees, relative to the reference pose
  double pitch = 0;  // degrees
  std::string light = "loop";
  double kd = 1.0;
  std::vector<double> ks = kDefaultSpecularGains;
  OutputLayer output = OutputLayer::fused;

  /// Guardrails: |yaw| <= 90, |pitch| <= 45, gains >= 0, one gain per lobe.
  void validate() const;
  bool at_reference() const noexcept { return yaw == 0 && pitch == 0; }
  /// Canonical JSON used in cache keys.
  std::string canonical() const;
};

struct StoreConfig {
  std::filesystem::path root = "sessions";
  int max_dimension = kMaxDimension;
  std::size_t cache_size = 256;
};

struct StageResult {
  bool cached = false;
  std::string record;  // JSON
};

struct RenderResult {
  Bytes png;
  bool cache_hit = false;
  std::string key;
};

/// On-disk sessions under root/<id>/{manifest.json, assets/, derived/, cache/}.
/// Thread-safe: stage runs and uploads lock their session exclusively,
/// renders share it.
class SessionStore {
 public:
  explicit SessionStore(StoreConfig config);

  const StoreConfig& config() const noexcept { return config_; }

  /// Validates and persists the assets; the id is derived from their content,
  /// so re-uploading identical files returns the same session.
  std::string create_session(const SessionAssets& assets);
  bool exists(const std::string& id) const;
  std::string manifest(const std::string& id) const;
  std::filesystem::path session_dir(const std::string& id) const;

  StageResult run_stage(const std::string& id, Stage stage);
  RenderResult render_view(const std::string& id, const RenderParams& params);
  /// Stores a 3-channel lat-long PFM and returns its light id.
  std::string add_light(const std::string& id, std::span<const std::uint8_t> pfm);
  std::string mesh_obj(const std::string& id);

  /// Decoded inputs for a session whose integrate stage has run.
  ViewInputs load_view_inputs(const std::string& id) const;
  EnvironmentLight resolve_light(const std::string& id, std::string_view light) const;

 private:
  std::shared_ptr<std::shared_mutex> lock_for(const std::string& id);
  void check_id(const std::string& id) const;
  void evict_cache(const std::filesystem::path& cache_dir) const;

  StoreConfig config_;
  std::mutex locks_mutex_;
  std::map<std::string, std::shared_ptr<std::shared_mutex>> locks_;
};

}  // namespace narrate::service
