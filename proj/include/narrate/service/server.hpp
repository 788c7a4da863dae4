#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "narrate/service/session.hpp"

namespace narrate::service {

struct ServerConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  StoreConfig store;
};

/// HTTP status for an error code.
int http_status(ErrorCode code) noexcept;

/// {code, message, detail}
std::string error_json(ErrorCode code, std::string_view message, std::string_view detail);

/// Parses GET /render query parameters; validation error on malformed values.
RenderParams render_params_from_query(const std::multimap<std::string, std::string>& query);

class Server {
 public:
  explicit Server(ServerConfig config);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and serves until stop(); returns false if binding failed.
  bool listen();
  /// Binds to an ephemeral port; returns it (or -1).
  int bind_any_port();
  /// Serves on a socket bound by bind_any_port().
  bool listen_after_bind();
  void stop();

  SessionStore& store() noexcept { return store_; }

 private:
  struct Impl;
  ServerConfig config_;
  SessionStore store_;
  std::unique_ptr<Impl> impl_;
};

}  // namespace narrate::service
