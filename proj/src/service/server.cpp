#include "narrate/service/server.hpp"

#include <charconv>
#include <cmath>

#include <httplib.h>
#include <json.hpp>

namespace narrate::service {

using nlohmann::json;

int http_status(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::format:
    case ErrorCode::contract: return 400;
    case ErrorCode::not_found: return 404;
    case ErrorCode::precondition: return 409;
    case ErrorCode::limit: return 413;
    case ErrorCode::unsupported:
    case ErrorCode::domain:
    case ErrorCode::validation: return 422;
    case ErrorCode::convergence:
    case ErrorCode::io: return 500;
  }
  return 500;
}

std::string error_json(ErrorCode code, std::string_view message, std::string_view detail) {
  return json{{"code", std::string(to_string(code))}, {"message", std::string(message)},
              {"detail", std::string(detail)}}
      .dump();
}

namespace {

double parse_double(const std::string& name, const std::string& v) {
  double out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size() || !std::isfinite(out))
    fail(ErrorCode::validation, "query parameter " + name + " is not a number", v);
  return out;
}

void send_error(httplib::Response& res, ErrorCode code, std::string_view message, std::string_view detail) {
  res.status = http_status(code);
  res.set_content(error_json(code, message, detail), "application/json");
}

template <class F>
auto guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const Error& e) {
      send_error(res, e.code(), e.what(), e.detail());
    } catch (const std::exception& e) {
      send_error(res, ErrorCode::io, "internal error", e.what());
    }
  };
}

Bytes to_bytes(const std::string& s) { return Bytes(s.begin(), s.end()); }

}  // namespace

RenderParams render_params_from_query(const std::multimap<std::string, std::string>& query) {
  RenderParams p;
  for (const auto& [k, v] : query) {
    if (k == "yaw") {
      p.yaw = parse_double(k, v);
    } else if (k == "pitch") {
      p.pitch = parse_double(k, v);
    } else if (k == "kd") {
      p.kd = parse_double(k, v);
    } else if (k == "ks") {
      p.ks.clear();
      std::size_t start = 0;
      while (start <= v.size()) {
        const std::size_t comma = v.find(',', start);
        const std::size_t end = comma == std::string::npos ? v.size() : comma;
        p.ks.push_back(parse_double(k, v.substr(start, end - start)));
        if (comma == std::string::npos) break;
        start = comma + 1;
      }
    } else if (k == "light") {
      p.light = v;
    } else if (k == "output") {
      const auto o = parse_output(v);
      if (!o) fail(ErrorCode::validation, "unknown output layer", v);
      p.output = *o;
    } else {
      fail(ErrorCode::validation, "unknown query parameter", k);
    }
  }
  p.validate();
  return p;
}

struct Server::Impl {
  httplib::Server http;
};

Server::Server(ServerConfig config)
    : config_(std::move(config)), store_(config_.store), impl_(std::make_unique<Impl>()) {
  auto& http = impl_->http;
  // Largest accepted request body: three 16-bit RGB images at the size limit.
  const std::size_t max_side = static_cast<std::size_t>(config_.store.max_dimension);
  http.set_payload_max_length(std::max<std::size_t>(64u << 20, 3 * 6 * max_side * max_side));

  http.set_post_routing_handler([](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", "*");
  });
  http.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
  http.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (!res.body.empty()) return;
    const ErrorCode code = res.status == 413 ? ErrorCode::limit
                           : res.status == 404 ? ErrorCode::not_found
                                               : ErrorCode::format;
    res.set_content(error_json(code, httplib::status_message(res.status), ""), "application/json");
  });

  http.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"status":"ok"})", "application/json");
  });

  http.Post("/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
    if (!req.is_multipart_form_data())
      fail(ErrorCode::format, "expected multipart/form-data with the session assets");
    SessionAssets a;
    auto field = [&](const char* name) -> std::optional<Bytes> {
      if (!req.has_file(name)) return std::nullopt;
      return to_bytes(req.get_file_value(name).content);
    };
    for (const auto& [name, file] : req.files)
      if (name != "portrait" && name != "normal" && name != "mask" && name != "albedo" &&
          name != "coarse_depth" && name != "ref_cam")
        fail(ErrorCode::validation, "unknown asset field", name);
    a.portrait = field("portrait").value_or(Bytes{});
    a.normal = field("normal").value_or(Bytes{});
    a.mask = field("mask").value_or(Bytes{});
    a.albedo = field("albedo");
    a.coarse_depth = field("coarse_depth");
    if (req.has_file("ref_cam")) a.ref_cam = req.get_file_value("ref_cam").content;
    const std::string id = store_.create_session(a);
    res.status = 201;
    res.set_content(json{{"id", id}}.dump(), "application/json");
  }));

  http.Get(R"(/sessions/([0-9a-f]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
    res.set_content(store_.manifest(req.matches[1]), "application/json");
  }));

  http.Post(R"(/sessions/([0-9a-f]+)/stages/([a-z]+))",
            guarded([this](const httplib::Request& req, httplib::Response& res) {
              const auto stage = parse_stage(req.matches[2].str());
              if (!stage) fail(ErrorCode::not_found, "unknown stage", req.matches[2].str());
              const StageResult r = store_.run_stage(req.matches[1], *stage);
              res.set_content(json{{"stage", std::string(to_string(*stage))},
                                   {"cached", r.cached},
                                   {"record", json::parse(r.record)}}
                                  .dump(),
                              "application/json");
            }));

  http.Get(R"(/sessions/([0-9a-f]+)/render)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const RenderParams p = render_params_from_query(req.params);
    const RenderResult r = store_.render_view(req.matches[1], p);
    res.set_header("X-Cache", r.cache_hit ? "hit" : "miss");
    res.set_header("ETag", "\"" + r.key + "\"");
    res.set_content(std::string(r.png.begin(), r.png.end()), "image/png");
  }));

  http.Post(R"(/sessions/([0-9a-f]+)/lights)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    std::string body = req.body;
    if (req.is_multipart_form_data()) {
      if (req.files.size() != 1) fail(ErrorCode::format, "expected exactly one PFM file");
      body = req.files.begin()->second.content;
    }
    if (body.empty()) fail(ErrorCode::format, "empty light upload");
    const Bytes b = to_bytes(body);
    const std::string light_id = store_.add_light(req.matches[1], b);
    res.status = 201;
    res.set_content(json{{"light_id", light_id}}.dump(), "application/json");
  }));

  http.Get(R"(/sessions/([0-9a-f]+)/mesh)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    res.set_content(store_.mesh_obj(req.matches[1]), "model/obj");
  }));
}

Server::~Server() { stop(); }

bool Server::listen() { return impl_->http.listen(config_.host, config_.port); }

int Server::bind_any_port() { return impl_->http.bind_to_any_port(config_.host); }

bool Server::listen_after_bind() { return impl_->http.listen_after_bind(); }

void Server::stop() {
  if (impl_) impl_->http.stop();
}

}  // namespace narrate::service
