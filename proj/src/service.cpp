#include "ragsvc/service.hpp"

#include <httplib.h>

#include <json.hpp>

#include "ragsvc/log.hpp"
#include "ragsvc/prompt.hpp"

namespace ragsvc {

namespace {

using nlohmann::json;

constexpr const char* kJson = "application/json";

Error bad_request(const std::string& message) {
  Error e(ErrorCode::BadRequest, message);
  e.with_stage("request");
  return e;
}

json parse_body(const httplib::Request& req) {
  try {
    json body = json::parse(req.body);
    if (!body.is_object()) throw bad_request("request body must be a JSON object");
    return body;
  } catch (const json::parse_error& e) {
    throw bad_request(std::string("malformed JSON body: ") + e.what());
  }
}

std::string string_field(const json& body, const char* key) {
  const auto& v = body.at(key);
  if (!v.is_string()) throw bad_request(std::string(key) + " must be a string");
  return v.get<std::string>();
}

IngestSource parse_ingest(const json& body) {
  IngestSource src;
  int present = 0;
  for (const char* key : {"path", "url", "text"}) {
    if (!body.contains(key)) continue;
    ++present;
    src.value = string_field(body, key);
    if (std::string_view(key) == "path") src.kind = IngestSource::Kind::Path;
    if (std::string_view(key) == "url") src.kind = IngestSource::Kind::Url;
    if (std::string_view(key) == "text") src.kind = IngestSource::Kind::Text;
  }
  if (present != 1) throw bad_request("exactly one of path, url or text is required");
  for (const auto& [key, value] : body.items()) {
    if (key != "path" && key != "url" && key != "text" && key != "metadata") {
      throw bad_request("unknown field '" + key + "'");
    }
  }
  if (body.contains("metadata")) {
    const auto& md = body.at("metadata");
    if (!md.is_object()) throw bad_request("metadata must be an object of strings");
    for (const auto& [k, v] : md.items()) {
      if (!v.is_string()) throw bad_request("metadata." + k + " must be a string");
      src.metadata[k] = v.get<std::string>();
    }
  }
  return src;
}

QueryOptions parse_query(const json& body, std::string& question) {
  if (!body.contains("question")) throw bad_request("question is required");
  question = string_field(body, "question");
  QueryOptions opts;
  for (const auto& [key, value] : body.items()) {
    if (key == "question" || key == "collection") continue;
    if (key == "k") {
      if (!value.is_number_unsigned() || value.get<std::size_t>() == 0) {
        throw bad_request("k must be a positive integer");
      }
      opts.k = value.get<std::size_t>();
    } else if (key == "multi_query") {
      if (!value.is_boolean()) throw bad_request("multi_query must be true or false");
      opts.multi_query = value.get<bool>();
    } else if (key == "history") {
      if (!value.is_array()) throw bad_request("history must be an array");
      for (const auto& m : value) {
        if (!m.is_object() || !m.contains("role") || !m.contains("content") ||
            !m.at("role").is_string() || !m.at("content").is_string()) {
          throw bad_request("history entries need string role and content");
        }
        const auto role = m.at("role").get<std::string>();
        if (role != "user" && role != "assistant" && role != "system") {
          throw bad_request("history role must be user, assistant or system");
        }
        opts.history.push_back({role, m.at("content").get<std::string>()});
      }
    } else {
      throw bad_request("unknown field '" + key + "'");
    }
  }
  return opts;
}

json answer_json(const Answer& a) {
  json sources = json::array();
  for (const auto& s : a.sources) {
    sources.push_back({{"source", s.source}, {"seq", s.seq}, {"score", s.score}});
  }
  return {{"answer", a.text},
          {"sources", sources},
          {"prompt_tokens_est", a.prompt_tokens_est},
          {"warnings", a.warnings}};
}

}  // namespace

int http_status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::BadRequest:
    case ErrorCode::ValidationError:
    case ErrorCode::EmptyInput:
    case ErrorCode::InvalidConfig:
      return 400;
    case ErrorCode::NotFound:
      return 404;
    case ErrorCode::EmptyStore:
      return 409;
    case ErrorCode::FileNotFound:
    case ErrorCode::DecodeError:
    case ErrorCode::NetworkError:
    case ErrorCode::ContentTypeError:
    case ErrorCode::ParseError:
      return 422;
    case ErrorCode::ProviderError:
    case ErrorCode::Timeout:
    case ErrorCode::MalformedResponse:
      return 502;
    case ErrorCode::BudgetExhausted:
      return 507;
    default:
      return 500;
  }
}

std::string error_body(const Error& e) {
  return json{{"error",
               {{"code", std::string(to_string(e.code()))},
                {"stage", e.stage()},
                {"message", e.what()}}}}
      .dump();
}

struct Service::Impl {
  Engine& engine;
  ServiceConfig cfg;
  httplib::Server server;
  int port = 0;

  Impl(Engine& eng, ServiceConfig c) : engine(eng), cfg(std::move(c)) {}

  template <typename F>
  void guarded(httplib::Response& res, F&& f) {
    try {
      f();
    } catch (const Error& e) {
      res.status = http_status_for(e.code());
      res.set_content(error_body(e), kJson);
      log::logger()->warn("request failed with {}: {}", res.status, e.what());
    } catch (const std::exception& e) {
      Error wrapped(ErrorCode::IoError, e.what());
      wrapped.with_stage("internal");
      res.status = 500;
      res.set_content(error_body(wrapped), kJson);
      log::logger()->error("internal error: {}", e.what());
    }
  }

  void routes() {
    server.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes), sizeof(yes));
    });
    server.set_post_routing_handler([this](const httplib::Request&, httplib::Response& res) {
      if (!cfg.cors_origin.empty()) {
        res.set_header("Access-Control-Allow-Origin", cfg.cors_origin);
      }
    });
    server.Options(R"(/v1/.*)", [this](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.status = 204;
    });
    server.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] {
        json cols = json::array();
        for (const auto& s : engine.status()) {
          cols.push_back({{"name", s.name},
                          {"chunk_count", s.chunk_count},
                          {"dim", s.dim ? json(*s.dim) : json(nullptr)}});
        }
        res.set_content(json{{"status", "ok"}, {"collections", cols}}.dump(), kJson);
      });
    });
    server.Post(R"(/v1/collections/([^/]+)/ingest)",
                [this](const httplib::Request& req, httplib::Response& res) {
                  guarded(res, [&] {
                    const std::string name = req.matches[1];
                    if (!engine.has_collection(name)) {
                      throw Error(ErrorCode::NotFound, "unknown collection '" + name + "'")
                          .with_stage("request");
                    }
                    const IngestSource src = parse_ingest(parse_body(req));
                    const IngestResult r = engine.ingest(name, src);
                    res.set_content(json{{"doc_id", r.doc_ids.empty() ? "" : r.doc_ids.front()},
                                         {"chunk_count", r.chunk_count}}
                                        .dump(),
                                    kJson);
                  });
                });
    server.Post(R"(/v1/collections/([^/]+)/query)",
                [this](const httplib::Request& req, httplib::Response& res) {
                  guarded(res, [&] {
                    const std::string name = req.matches[1];
                    if (!engine.has_collection(name)) {
                      throw Error(ErrorCode::NotFound, "unknown collection '" + name + "'")
                          .with_stage("request");
                    }
                    const json body = parse_body(req);
                    if (body.contains("collection") &&
                        (!body.at("collection").is_string() ||
                         body.at("collection").get<std::string>() != name)) {
                      throw bad_request("collection in body does not match the URL");
                    }
                    std::string question;
                    const QueryOptions opts = parse_query(body, question);
                    res.set_content(answer_json(engine.query(name, question, opts)).dump(),
                                    kJson);
                  });
                });
    server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
      if (!res.body.empty()) return;
      Error e(res.status == 404 ? ErrorCode::NotFound : ErrorCode::BadRequest,
              res.status == 404 ? "no route for " + req.method + " " + req.path
                                : "request rejected with HTTP " + std::to_string(res.status));
      e.with_stage("request");
      res.set_content(error_body(e), kJson);
    });
  }
};

Service::Service(Engine& engine, ServiceConfig cfg)
    : impl_(std::make_unique<Impl>(engine, std::move(cfg))) {
  impl_->routes();
}

Service::~Service() { stop(); }

int Service::bind() {
  auto& s = impl_->server;
  if (impl_->cfg.port == 0) {
    impl_->port = s.bind_to_any_port(impl_->cfg.bind);
  } else if (s.bind_to_port(impl_->cfg.bind, impl_->cfg.port)) {
    impl_->port = impl_->cfg.port;
  } else {
    impl_->port = -1;
  }
  if (impl_->port <= 0) {
    throw Error(ErrorCode::IoError, "cannot listen on " + impl_->cfg.bind + ":" +
                                        std::to_string(impl_->cfg.port));
  }
  log::logger()->info("listening on {}:{}", impl_->cfg.bind, impl_->port);
  return impl_->port;
}

void Service::listen() { impl_->server.listen_after_bind(); }

void Service::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

void Service::wait_until_ready() const { impl_->server.wait_until_ready(); }

int Service::port() const { return impl_->port; }

}  // namespace ragsvc
