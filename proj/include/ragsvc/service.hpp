#pragma once

#include <memory>
#include <string>

#include "ragsvc/engine.hpp"
#include "ragsvc/error.hpp"

namespace ragsvc {

/// HTTP status for an engine error.
int http_status_for(ErrorCode code);

/// {"error": {"code", "stage", "message"}}
std::string error_body(const Error& e);

/// JSON HTTP facade over an Engine:
///   POST /v1/collections/{name}/ingest  {path | url | text, metadata?}
///   POST /v1/collections/{name}/query   {question, k?, multi_query?, history?}
///   GET  /v1/health
class Service {
 public:
  Service(Engine& engine, ServiceConfig cfg);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds cfg.bind:cfg.port (port 0 picks a free port). Throws
  /// Error{IoError} when the address is unavailable.
  int bind();

  /// Serves until stop(). Call after bind().
  void listen();
  void stop();
  void wait_until_ready() const;
  int port() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace ragsvc
