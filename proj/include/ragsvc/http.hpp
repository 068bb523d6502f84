#pragma once

// Thin blocking HTTP client used by the web loader and the provider clients.
// Keeps cpp-httplib out of every other translation unit.

#include <chrono>
#include <string>
#include <utility>
#include <vector>

namespace ragsvc::http {

struct Url {
  std::string scheme;
  std::string host;
  int port = 0;
  std::string path;  // includes query, always starts with '/'
};

/// Throws Error{BadRequest} for anything that is not http(s)://host[:port][/path].
Url parse_url(const std::string& url);

struct Request {
  std::string method = "GET";
  std::string url;
  std::string body;
  std::string content_type;
  std::vector<std::pair<std::string, std::string>> headers;
  std::chrono::milliseconds timeout{30'000};
};

struct Response {
  int status = 0;
  std::string body;
  std::string content_type;
  std::string location;
};

/// Single request, no redirect following. Transport failures throw
/// Error{NetworkError}; read/connect timeouts throw Error{Timeout}.
Response send(const Request& request);

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{250};
};

/// Retries 429, 5xx and transport errors with exponential backoff. Other
/// statuses are returned to the caller unchanged.
Response send_with_retry(const Request& request, const RetryPolicy& policy);

/// First `max_chars` bytes of a response body, for error messages.
std::string excerpt(const std::string& body, std::size_t max_chars = 200);

}  // namespace ragsvc::http
