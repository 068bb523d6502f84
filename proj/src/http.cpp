#include "ragsvc/http.hpp"

#include <httplib.h>

#include <algorithm>
#include <cctype>
#include <thread>

#include "ragsvc/error.hpp"
#include "ragsvc/log.hpp"

namespace ragsvc::http {

Url parse_url(const std::string& url) {
  Url out;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::BadRequest, "URL has no scheme: " + url);
  }
  out.scheme = url.substr(0, scheme_end);
  std::transform(out.scheme.begin(), out.scheme.end(), out.scheme.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (out.scheme != "http" && out.scheme != "https") {
    throw Error(ErrorCode::BadRequest, "unsupported URL scheme: " + out.scheme);
  }
  const auto rest = url.substr(scheme_end + 3);
  const auto path_start = rest.find_first_of("/?#");
  std::string authority = rest.substr(0, path_start);
  out.path = path_start == std::string::npos ? "/" : rest.substr(path_start);
  if (const auto hash = out.path.find('#'); hash != std::string::npos) {
    out.path.erase(hash);
  }
  if (out.path.empty() || out.path.front() != '/') out.path.insert(0, "/");
  if (const auto at = authority.rfind('@'); at != std::string::npos) {
    authority.erase(0, at + 1);
  }
  out.port = out.scheme == "https" ? 443 : 80;
  const auto colon = authority.rfind(':');
  if (colon != std::string::npos && authority.find(']') == std::string::npos) {
    const auto port_text = authority.substr(colon + 1);
    if (port_text.empty() ||
        !std::all_of(port_text.begin(), port_text.end(),
                     [](unsigned char c) { return std::isdigit(c); })) {
      throw Error(ErrorCode::BadRequest, "invalid port in URL: " + url);
    }
    out.port = std::stoi(port_text);
    authority.erase(colon);
  }
  if (authority.empty()) {
    throw Error(ErrorCode::BadRequest, "URL has no host: " + url);
  }
  std::transform(authority.begin(), authority.end(), authority.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  out.host = authority;
  return out;
}

Response send(const Request& request) {
  const Url url = parse_url(request.url);
  const std::string origin =
      url.scheme + "://" + url.host + ":" + std::to_string(url.port);
  httplib::Client client(origin);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(request.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(
      request.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  client.set_follow_location(false);

  httplib::Headers headers;
  for (const auto& [k, v] : request.headers) headers.emplace(k, v);

  httplib::Result result;
  if (request.method == "GET") {
    result = client.Get(url.path, headers);
  } else if (request.method == "POST") {
    result = client.Post(url.path, headers, request.body,
                         request.content_type.empty() ? "application/json"
                                                      : request.content_type);
  } else {
    throw Error(ErrorCode::BadRequest, "unsupported HTTP method " + request.method);
  }

  if (!result) {
    const auto err = result.error();
    const std::string what = httplib::to_string(err);
    if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read) {
      throw Error(ErrorCode::Timeout,
                  "request to " + url.host + " timed out (" + what + ")");
    }
    throw Error(ErrorCode::NetworkError, "request to " + url.host + " failed: " + what);
  }
  Response out;
  out.status = result->status;
  out.body = result->body;
  out.content_type = result->get_header_value("Content-Type");
  out.location = result->get_header_value("Location");
  return out;
}

Response send_with_retry(const Request& request, const RetryPolicy& policy) {
  auto backoff = policy.initial_backoff;
  for (int attempt = 1;; ++attempt) {
    const bool last = attempt >= policy.max_attempts;
    try {
      Response response = send(request);
      const bool retryable = response.status == 429 || response.status >= 500;
      if (!retryable || last) return response;
      log::logger()->warn("HTTP {} from {}, attempt {}/{}", response.status,
                          parse_url(request.url).host, attempt, policy.max_attempts);
    } catch (const Error& e) {
      if (last || e.code() == ErrorCode::BadRequest) throw;
      log::logger()->warn("transport error ({}), attempt {}/{}", e.what(), attempt,
                          policy.max_attempts);
    }
    std::this_thread::sleep_for(backoff);
    backoff *= 2;
  }
}

std::string excerpt(const std::string& body, std::size_t max_chars) {
  if (body.size() <= max_chars) return body;
  std::size_t cut = max_chars;
  while (cut > 0 && (static_cast<unsigned char>(body[cut]) & 0xC0) == 0x80) --cut;
  return body.substr(0, cut) + "...";
}

}  // namespace ragsvc::http
