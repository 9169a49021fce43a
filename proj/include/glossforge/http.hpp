#pragma once

#include <chrono>
#include <cstdlib>
#include <optional>
#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "glossforge/error.hpp"

namespace glossforge::http {

/// "http://host:8080/v1/chat" -> {"http://host:8080", "/v1/chat"}.
struct Endpoint {
  std::string origin;
  std::string path;

  static Endpoint parse(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw Error(Errc::config, "endpoint URL needs a scheme: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    Endpoint e;
    e.origin = url.substr(0, path_start);
    e.path = path_start == std::string::npos ? "/" : url.substr(path_start);
    if (e.origin.size() <= scheme_end + 3) throw Error(Errc::config, "endpoint URL has no host: " + url);
    return e;
  }

  std::string url() const { return origin + path; }
};

inline std::optional<std::string> env(const char* name) {
  const char* v = std::getenv(name);
  if (!v || !*v) return std::nullopt;
  return std::string(v);
}

/// POSTs JSON and parses a JSON response. Transport errors and non-2xx
/// statuses raise Errc::backend naming the endpoint.
class JsonClient {
 public:
  JsonClient(const std::string& url, std::optional<std::string> bearer_token = std::nullopt,
             std::chrono::milliseconds timeout = std::chrono::seconds{60})
      : endpoint_(Endpoint::parse(url)), token_(std::move(bearer_token)), timeout_(timeout) {}

  nlohmann::json post(const nlohmann::json& body) const {
    httplib::Client cli(endpoint_.origin);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
    cli.set_connection_timeout(secs.count(), static_cast<time_t>(usecs.count()));
    cli.set_read_timeout(secs.count(), static_cast<time_t>(usecs.count()));
    cli.set_write_timeout(secs.count(), static_cast<time_t>(usecs.count()));
    httplib::Headers headers;
    if (token_) headers.emplace("Authorization", "Bearer " + *token_);
    auto res = cli.Post(endpoint_.path, headers, body.dump(), "application/json");
    if (!res) throw Error(Errc::backend, "backend unreachable: " + endpoint_.url() + " (" + httplib::to_string(res.error()) + ")");
    if (res->status < 200 || res->status >= 300)
      throw Error(Errc::backend, "backend " + endpoint_.url() + " returned HTTP " + std::to_string(res->status) + ": " +
                                     res->body.substr(0, 200));
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::backend, "backend " + endpoint_.url() + " returned invalid JSON: " + e.what());
    }
  }

  const Endpoint& endpoint() const { return endpoint_; }
  void set_timeout(std::chrono::milliseconds t) { timeout_ = t; }

 private:
  Endpoint endpoint_;
  std::optional<std::string> token_;
  std::chrono::milliseconds timeout_;
};

}  // namespace glossforge::http
