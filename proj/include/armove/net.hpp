#pragma once

// Real HTTP transports. Kept out of the other headers so only translation
// units that actually talk to the network compile httplib.

#include <memory>
#include <string>

#include "armove/common.hpp"
#include "armove/geo.hpp"
#include "armove/llm.hpp"
#include "httplib.h"

namespace armove::net {

inline void split_base_url(const std::string& base, std::string& host_part,
                           std::string& path_prefix) {
  // httplib wants scheme://host[:port] separate from the path.
  auto scheme_end = base.find("://");
  std::size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  auto slash = base.find('/', host_start);
  if (slash == std::string::npos) {
    host_part = base;
    path_prefix.clear();
  } else {
    host_part = base.substr(0, slash);
    path_prefix = base.substr(slash);
    while (!path_prefix.empty() && path_prefix.back() == '/') path_prefix.pop_back();
  }
}

class HttplibChatTransport : public llm::HttpTransport {
public:
  explicit HttplibChatTransport(const std::string& base_url) {
    split_base_url(base_url, host_, prefix_);
    client_ = std::make_unique<httplib::Client>(host_);
    client_->set_connection_timeout(10, 0);
    client_->set_read_timeout(120, 0);
  }

  llm::HttpResult post(const std::string& path, const std::string& body,
                       const std::string& bearer_token) override {
    httplib::Headers headers;
    if (!bearer_token.empty())
      headers.emplace("Authorization", "Bearer " + bearer_token);
    auto res = client_->Post(prefix_ + path, headers, body, "application/json");
    llm::HttpResult out;
    if (!res) {
      out.timeout = true;
      return out;
    }
    out.status = res->status;
    out.body = res->body;
    return out;
  }

private:
  std::string host_;
  std::string prefix_;
  std::unique_ptr<httplib::Client> client_;
};

inline std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

/// Builds the live chat backend from ARMOVE_API_BASE / ARMOVE_API_KEY.
inline std::shared_ptr<llm::Backend> make_live_backend() {
  std::string base = env_or("ARMOVE_API_BASE", "");
  if (base.empty())
    throw Error("live backend requires ARMOVE_API_BASE to be set");
  llm::LiveConfig cfg;
  cfg.api_key = env_or("ARMOVE_API_KEY", "");
  return std::make_shared<llm::LiveBackend>(
      std::make_shared<HttplibChatTransport>(base), cfg);
}

/// Nominatim-style reverse geocode transport for the live geocoder mode.
class HttplibGeoTransport : public geo::Transport {
public:
  explicit HttplibGeoTransport(const std::string& base_url) {
    split_base_url(base_url, host_, prefix_);
    client_ = std::make_unique<httplib::Client>(host_);
    client_->set_connection_timeout(10, 0);
    client_->set_read_timeout(30, 0);
  }

  geo::TransportReply reverse(double lat, double lon) override {
    char path[160];
    std::snprintf(path, sizeof(path),
                  "%s/reverse?format=jsonv2&lat=%.5f&lon=%.5f", prefix_.c_str(), lat,
                  lon);
    auto res = client_->Get(path);
    geo::TransportReply reply;
    if (!res || res->status != 200) return reply;
    auto j = canonical::json::parse(res->body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) return reply;
    if (j.contains("address") && j["address"].is_object()) {
      const auto& addr = j["address"];
      reply.admin_area = addr.value("city", addr.value("state", ""));
      reply.subdistrict = addr.value("suburb", addr.value("neighbourhood", ""));
    }
    if (j.contains("name") && j["name"].is_string()) {
      std::string name = j["name"].get<std::string>();
      if (!name.empty()) reply.pois.push_back(std::move(name));
    }
    reply.ok = true;
    return reply;
  }

private:
  std::string host_;
  std::string prefix_;
  std::unique_ptr<httplib::Client> client_;
};

}  // namespace armove::net
