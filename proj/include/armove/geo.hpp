#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include "armove/canonical.hpp"
#include "armove/common.hpp"

namespace armove::geo {

using canonical::json;

struct SpatialContext {
  std::string admin_area;
  std::string subdistrict;
  std::vector<std::string> nearby_poi_names;
  std::string source = "fixture";  // live | cache | fixture
};

/// Cache key: coordinates rounded to 5 decimals (~1 m).
inline std::string quantize_key(double lat, double lon) {
  return format_fixed(lat, 5) + "," + format_fixed(lon, 5);
}

/// Coordinate-keyed context store. Concurrent reads, exclusive writes;
/// a key is only ever written once, so repeated queries cannot change it.
class GeoCache {
public:
  std::optional<SpatialContext> get(const std::string& key) const {
    std::shared_lock lock(mutex_);
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    SpatialContext ctx = it->second;
    ctx.source = "cache";
    return ctx;
  }

  void put(const std::string& key, const SpatialContext& ctx) {
    std::unique_lock lock(mutex_);
    entries_.emplace(key, ctx);  // first write wins
  }

  std::size_t size() const {
    std::shared_lock lock(mutex_);
    return entries_.size();
  }

  void save(const std::filesystem::path& path) const {
    std::shared_lock lock(mutex_);
    std::vector<json> records;
    for (const auto& [key, ctx] : entries_) {
      json j;
      j["admin"] = ctx.admin_area;
      j["key"] = key;
      j["pois"] = ctx.nearby_poi_names;
      j["subdistrict"] = ctx.subdistrict;
      records.push_back(std::move(j));
    }
    canonical::write_json_lines(path, records);
  }

  void load(const std::filesystem::path& path) {
    for (const auto& j : canonical::read_json_lines(path)) {
      SpatialContext ctx;
      ctx.admin_area = j.value("admin", "");
      ctx.subdistrict = j.value("subdistrict", "");
      ctx.nearby_poi_names = j.value("pois", std::vector<std::string>{});
      put(j.at("key").get<std::string>(), ctx);
    }
  }

private:
  std::map<std::string, SpatialContext> entries_;
  mutable std::shared_mutex mutex_;
};

struct TransportReply {
  bool ok = false;
  std::string admin_area;
  std::string subdistrict;
  std::vector<std::string> pois;
};

/// Live-mode HTTP seam; tests plug in counting or fail-on-call stubs.
class Transport {
public:
  virtual ~Transport() = default;
  virtual TransportReply reverse(double lat, double lon) = 0;
};

/// Transport that proves hermeticity by failing the test on any call.
class FailTransport : public Transport {
public:
  TransportReply reverse(double, double) override {
    throw Error("network call in a hermetic mode");
  }
};

class Clock {
public:
  virtual ~Clock() = default;
  virtual std::int64_t now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
  }
  virtual void sleep_ms(std::int64_t ms) {
    if (ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(ms));
  }
};

struct GeocoderConfig {
  std::string mode = "fixture";     // fixture | live
  std::int64_t min_interval_ms = 1000;
  int max_retries = 3;
  std::int64_t backoff_base_ms = 1000;
};

/// Reverse geocoder with cache-first lookups. Fixture mode is hermetic:
/// the transport is never touched, misses yield empty-field contexts.
class ReverseGeocoder {
public:
  ReverseGeocoder(GeocoderConfig cfg, std::shared_ptr<GeoCache> cache,
                  std::shared_ptr<Transport> transport = nullptr,
                  std::shared_ptr<Clock> clock = nullptr)
      : cfg_(std::move(cfg)),
        cache_(cache ? std::move(cache) : std::make_shared<GeoCache>()),
        transport_(std::move(transport)),
        clock_(clock ? std::move(clock) : std::make_shared<Clock>()) {}

  void load_fixture(const std::filesystem::path& path) {
    for (const auto& j : canonical::read_json_lines(path)) {
      SpatialContext ctx;
      ctx.admin_area = j.value("admin", "");
      ctx.subdistrict = j.value("subdistrict", "");
      ctx.nearby_poi_names = j.value("pois", std::vector<std::string>{});
      ctx.source = "fixture";
      fixture_.emplace(j.at("key").get<std::string>(), std::move(ctx));
    }
  }

  void add_fixture(double lat, double lon, SpatialContext ctx) {
    ctx.source = "fixture";
    fixture_.emplace(quantize_key(lat, lon), std::move(ctx));
  }

  SpatialContext reverse_geocode(double lat, double lon) {
    const std::string key = quantize_key(lat, lon);
    if (auto hit = cache_->get(key)) return *hit;

    if (cfg_.mode == "fixture") {
      auto it = fixture_.find(key);
      SpatialContext ctx;
      ctx.source = "fixture";
      if (it != fixture_.end()) ctx = it->second;
      cache_->put(key, ctx);
      return ctx;
    }

    if (!transport_) throw Error("live geocoding requires a transport");
    SpatialContext ctx;
    ctx.source = "live";
    std::lock_guard lock(request_mutex_);
    for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
      if (attempt > 0)
        clock_->sleep_ms(cfg_.backoff_base_ms << (attempt - 1));
      throttle();
      TransportReply reply = transport_->reverse(lat, lon);
      if (reply.ok) {
        ctx.admin_area = reply.admin_area;
        ctx.subdistrict = reply.subdistrict;
        ctx.nearby_poi_names = reply.pois;
        cache_->put(key, ctx);
        return ctx;
      }
    }
    warnings_.push_back("reverse geocode failed after retries: " + key);
    cache_->put(key, ctx);
    return ctx;
  }

  const std::vector<std::string>& warnings() const { return warnings_; }
  GeoCache& cache() { return *cache_; }

private:
  void throttle() {
    std::int64_t now = clock_->now_ms();
    if (last_request_ms_ >= 0) {
      std::int64_t due = last_request_ms_ + cfg_.min_interval_ms;
      if (now < due) {
        clock_->sleep_ms(due - now);
        now = due;
      }
    }
    last_request_ms_ = now;
  }

  GeocoderConfig cfg_;
  std::shared_ptr<GeoCache> cache_;
  std::shared_ptr<Transport> transport_;
  std::shared_ptr<Clock> clock_;
  std::map<std::string, SpatialContext> fixture_;
  std::vector<std::string> warnings_;
  std::mutex request_mutex_;
  std::int64_t last_request_ms_ = -1;
};

inline std::size_t subdistrict_count(const std::vector<SpatialContext>& contexts) {
  std::set<std::string> distinct;
  for (const auto& c : contexts)
    if (!c.subdistrict.empty()) distinct.insert(c.subdistrict);
  return distinct.size();
}

}  // namespace armove::geo
