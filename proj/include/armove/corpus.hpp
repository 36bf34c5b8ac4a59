#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "armove/canonical.hpp"
#include "armove/common.hpp"

namespace armove::corpus {

using canonical::json;

/// One timestamped visit to a discrete location.
struct Stay {
  std::string user_id;
  std::int64_t timestamp = 0;  // UTC seconds
  std::string location_id;
  std::optional<double> lat;
  std::optional<double> lon;
  std::optional<std::string> venue_category;
};

struct Session {
  std::string user_id;
  int session_id = 0;
  std::vector<Stay> stays;       // sorted by timestamp
  std::string split;             // "", "train", "valid", "test"

  std::int64_t first_ts() const { return stays.front().timestamp; }
  std::int64_t last_ts() const { return stays.back().timestamp; }
};

struct GridConfig {
  double ref_lat = 0.0;
  double ref_lon = 0.0;
  double cell_km = 1.0;
};

struct Corpus {
  std::string city;
  std::map<std::string, std::vector<Session>> users;
  std::optional<GridConfig> grid;
  int tz_offset_hours = 0;

  std::size_t session_count() const {
    std::size_t n = 0;
    for (const auto& [_, sessions] : users) n += sessions.size();
    return n;
  }
};

/// History/context/target triple handed to the prediction agent. The target
/// is always the final stay of the sampled session.
struct PredictionSample {
  std::string user_id;
  std::vector<Session> history;
  std::vector<Stay> context;
  Stay target;
  int session_id = 0;

  std::string sample_id() const {
    return user_id + "#" + std::to_string(session_id);
  }
};

// ---------------------------------------------------------------------------
// grid mapping (equirectangular, city scale)
// ---------------------------------------------------------------------------

inline constexpr double kKmPerDegLat = 110.574;
inline constexpr double kKmPerDegLon = 111.320;

inline bool valid_coord(double lat, double lon) {
  return std::isfinite(lat) && std::isfinite(lon) && lat >= -90.0 &&
         lat <= 90.0 && lon >= -180.0 && lon <= 180.0;
}

inline std::string map_to_grid(double lat, double lon, const GridConfig& cfg) {
  if (cfg.cell_km <= 0.0) throw Error("map_to_grid: cell_km must be positive");
  double lat_rad = cfg.ref_lat * M_PI / 180.0;
  double x_km = (lon - cfg.ref_lon) * kKmPerDegLon * std::cos(lat_rad);
  double y_km = (lat - cfg.ref_lat) * kKmPerDegLat;
  long long x = static_cast<long long>(std::floor(x_km / cfg.cell_km));
  long long y = static_cast<long long>(std::floor(y_km / cfg.cell_km));
  return std::to_string(x) + "_" + std::to_string(y);
}

// ---------------------------------------------------------------------------
// parsing
// ---------------------------------------------------------------------------

/// Column map into delimiter-separated input. Either `location` or the
/// lat/lon pair must be set; with coords only, a GridConfig supplies ids.
struct ColumnSchema {
  char delimiter = '\t';
  int user = 0;
  int time = 1;
  int location = -1;
  int lat = -1;
  int lon = -1;
  int category = -1;

  bool has_location() const { return location >= 0; }
  bool has_coords() const { return lat >= 0 && lon >= 0; }
};

struct ParseResult {
  std::vector<Stay> stays;
  std::size_t skipped = 0;
  std::vector<std::string> warnings;
};

inline ParseResult parse_checkins(const std::vector<std::string>& lines,
                                  const ColumnSchema& schema,
                                  const std::optional<GridConfig>& grid = {}) {
  if (!schema.has_location() && !schema.has_coords())
    throw Error("parse_checkins: schema needs a location column or lat/lon columns");
  if (!schema.has_location() && !grid)
    throw Error("parse_checkins: coordinate-only schema requires a grid config");

  ParseResult result;
  std::size_t line_no = 0;
  for (const auto& line : lines) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cols = split(line, schema.delimiter);
    auto field = [&](int idx) -> std::optional<std::string> {
      if (idx < 0 || idx >= static_cast<int>(cols.size())) return std::nullopt;
      return trim(cols[static_cast<std::size_t>(idx)]);
    };
    auto skip = [&](const std::string& why) {
      ++result.skipped;
      result.warnings.push_back("line " + std::to_string(line_no) + ": " + why);
    };

    auto user = field(schema.user);
    if (!user || user->empty()) {
      skip("missing user");
      continue;
    }
    auto time_raw = field(schema.time);
    auto ts = time_raw ? parse_timestamp(*time_raw) : std::nullopt;
    if (!ts) {
      skip("malformed timestamp");
      continue;
    }

    Stay stay;
    stay.user_id = *user;
    stay.timestamp = *ts;

    auto lat_raw = field(schema.lat);
    auto lon_raw = field(schema.lon);
    if (schema.has_coords()) {
      if (!lat_raw || !lon_raw) {
        skip("missing coordinates");
        continue;
      }
      double lat, lon;
      try {
        lat = std::stod(*lat_raw);
        lon = std::stod(*lon_raw);
      } catch (...) {
        skip("malformed coordinates");
        continue;
      }
      if (!valid_coord(lat, lon)) {
        skip("coordinates out of range");
        continue;
      }
      stay.lat = lat;
      stay.lon = lon;
    }

    if (schema.has_location()) {
      auto loc = field(schema.location);
      if (!loc || loc->empty()) {
        skip("missing location id");
        continue;
      }
      stay.location_id = *loc;
    } else {
      stay.location_id = map_to_grid(*stay.lat, *stay.lon, *grid);
    }

    if (schema.category >= 0) {
      auto cat = field(schema.category);
      if (cat && !cat->empty()) stay.venue_category = *cat;
    }
    result.stays.push_back(std::move(stay));
  }
  return result;
}

// ---------------------------------------------------------------------------
// sessionization
// ---------------------------------------------------------------------------

enum class SessionPolicy {
  kWindow72h,     // new session once a stay is more than 72h past the session's first stay
  kWindow72hGap,  // new session once the gap to the previous stay exceeds 72h
  kPerDay,        // one session per local calendar day
};

inline SessionPolicy session_policy_from_string(const std::string& s) {
  if (s == "window72h") return SessionPolicy::kWindow72h;
  if (s == "window72h_gap") return SessionPolicy::kWindow72hGap;
  if (s == "per_day") return SessionPolicy::kPerDay;
  throw Error("unknown session policy: " + s);
}

inline std::string to_string(SessionPolicy p) {
  switch (p) {
    case SessionPolicy::kWindow72h: return "window72h";
    case SessionPolicy::kWindow72hGap: return "window72h_gap";
    default: return "per_day";
  }
}

inline constexpr std::int64_t kWindowSeconds = 72 * 3600;

/// Stays must belong to one user and be sorted by timestamp.
inline std::vector<Session> sessionize(const std::vector<Stay>& stays,
                                       SessionPolicy policy,
                                       int tz_offset_hours = 0) {
  std::vector<Session> sessions;
  if (stays.empty()) return sessions;

  auto local_day = [&](std::int64_t ts) {
    std::int64_t shifted = ts + static_cast<std::int64_t>(tz_offset_hours) * 3600;
    // floor division, correct for pre-epoch timestamps
    std::int64_t day = shifted / 86400;
    if (shifted % 86400 < 0) --day;
    return day;
  };

  Session current;
  current.user_id = stays.front().user_id;
  current.session_id = 0;
  for (const auto& stay : stays) {
    bool fresh = current.stays.empty();
    bool boundary = false;
    if (!fresh) {
      switch (policy) {
        case SessionPolicy::kWindow72h:
          boundary = stay.timestamp > current.first_ts() + kWindowSeconds;
          break;
        case SessionPolicy::kWindow72hGap:
          boundary = stay.timestamp > current.last_ts() + kWindowSeconds;
          break;
        case SessionPolicy::kPerDay:
          boundary = local_day(stay.timestamp) != local_day(current.first_ts());
          break;
      }
    }
    if (boundary) {
      sessions.push_back(std::move(current));
      current = Session{};
      current.user_id = stay.user_id;
      current.session_id = static_cast<int>(sessions.size());
    }
    current.stays.push_back(stay);
  }
  sessions.push_back(std::move(current));
  return sessions;
}

/// Group stays per user, sort each user's stays by time (stable), sessionize.
inline Corpus build_corpus(const std::vector<Stay>& stays, const std::string& city,
                           SessionPolicy policy, int tz_offset_hours = 0,
                           std::optional<GridConfig> grid = {}) {
  Corpus c;
  c.city = city;
  c.grid = grid;
  c.tz_offset_hours = tz_offset_hours;
  std::map<std::string, std::vector<Stay>> per_user;
  for (const auto& s : stays) per_user[s.user_id].push_back(s);
  for (auto& [user, user_stays] : per_user) {
    std::stable_sort(user_stays.begin(), user_stays.end(),
                     [](const Stay& a, const Stay& b) { return a.timestamp < b.timestamp; });
    c.users[user] = sessionize(user_stays, policy, tz_offset_hours);
  }
  return c;
}

// ---------------------------------------------------------------------------
// filtering and splitting
// ---------------------------------------------------------------------------

inline constexpr std::size_t kMinStaysPerSession = 4;
inline constexpr std::size_t kMinSessionsPerUser = 5;

struct FilterStats {
  std::size_t dropped_sessions = 0;
  std::size_t dropped_users = 0;
};

/// Sessions with too few stays go first, then users left with too few
/// sessions. Session ids are reassigned to stay contiguous.
inline Corpus filter_corpus(const Corpus& input, FilterStats* stats = nullptr,
                            std::size_t min_stays = kMinStaysPerSession,
                            std::size_t min_sessions = kMinSessionsPerUser) {
  Corpus out;
  out.city = input.city;
  out.grid = input.grid;
  out.tz_offset_hours = input.tz_offset_hours;
  FilterStats local;
  for (const auto& [user, sessions] : input.users) {
    std::vector<Session> kept;
    for (const auto& s : sessions) {
      if (s.stays.size() >= min_stays) {
        kept.push_back(s);
      } else {
        ++local.dropped_sessions;
      }
    }
    if (kept.size() >= min_sessions) {
      for (std::size_t i = 0; i < kept.size(); ++i)
        kept[i].session_id = static_cast<int>(i);
      out.users[user] = std::move(kept);
    } else {
      ++local.dropped_users;
    }
  }
  if (stats) *stats = local;
  if (out.users.empty()) throw Error("empty corpus after filtering");
  return out;
}

struct SplitRatios {
  double train = 0.7;
  double valid = 0.1;
  double test = 0.2;
};

inline SplitRatios split_ratios_from_string(const std::string& s) {
  auto parts = split(s, ':');
  if (parts.size() != 3) throw Error("split ratios must look like 7:1:2");
  SplitRatios r;
  try {
    r.train = std::stod(parts[0]);
    r.valid = std::stod(parts[1]);
    r.test = std::stod(parts[2]);
  } catch (...) {
    throw Error("split ratios must be numeric");
  }
  return r;
}

/// Global temporal split: all sessions ordered by first-stay timestamp, the
/// first floor(train*N) tagged train, next floor(valid*N) valid, rest test.
inline void temporal_split(Corpus& corpus, SplitRatios ratios) {
  if (ratios.train <= 0 || ratios.valid <= 0 || ratios.test <= 0)
    throw Error("temporal_split: ratios must be positive");
  double sum = ratios.train + ratios.valid + ratios.test;
  double train = ratios.train / sum;
  double valid = ratios.valid / sum;

  struct Ref {
    std::int64_t ts;
    std::string user;
    int idx;
  };
  std::vector<Ref> refs;
  for (auto& [user, sessions] : corpus.users)
    for (auto& s : sessions)
      refs.push_back({s.first_ts(), user, s.session_id});
  if (refs.size() < 3) throw Error("temporal_split: fewer than 3 sessions");

  std::sort(refs.begin(), refs.end(), [](const Ref& a, const Ref& b) {
    if (a.ts != b.ts) return a.ts < b.ts;
    if (a.user != b.user) return a.user < b.user;
    return a.idx < b.idx;
  });

  std::size_t n = refs.size();
  std::size_t n_train = static_cast<std::size_t>(std::floor(train * static_cast<double>(n)));
  std::size_t n_valid = static_cast<std::size_t>(std::floor(valid * static_cast<double>(n)));
  for (std::size_t i = 0; i < n; ++i) {
    const char* tag = i < n_train ? "train" : (i < n_train + n_valid ? "valid" : "test");
    corpus.users[refs[i].user][static_cast<std::size_t>(refs[i].idx)].split = tag;
  }
}

// ---------------------------------------------------------------------------
// prediction samples
// ---------------------------------------------------------------------------

inline PredictionSample make_sample(const Corpus& corpus, const std::string& user,
                                    int session_id) {
  const auto it = corpus.users.find(user);
  if (it == corpus.users.end()) throw Error("make_sample: unknown user " + user);
  const auto& sessions = it->second;
  const Session* current = nullptr;
  for (const auto& s : sessions)
    if (s.session_id == session_id) current = &s;
  if (!current) throw Error("make_sample: unknown session");
  if (current->stays.size() < 2) throw Error("make_sample: session too short");

  PredictionSample sample;
  sample.user_id = user;
  sample.session_id = session_id;
  for (const auto& s : sessions) {
    if (s.first_ts() < current->first_ts() ||
        (s.first_ts() == current->first_ts() && s.session_id < current->session_id))
      sample.history.push_back(s);
  }
  sample.context.assign(current->stays.begin(), current->stays.end() - 1);
  sample.target = current->stays.back();
  return sample;
}

inline std::vector<PredictionSample> samples_for_split(const Corpus& corpus,
                                                       const std::string& tag) {
  std::vector<PredictionSample> samples;
  for (const auto& [user, sessions] : corpus.users)
    for (const auto& s : sessions)
      if (s.split == tag) samples.push_back(make_sample(corpus, user, s.session_id));
  return samples;
}

struct TestSampleResult {
  std::vector<PredictionSample> samples;
  std::optional<std::string> warning;
};

/// Uniform draw of min(n, available) test sessions without replacement.
inline TestSampleResult sample_test_set(const Corpus& corpus, int n,
                                        std::uint64_t seed) {
  if (n <= 0) throw Error("sample_test_set: n must be positive");
  struct Ref {
    std::string user;
    int idx;
  };
  std::vector<Ref> pool;
  for (const auto& [user, sessions] : corpus.users)
    for (const auto& s : sessions)
      if (s.split == "test") pool.push_back({user, s.session_id});
  if (pool.empty()) throw Error("sample_test_set: no test sessions");

  TestSampleResult result;
  std::size_t want = static_cast<std::size_t>(n);
  if (pool.size() < want) {
    result.warning = "requested " + std::to_string(n) + " test samples, only " +
                     std::to_string(pool.size()) + " available";
    want = pool.size();
  }
  Rng rng(seed);
  auto picks = rng.sample_indices(pool.size(), want);
  for (auto i : picks)
    result.samples.push_back(make_sample(corpus, pool[i].user, pool[i].idx));
  return result;
}

// ---------------------------------------------------------------------------
// serialization
// ---------------------------------------------------------------------------

inline json stay_to_json(const Stay& s) {
  json j;
  j["loc"] = s.location_id;
  j["t"] = s.timestamp;
  if (s.lat) j["lat"] = canonical::num(*s.lat);
  if (s.lon) j["lon"] = canonical::num(*s.lon);
  if (s.venue_category) j["cat"] = *s.venue_category;
  return j;
}

inline Stay stay_from_json(const std::string& user, const json& j) {
  Stay s;
  s.user_id = user;
  s.location_id = j.at("loc").get<std::string>();
  s.timestamp = j.at("t").get<std::int64_t>();
  if (j.contains("lat")) s.lat = j["lat"].get<double>();
  if (j.contains("lon")) s.lon = j["lon"].get<double>();
  if (j.contains("cat")) s.venue_category = j["cat"].get<std::string>();
  return s;
}

inline json to_json(const Corpus& c) {
  json j;
  j["city"] = c.city;
  j["tz_offset_hours"] = c.tz_offset_hours;
  if (c.grid) {
    j["grid"] = {{"cell_km", canonical::num(c.grid->cell_km)},
                 {"ref_lat", canonical::num(c.grid->ref_lat)},
                 {"ref_lon", canonical::num(c.grid->ref_lon)}};
  }
  json users = json::object();
  for (const auto& [user, sessions] : c.users) {
    json arr = json::array();
    for (const auto& s : sessions) {
      json sj;
      sj["session_id"] = s.session_id;
      if (!s.split.empty()) sj["split"] = s.split;
      json stays = json::array();
      for (const auto& st : s.stays) stays.push_back(stay_to_json(st));
      sj["stays"] = std::move(stays);
      arr.push_back(std::move(sj));
    }
    users[user] = std::move(arr);
  }
  j["users"] = std::move(users);
  return j;
}

inline Corpus from_json(const json& j) {
  Corpus c;
  c.city = j.at("city").get<std::string>();
  c.tz_offset_hours = j.value("tz_offset_hours", 0);
  if (j.contains("grid")) {
    GridConfig g;
    g.cell_km = j["grid"].at("cell_km").get<double>();
    g.ref_lat = j["grid"].at("ref_lat").get<double>();
    g.ref_lon = j["grid"].at("ref_lon").get<double>();
    c.grid = g;
  }
  for (const auto& [user, arr] : j.at("users").items()) {
    std::vector<Session> sessions;
    for (const auto& sj : arr) {
      Session s;
      s.user_id = user;
      s.session_id = sj.at("session_id").get<int>();
      s.split = sj.value("split", "");
      for (const auto& st : sj.at("stays")) s.stays.push_back(stay_from_json(user, st));
      sessions.push_back(std::move(s));
    }
    c.users[user] = std::move(sessions);
  }
  return c;
}

inline void save(const Corpus& c, const std::filesystem::path& path) {
  canonical::write_json(path, to_json(c));
}

inline Corpus load(const std::filesystem::path& path) {
  return from_json(canonical::read_json(path));
}

/// Restrict to a user subset (transfer runs and group slices).
inline Corpus restrict_users(const Corpus& c, const std::vector<std::string>& users) {
  Corpus out;
  out.city = c.city;
  out.grid = c.grid;
  out.tz_offset_hours = c.tz_offset_hours;
  for (const auto& u : users) {
    auto it = c.users.find(u);
    if (it != c.users.end()) out.users[u] = it->second;
  }
  return out;
}

}  // namespace armove::corpus
