#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "armove/canonical.hpp"
#include "armove/common.hpp"
#include "armove/corpus.hpp"
#include "armove/geo.hpp"

namespace armove::features {

using canonical::json;

struct FeatureDescriptor {
  std::string feature_id;
  std::string pool;         // trajectory | spatial | memory | social | generated
  std::string subcategory;  // human-readable role
  std::string origin;       // standard | llm_generated | group_label
  std::string renderer_id;  // "std" or a primitive name for generated features
  json params;              // primitive parameters (generated features only)

  json to_json() const {
    json j;
    j["feature_id"] = feature_id;
    j["origin"] = origin;
    if (!params.is_null()) j["params"] = params;
    j["pool"] = pool;
    j["renderer"] = renderer_id;
    j["subcategory"] = subcategory;
    return j;
  }

  static FeatureDescriptor from_json(const json& j) {
    FeatureDescriptor d;
    d.feature_id = j.at("feature_id").get<std::string>();
    d.origin = j.at("origin").get<std::string>();
    if (j.contains("params")) d.params = j.at("params");
    d.pool = j.at("pool").get<std::string>();
    d.renderer_id = j.at("renderer").get<std::string>();
    d.subcategory = j.at("subcategory").get<std::string>();
    return d;
  }
};

struct FeatureValue {
  std::string feature_id;
  json payload;
  std::string rendered;

  bool empty_payload() const {
    return payload.is_null() || (payload.is_array() && payload.empty()) ||
           (payload.is_object() && payload.empty()) ||
           (payload.is_string() && payload.get<std::string>().empty());
  }
};

// ---------------------------------------------------------------------------
// registry
// ---------------------------------------------------------------------------

class Registry {
public:
  /// True when the descriptor was new; duplicates leave the registry as-is.
  bool add(FeatureDescriptor d) {
    if (d.feature_id.empty()) throw Error("descriptor needs a feature_id");
    return descriptors_.emplace(d.feature_id, std::move(d)).second;
  }

  bool contains(const std::string& id) const { return descriptors_.count(id) > 0; }

  const FeatureDescriptor& at(const std::string& id) const {
    auto it = descriptors_.find(id);
    if (it == descriptors_.end()) throw Error("unknown feature: " + id);
    return it->second;
  }

  std::size_t size() const { return descriptors_.size(); }

  /// Id-sorted (map order), so listings are stable.
  std::vector<const FeatureDescriptor*> all() const {
    std::vector<const FeatureDescriptor*> out;
    out.reserve(descriptors_.size());
    for (const auto& [_, d] : descriptors_) out.push_back(&d);
    return out;
  }

  std::vector<std::string> ids_in_pool(const std::string& pool) const {
    std::vector<std::string> out;
    for (const auto& [id, d] : descriptors_)
      if (d.pool == pool) out.push_back(id);
    return out;
  }

  json to_json(const std::map<std::string, double>& weights = {}) const {
    json arr = json::array();
    for (const auto& [id, d] : descriptors_) {
      json j = d.to_json();
      auto w = weights.find(id);
      if (w != weights.end()) j["weight"] = canonical::num(w->second);
      arr.push_back(std::move(j));
    }
    return arr;
  }

  static Registry from_json(const json& arr) {
    Registry r;
    for (const auto& j : arr) r.add(FeatureDescriptor::from_json(j));
    return r;
  }

  static Registry standard();

private:
  std::map<std::string, FeatureDescriptor> descriptors_;
};

inline Registry Registry::standard() {
  Registry r;
  auto std_desc = [&](const char* id, const char* pool, const char* sub) {
    r.add({id, pool, sub, "standard", "std", json()});
  };
  std_desc("trajectory.times", "trajectory", "visit timestamps");
  std_desc("trajectory.context_stay_count", "trajectory", "context stay count");
  std_desc("trajectory.target_stay_duration", "trajectory", "gap before target");
  std_desc("trajectory.visit_frequency", "trajectory", "historical visit frequency");
  std_desc("trajectory.major_venues", "trajectory", "major venue ids");
  std_desc("spatial.admin_areas", "spatial", "administrative areas");
  std_desc("spatial.subdistrict_count", "spatial", "distinct subdistrict count");
  std_desc("spatial.nearby_pois", "spatial", "nearby place names");
  std_desc("memory.long_term", "memory", "all-time location frequency");
  std_desc("memory.short_term", "memory", "recent session sequences");
  std_desc("memory.top_hours", "memory", "top activity hours");
  std_desc("memory.recent_visits", "memory", "recent stays");
  std_desc("memory.profile_keywords", "memory", "profile keywords");
  std_desc("social.neighbors", "social", "direct neighbors");
  std_desc("social.neighbor_top_locations", "social", "neighbors' favorite places");
  std_desc("social.two_hop_summary", "social", "second-degree reach");
  return r;
}

/// Features every selection must keep regardless of agent picks.
inline const std::vector<std::string>& mandatory_core() {
  static const std::vector<std::string> core = {"trajectory.times",
                                                "trajectory.visit_frequency"};
  return core;
}

// ---------------------------------------------------------------------------
// social graph
// ---------------------------------------------------------------------------

class SocialGraph {
public:
  /// Self-loops are dropped; returns whether the edge was new.
  bool add_edge(const std::string& a, const std::string& b) {
    if (a == b || a.empty() || b.empty()) return false;
    auto key = a < b ? std::make_pair(a, b) : std::make_pair(b, a);
    if (!edges_.insert(key).second) return false;
    adj_[a].insert(b);
    adj_[b].insert(a);
    return true;
  }

  bool contains(const std::string& user) const { return adj_.count(user) > 0; }

  const std::set<std::string>& neighbors(const std::string& user) const {
    static const std::set<std::string> none;
    auto it = adj_.find(user);
    return it == adj_.end() ? none : it->second;
  }

  /// Nodes at graph distance exactly `hop` from the user.
  std::set<std::string> neighbors_at_hop(const std::string& user, int hop) const {
    std::set<std::string> frontier = {user};
    std::set<std::string> seen = {user};
    for (int h = 0; h < hop; ++h) {
      std::set<std::string> next;
      for (const auto& u : frontier)
        for (const auto& v : neighbors(u))
          if (seen.insert(v).second) next.insert(v);
      frontier = std::move(next);
      if (frontier.empty()) break;
    }
    return frontier;
  }

  std::size_t edge_count() const { return edges_.size(); }
  std::size_t node_count() const { return adj_.size(); }

  /// Edge-list text: "user_a<TAB>user_b" per line. Malformed lines and
  /// self-loops are skipped.
  static SocialGraph load(const std::filesystem::path& path) {
    SocialGraph g;
    for (const auto& line : read_lines(path)) {
      std::string t = trim(line);
      if (t.empty() || t[0] == '#') continue;
      auto parts = split(t, '\t');
      if (parts.size() < 2) continue;
      g.add_edge(trim(parts[0]), trim(parts[1]));
    }
    return g;
  }

private:
  std::set<std::pair<std::string, std::string>> edges_;
  std::map<std::string, std::set<std::string>> adj_;
};

// ---------------------------------------------------------------------------
// shared rendering helpers
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<const corpus::Stay*> all_observed_stays(
    const corpus::PredictionSample& sample) {
  std::vector<const corpus::Stay*> out;
  for (const auto& s : sample.history)
    for (const auto& st : s.stays) out.push_back(&st);
  for (const auto& st : sample.context) out.push_back(&st);
  return out;
}

/// Count-descending, key-ascending order; the tie rule keeps output stable.
inline std::vector<std::pair<std::string, std::size_t>> ranked_counts(
    const std::map<std::string, std::size_t>& counts) {
  std::vector<std::pair<std::string, std::size_t>> items(counts.begin(), counts.end());
  std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  return items;
}

inline std::string join_limited(const std::vector<std::string>& items,
                                std::size_t limit) {
  std::vector<std::string> head(items.begin(),
                                items.begin() + std::min(items.size(), limit));
  return join(head, ", ");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// builder knobs
// ---------------------------------------------------------------------------

struct BuilderConfig {
  int major_venue_n = 10;   // top venues listed in the trajectory pool
  int short_term_sessions = 2;
  int recent_stays = 10;
  int tz_offset_hours = 0;  // hour-of-day bucketing offset
};

// ---------------------------------------------------------------------------
// trajectory pool (5 features)
// ---------------------------------------------------------------------------

inline std::vector<FeatureValue> build_trajectory_features(
    const corpus::PredictionSample& sample, const BuilderConfig& cfg = {}) {
  std::vector<FeatureValue> out;

  {
    FeatureValue v;
    v.feature_id = "trajectory.times";
    json arr = json::array();
    std::vector<std::string> texts;
    for (const auto& st : sample.context) {
      std::string t = format_utc(st.timestamp);
      arr.push_back(t);
      texts.push_back(std::move(t));
    }
    v.payload = std::move(arr);
    if (!texts.empty()) v.rendered = "visit times: " + join(texts, "; ");
    out.push_back(std::move(v));
  }

  {
    FeatureValue v;
    v.feature_id = "trajectory.context_stay_count";
    v.payload = sample.context.size();
    v.rendered = "context stays: " + std::to_string(sample.context.size());
    out.push_back(std::move(v));
  }

  {
    FeatureValue v;
    v.feature_id = "trajectory.target_stay_duration";
    if (!sample.context.empty()) {
      std::int64_t gap = sample.target.timestamp - sample.context.back().timestamp;
      v.payload = gap;
      v.rendered = "seconds until the stay to predict: " + std::to_string(gap);
    }
    out.push_back(std::move(v));
  }

  auto stays = detail::all_observed_stays(sample);
  std::map<std::string, std::size_t> counts;
  std::vector<std::string> first_seen;
  for (const auto* st : stays) {
    if (counts[st->location_id]++ == 0) first_seen.push_back(st->location_id);
  }

  {
    FeatureValue v;
    v.feature_id = "trajectory.visit_frequency";
    json table = json::object();
    std::vector<std::string> texts;
    if (!stays.empty()) {
      double total = static_cast<double>(stays.size());
      for (const auto& [loc, n] : counts)
        table[loc] = canonical::num(static_cast<double>(n) / total);
      for (const auto& [loc, n] : detail::ranked_counts(counts)) {
        texts.push_back(loc + ":" +
                        format_fixed(static_cast<double>(n) / total, 2));
        if (texts.size() >= 10) break;
      }
    }
    v.payload = std::move(table);
    if (!texts.empty()) v.rendered = "visit frequency: " + join(texts, ", ");
    out.push_back(std::move(v));
  }

  {
    FeatureValue v;
    v.feature_id = "trajectory.major_venues";
    // Frequency-ordered; equal counts keep first-seen order.
    std::vector<std::string> ordered = first_seen;
    std::map<std::string, std::size_t> first_index;
    for (std::size_t i = 0; i < first_seen.size(); ++i)
      first_index[first_seen[i]] = i;
    std::stable_sort(ordered.begin(), ordered.end(),
                     [&](const std::string& a, const std::string& b) {
                       return counts.at(a) > counts.at(b);
                     });
    if (ordered.size() > static_cast<std::size_t>(cfg.major_venue_n))
      ordered.resize(cfg.major_venue_n);
    v.payload = json(ordered);
    if (!ordered.empty()) v.rendered = "major venues: " + join(ordered, ", ");
    out.push_back(std::move(v));
  }

  return out;
}

// ---------------------------------------------------------------------------
// spatial pool (3 features)
// ---------------------------------------------------------------------------

inline std::vector<FeatureValue> build_spatial_features(
    const corpus::PredictionSample& sample, geo::ReverseGeocoder& geocoder) {
  std::vector<FeatureValue> out;

  auto lookup = [&](const corpus::Stay& st) -> std::optional<geo::SpatialContext> {
    if (!st.lat || !st.lon) return std::nullopt;
    try {
      return geocoder.reverse_geocode(*st.lat, *st.lon);
    } catch (const Error&) {
      return std::nullopt;  // geocoder trouble degrades to "unknown"
    }
  };

  std::vector<std::string> admins;
  std::set<std::string> seen_admin;
  std::set<std::string> subdistricts;
  std::vector<std::string> pois;
  for (std::size_t i = 0; i < sample.context.size(); ++i) {
    auto ctx = lookup(sample.context[i]);
    if (ctx) {
      if (!ctx->admin_area.empty() && seen_admin.insert(ctx->admin_area).second)
        admins.push_back(ctx->admin_area);
      if (!ctx->subdistrict.empty()) subdistricts.insert(ctx->subdistrict);
      if (i + 1 == sample.context.size()) pois = ctx->nearby_poi_names;
    }
  }

  {
    FeatureValue v;
    v.feature_id = "spatial.admin_areas";
    v.payload = json(admins);
    v.rendered = admins.empty() ? "admin areas: unknown"
                                : "admin areas: " + join(admins, ", ");
    out.push_back(std::move(v));
  }
  {
    FeatureValue v;
    v.feature_id = "spatial.subdistrict_count";
    v.payload = subdistricts.size();
    v.rendered = "distinct subdistricts: " + std::to_string(subdistricts.size());
    out.push_back(std::move(v));
  }
  {
    FeatureValue v;
    v.feature_id = "spatial.nearby_pois";
    v.payload = json(pois);
    v.rendered = pois.empty() ? "nearby places: unknown"
                              : "nearby places: " + detail::join_limited(pois, 10);
    out.push_back(std::move(v));
  }
  return out;
}

// ---------------------------------------------------------------------------
// memory pool (5 features)
// ---------------------------------------------------------------------------

inline std::vector<FeatureValue> build_memory_features(
    const std::vector<corpus::Session>& history,
    const std::vector<std::string>& profile_keywords = {},
    const BuilderConfig& cfg = {}) {
  std::vector<FeatureValue> out;

  std::vector<const corpus::Stay*> stays;
  for (const auto& s : history)
    for (const auto& st : s.stays) stays.push_back(&st);

  {
    FeatureValue v;
    v.feature_id = "memory.long_term";
    std::map<std::string, std::size_t> counts;
    for (const auto* st : stays) ++counts[st->location_id];
    json table = json::object();
    for (const auto& [loc, n] : counts) table[loc] = n;
    std::vector<std::string> texts;
    for (const auto& [loc, n] : detail::ranked_counts(counts)) {
      texts.push_back(loc + " x" + std::to_string(n));
      if (texts.size() >= 10) break;
    }
    v.payload = std::move(table);
    if (!texts.empty()) v.rendered = "all-time visits: " + join(texts, ", ");
    out.push_back(std::move(v));
  }

  {
    FeatureValue v;
    v.feature_id = "memory.short_term";
    std::size_t take = std::min<std::size_t>(history.size(), cfg.short_term_sessions);
    json arr = json::array();
    std::vector<std::string> texts;
    for (std::size_t i = history.size() - take; i < history.size(); ++i) {
      std::vector<std::string> locs;
      for (const auto& st : history[i].stays) locs.push_back(st.location_id);
      arr.push_back(json(locs));
      texts.push_back("[" + join(locs, " > ") + "]");
    }
    v.payload = std::move(arr);
    if (!texts.empty()) v.rendered = "recent sessions: " + join(texts, "; ");
    out.push_back(std::move(v));
  }

  {
    FeatureValue v;
    v.feature_id = "memory.top_hours";
    std::map<std::string, std::size_t> buckets;  // "00".."23" keeps map order
    for (const auto* st : stays) {
      std::int64_t local = st->timestamp + std::int64_t(cfg.tz_offset_hours) * 3600;
      int hour = static_cast<int>(((local / 3600) % 24 + 24) % 24);
      char key[3];
      std::snprintf(key, sizeof(key), "%02d", hour);
      ++buckets[key];
    }
    auto ranked = detail::ranked_counts(buckets);
    if (ranked.size() > 3) ranked.resize(3);
    json arr = json::array();
    std::vector<std::string> texts;
    for (const auto& [hour, n] : ranked) {
      arr.push_back(std::stoi(hour));
      texts.push_back(hour + ":00 (" + std::to_string(n) + " stays)");
    }
    v.payload = std::move(arr);
    if (!texts.empty()) v.rendered = "top activity hours: " + join(texts, ", ");
    out.push_back(std::move(v));
  }

  {
    FeatureValue v;
    v.feature_id = "memory.recent_visits";
    std::size_t take = std::min<std::size_t>(stays.size(), cfg.recent_stays);
    std::vector<std::string> locs;
    for (std::size_t i = stays.size() - take; i < stays.size(); ++i)
      locs.push_back(stays[i]->location_id);
    v.payload = json(locs);
    if (!locs.empty()) v.rendered = "recent stays: " + join(locs, ", ");
    out.push_back(std::move(v));
  }

  {
    FeatureValue v;
    v.feature_id = "memory.profile_keywords";
    v.payload = json(profile_keywords);
    if (!profile_keywords.empty())
      v.rendered = "profile: " + join(profile_keywords, ", ");
    out.push_back(std::move(v));
  }

  return out;
}

// ---------------------------------------------------------------------------
// social pool (3 features)
// ---------------------------------------------------------------------------

inline std::vector<FeatureValue> build_social_features(
    const std::string& user_id, const SocialGraph& graph,
    const corpus::Corpus& corpus) {
  std::vector<FeatureValue> out;
  bool known = graph.contains(user_id);

  std::vector<std::string> direct(known ? std::vector<std::string>(
                                              graph.neighbors(user_id).begin(),
                                              graph.neighbors(user_id).end())
                                        : std::vector<std::string>{});

  {
    FeatureValue v;
    v.feature_id = "social.neighbors";
    v.payload = json(direct);
    if (!direct.empty()) v.rendered = "friends: " + detail::join_limited(direct, 10);
    out.push_back(std::move(v));
  }

  {
    FeatureValue v;
    v.feature_id = "social.neighbor_top_locations";
    std::map<std::string, std::size_t> counts;
    for (const auto& n : direct) {
      auto it = corpus.users.find(n);
      if (it == corpus.users.end()) continue;
      for (const auto& sess : it->second)
        for (const auto& st : sess.stays) ++counts[st.location_id];
    }
    std::vector<std::string> locs;
    for (const auto& [loc, n] : detail::ranked_counts(counts)) {
      locs.push_back(loc);
      if (locs.size() >= 5) break;
    }
    v.payload = json(locs);
    if (!locs.empty())
      v.rendered = "friends' favorite places: " + join(locs, ", ");
    out.push_back(std::move(v));
  }

  {
    FeatureValue v;
    v.feature_id = "social.two_hop_summary";
    json summary = json::object();
    if (known) {
      summary["hop1"] = graph.neighbors_at_hop(user_id, 1).size();
      summary["hop2"] = graph.neighbors_at_hop(user_id, 2).size();
      v.rendered = "social reach: " + std::to_string(summary["hop1"].get<std::size_t>()) +
                   " direct, " + std::to_string(summary["hop2"].get<std::size_t>()) +
                   " second-degree";
    }
    v.payload = std::move(summary);
    out.push_back(std::move(v));
  }

  return out;
}

// ---------------------------------------------------------------------------
// generated-feature primitives
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& primitive_names() {
  static const std::vector<std::string> names = {
      "frequency-over-field", "time-bucket histogram", "transition count",
      "dwell statistic"};
  return names;
}

/// Empty result means the rule is usable; otherwise the reason it is not.
inline std::optional<std::string> validate_primitive(const std::string& primitive,
                                                     const json& params) {
  auto has = [&](const char* k) { return params.is_object() && params.contains(k); };
  if (primitive == "frequency-over-field") {
    std::string field = has("field") ? params["field"].get<std::string>() : "";
    if (field != "location" && field != "venue_category")
      return "frequency-over-field needs field=location or field=venue_category";
    return std::nullopt;
  }
  if (primitive == "time-bucket histogram") {
    std::string bucket = has("bucket") ? params["bucket"].get<std::string>() : "hour";
    if (bucket != "hour" && bucket != "weekday")
      return "time-bucket histogram needs bucket=hour or bucket=weekday";
    return std::nullopt;
  }
  if (primitive == "transition count") return std::nullopt;
  if (primitive == "dwell statistic") {
    std::string stat = has("stat") ? params["stat"].get<std::string>() : "mean";
    if (stat != "mean" && stat != "max" && stat != "min")
      return "dwell statistic needs stat=mean, max, or min";
    return std::nullopt;
  }
  return "unknown computation rule: " + primitive;
}

inline FeatureValue compute_generated(const FeatureDescriptor& desc,
                                      const corpus::PredictionSample& sample,
                                      const BuilderConfig& cfg = {}) {
  FeatureValue v;
  v.feature_id = desc.feature_id;
  const json& params = desc.params.is_object() ? desc.params : json::object();
  auto stays = detail::all_observed_stays(sample);
  const std::string label = desc.subcategory.empty() ? desc.feature_id : desc.subcategory;

  if (desc.renderer_id == "frequency-over-field") {
    std::string field = params.value("field", "location");
    std::map<std::string, std::size_t> counts;
    for (const auto* st : stays) {
      std::string key = field == "location"
                            ? st->location_id
                            : st->venue_category.value_or("");
      if (!key.empty()) ++counts[key];
    }
    json table = json::object();
    for (const auto& [k, n] : counts) table[k] = n;
    std::vector<std::string> texts;
    for (const auto& [k, n] : detail::ranked_counts(counts)) {
      texts.push_back(k + " x" + std::to_string(n));
      if (texts.size() >= 10) break;
    }
    v.payload = std::move(table);
    if (!texts.empty()) v.rendered = label + ": " + join(texts, ", ");
    return v;
  }

  if (desc.renderer_id == "time-bucket histogram") {
    std::string bucket = params.value("bucket", "hour");
    std::map<std::string, std::size_t> counts;
    for (const auto* st : stays) {
      std::int64_t local = st->timestamp + std::int64_t(cfg.tz_offset_hours) * 3600;
      char key[4];
      if (bucket == "hour") {
        int hour = static_cast<int>(((local / 3600) % 24 + 24) % 24);
        std::snprintf(key, sizeof(key), "h%02d", hour);
      } else {
        // Epoch day 0 was a Thursday.
        std::int64_t day = local / 86400;
        int wd = static_cast<int>(((day + 4) % 7 + 7) % 7);
        std::snprintf(key, sizeof(key), "d%d", wd);
      }
      ++counts[key];
    }
    json table = json::object();
    for (const auto& [k, n] : counts) table[k] = n;
    std::vector<std::string> texts;
    for (const auto& [k, n] : counts) texts.push_back(k + ":" + std::to_string(n));
    v.payload = std::move(table);
    if (!texts.empty()) v.rendered = label + ": " + join(texts, ", ");
    return v;
  }

  if (desc.renderer_id == "transition count") {
    // Consecutive location pairs within each session.
    std::map<std::string, std::size_t> counts;
    auto walk = [&](const std::vector<corpus::Stay>& ss) {
      for (std::size_t i = 1; i < ss.size(); ++i)
        ++counts[ss[i - 1].location_id + " > " + ss[i].location_id];
    };
    for (const auto& s : sample.history) walk(s.stays);
    walk(sample.context);
    json table = json::object();
    for (const auto& [k, n] : counts) table[k] = n;
    std::vector<std::string> texts;
    for (const auto& [k, n] : detail::ranked_counts(counts)) {
      texts.push_back(k + " x" + std::to_string(n));
      if (texts.size() >= 8) break;
    }
    v.payload = std::move(table);
    if (!texts.empty()) v.rendered = label + ": " + join(texts, ", ");
    return v;
  }

  if (desc.renderer_id == "dwell statistic") {
    std::string stat = params.value("stat", "mean");
    std::vector<double> gaps;
    auto walk = [&](const std::vector<corpus::Stay>& ss) {
      for (std::size_t i = 1; i < ss.size(); ++i)
        gaps.push_back(static_cast<double>(ss[i].timestamp - ss[i - 1].timestamp));
    };
    for (const auto& s : sample.history) walk(s.stays);
    walk(sample.context);
    if (!gaps.empty()) {
      double value = 0;
      if (stat == "mean") {
        for (double g : gaps) value += g;
        value /= static_cast<double>(gaps.size());
      } else if (stat == "max") {
        value = *std::max_element(gaps.begin(), gaps.end());
      } else {
        value = *std::min_element(gaps.begin(), gaps.end());
      }
      v.payload = canonical::num(value);
      v.rendered = label + " (" + stat + " gap s): " + format_fixed(value, 1);
    }
    return v;
  }

  throw Error("unknown renderer for feature " + desc.feature_id + ": " +
              desc.renderer_id);
}

// ---------------------------------------------------------------------------
// prompt block rendering
// ---------------------------------------------------------------------------

struct RenderResult {
  std::string text;
  std::vector<std::string> included;  // feature ids, in rendered order
  std::vector<std::string> warnings;
};

/// Weight-descending blocks (ties id-ascending); over-budget output drops
/// whole lowest-weight blocks until it fits. Empty-payload features never
/// render.
inline RenderResult render_feature_block(const std::vector<FeatureValue>& values,
                                         const std::map<std::string, double>& weights,
                                         int budget_tokens) {
  if (budget_tokens <= 0) throw Error("render budget must be positive");
  constexpr double kDefaultWeight = 0.5;
  auto weight_of = [&](const std::string& id) {
    auto it = weights.find(id);
    return it == weights.end() ? kDefaultWeight : it->second;
  };

  struct Block {
    const FeatureValue* value;
    double weight;
  };
  std::vector<Block> blocks;
  for (const auto& v : values) {
    if (v.rendered.empty()) continue;
    blocks.push_back({&v, weight_of(v.feature_id)});
  }
  std::stable_sort(blocks.begin(), blocks.end(), [](const Block& a, const Block& b) {
    if (a.weight != b.weight) return a.weight > b.weight;
    return a.value->feature_id < b.value->feature_id;
  });

  RenderResult out;
  std::size_t total = 0;
  for (const auto& b : blocks) total += token_count(b.value->rendered);
  while (!blocks.empty() && total > static_cast<std::size_t>(budget_tokens)) {
    total -= token_count(blocks.back().value->rendered);
    blocks.pop_back();
  }

  if (blocks.empty()) {
    // Nothing fits: keep the bare visit-times block so the prompt is never
    // featureless, and say so.
    for (const auto& v : values) {
      if (v.feature_id == "trajectory.times" && !v.rendered.empty()) {
        out.text = v.rendered + "\n";
        out.included.push_back(v.feature_id);
        break;
      }
    }
    out.warnings.push_back("feature budget too small; emitted minimal block");
    return out;
  }

  for (const auto& b : blocks) {
    out.text += b.value->rendered;
    out.text += "\n";
    out.included.push_back(b.value->feature_id);
  }
  return out;
}

}  // namespace armove::features
