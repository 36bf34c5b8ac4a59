#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "armove/common.hpp"
#include "armove/corpus.hpp"

namespace armove::config {

/// Everything a run needs, with the documented defaults. Text form is
/// "key = value" lines; unknown keys are validation errors so typos
/// surface instead of silently using defaults.
struct ExperimentConfig {
  // data
  std::string city = "city";
  std::string checkins;                   // check-in TSV (required to ingest)
  std::string social;                     // optional edge list
  std::string geo_fixture;                // optional geocode fixture
  std::string columns = "user,time,location";
  std::string session_policy = "window72h";  // window72h | window72h_gap | per_day
  std::string split = "7:1:2";
  int tz_offset_hours = 8;
  std::optional<double> grid_ref_lat;
  std::optional<double> grid_ref_lon;
  double grid_cell_km = 1.0;
  int min_stays = 4;
  int min_sessions = 5;

  // backend
  std::string model = "gpt-4o-mini";
  std::string backend = "mock";  // mock | replay | record | live
  std::string mock_rules;        // rules file (mock, record over mock)
  std::string fixtures;          // fixture file (replay, record output)

  // optimization
  double lambda = 0.5;
  int iterations = 5;
  std::uint64_t seed = 7;
  std::string grouping = "l1l2m";      // off | ol1 | l1l2 | l1l2m
  std::string fs_variant = "fs-lnfw";  // off | fs-ol | fs-lnf | fs-lnfw
  std::string generate_features = "default";  // default | on | off
  int test_samples = 200;
  int validation_samples = 50;
  int k_max = 12;
  int probe_cap = 20;
  double alpha = 0.5;
  int min_group_size = 5;
  double eta = 1.0;
  double w_max = 1.0;
  double tau_high = 0.7;

  // prompting
  int feature_budget = 1500;
  int total_budget = 3000;
  std::string candidate_policy = "history";  // history | open
  int major_venues = 10;
  int short_term_sessions = 2;
  int recent_stays = 10;

  // geocoding
  std::string geocoder = "fixture";  // fixture | live
  std::string geo_base_url;
  double poi_radius_m = 500;
};

namespace detail {

inline bool parse_double(const std::string& v, double& out) {
  try {
    std::size_t used = 0;
    out = std::stod(v, &used);
    return used == v.size();
  } catch (...) {
    return false;
  }
}

inline bool parse_int(const std::string& v, int& out) {
  try {
    std::size_t used = 0;
    out = std::stoi(v, &used);
    return used == v.size();
  } catch (...) {
    return false;
  }
}

inline bool parse_u64(const std::string& v, std::uint64_t& out) {
  try {
    std::size_t used = 0;
    out = std::stoull(v, &used);
    return used == v.size();
  } catch (...) {
    return false;
  }
}

}  // namespace detail

/// Applies one key/value pair; returns an error message or empty.
inline std::string set_field(ExperimentConfig& c, const std::string& key,
                             const std::string& value) {
  auto num = [&](double& slot) {
    return detail::parse_double(value, slot) ? "" : key + ": expected a number";
  };
  auto integer = [&](int& slot) {
    return detail::parse_int(value, slot) ? "" : key + ": expected an integer";
  };

  if (key == "city") { c.city = value; return ""; }
  if (key == "checkins") { c.checkins = value; return ""; }
  if (key == "social") { c.social = value; return ""; }
  if (key == "geo_fixture") { c.geo_fixture = value; return ""; }
  if (key == "columns") { c.columns = value; return ""; }
  if (key == "session_policy") { c.session_policy = value; return ""; }
  if (key == "split") { c.split = value; return ""; }
  if (key == "tz_offset_hours") return integer(c.tz_offset_hours);
  if (key == "grid_ref_lat") {
    double v;
    if (!detail::parse_double(value, v)) return key + ": expected a number";
    c.grid_ref_lat = v;
    return "";
  }
  if (key == "grid_ref_lon") {
    double v;
    if (!detail::parse_double(value, v)) return key + ": expected a number";
    c.grid_ref_lon = v;
    return "";
  }
  if (key == "grid_cell_km") return num(c.grid_cell_km);
  if (key == "min_stays") return integer(c.min_stays);
  if (key == "min_sessions") return integer(c.min_sessions);
  if (key == "model") { c.model = value; return ""; }
  if (key == "backend") { c.backend = value; return ""; }
  if (key == "mock_rules") { c.mock_rules = value; return ""; }
  if (key == "fixtures") { c.fixtures = value; return ""; }
  if (key == "lambda") return num(c.lambda);
  if (key == "iterations") return integer(c.iterations);
  if (key == "seed")
    return detail::parse_u64(value, c.seed) ? "" : key + ": expected an unsigned integer";
  if (key == "grouping") { c.grouping = to_lower(value); return ""; }
  if (key == "fs_variant") { c.fs_variant = to_lower(value); return ""; }
  if (key == "generate_features") { c.generate_features = to_lower(value); return ""; }
  if (key == "test_samples") return integer(c.test_samples);
  if (key == "validation_samples") return integer(c.validation_samples);
  if (key == "k_max") return integer(c.k_max);
  if (key == "probe_cap") return integer(c.probe_cap);
  if (key == "alpha") return num(c.alpha);
  if (key == "min_group_size") return integer(c.min_group_size);
  if (key == "eta") return num(c.eta);
  if (key == "w_max") return num(c.w_max);
  if (key == "tau_high") return num(c.tau_high);
  if (key == "feature_budget") return integer(c.feature_budget);
  if (key == "total_budget") return integer(c.total_budget);
  if (key == "candidate_policy") { c.candidate_policy = to_lower(value); return ""; }
  if (key == "major_venues") return integer(c.major_venues);
  if (key == "short_term_sessions") return integer(c.short_term_sessions);
  if (key == "recent_stays") return integer(c.recent_stays);
  if (key == "geocoder") { c.geocoder = to_lower(value); return ""; }
  if (key == "geo_base_url") { c.geo_base_url = value; return ""; }
  if (key == "poi_radius_m") return num(c.poi_radius_m);
  return "unknown key: " + key;
}

struct ParseOutcome {
  ExperimentConfig config;
  std::vector<std::string> errors;
};

inline ParseOutcome parse_config(const std::string& text) {
  ParseOutcome out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto eq = t.find('=');
    if (eq == std::string::npos) {
      out.errors.push_back("line " + std::to_string(lineno) + ": expected key = value");
      continue;
    }
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    std::string err = set_field(out.config, key, value);
    if (!err.empty())
      out.errors.push_back("line " + std::to_string(lineno) + ": " + err);
  }
  return out;
}

inline ParseOutcome load_config(const std::filesystem::path& path) {
  return parse_config(read_file(path));
}

inline bool one_of(const std::string& v, std::initializer_list<const char*> allowed) {
  for (const char* a : allowed)
    if (v == a) return true;
  return false;
}

/// Field-level validation. `base_dir` anchors relative paths.
inline std::vector<std::string> validate(const ExperimentConfig& c,
                                         const std::filesystem::path& base_dir) {
  namespace fs = std::filesystem;
  std::vector<std::string> errors;
  auto check_path = [&](const std::string& p, const char* field, bool required) {
    if (p.empty()) {
      if (required) errors.push_back(std::string(field) + ": required");
      return;
    }
    fs::path full = fs::path(p).is_absolute() ? fs::path(p) : base_dir / p;
    if (!fs::exists(full))
      errors.push_back(std::string(field) + ": no such file: " + full.string());
  };

  check_path(c.checkins, "checkins", true);
  check_path(c.social, "social", false);
  check_path(c.geo_fixture, "geo_fixture", false);
  if (c.backend == "mock" || c.backend == "record")
    check_path(c.mock_rules, "mock_rules", true);
  if (c.backend == "replay") check_path(c.fixtures, "fixtures", true);
  if (c.backend == "record" && c.fixtures.empty())
    errors.push_back("fixtures: required for backend = record");

  if (!one_of(c.session_policy, {"window72h", "window72h_gap", "per_day"}))
    errors.push_back("session_policy: must be window72h, window72h_gap, or per_day");
  if (!one_of(c.backend, {"mock", "replay", "record", "live"}))
    errors.push_back("backend: must be mock, replay, record, or live");
  if (!one_of(c.grouping, {"off", "ol1", "l1l2", "l1l2m"}))
    errors.push_back("grouping: must be off, ol1, l1l2, or l1l2m");
  if (!one_of(c.fs_variant, {"off", "fs-ol", "fs-lnf", "fs-lnfw"}))
    errors.push_back("fs_variant: must be off, fs-ol, fs-lnf, or fs-lnfw");
  if (!one_of(c.generate_features, {"default", "on", "off"}))
    errors.push_back("generate_features: must be default, on, or off");
  if (!one_of(c.candidate_policy, {"history", "open"}))
    errors.push_back("candidate_policy: must be history or open");
  if (!one_of(c.geocoder, {"fixture", "live"}))
    errors.push_back("geocoder: must be fixture or live");
  if (c.geocoder == "live" && c.geo_base_url.empty())
    errors.push_back("geo_base_url: required for geocoder = live");

  if (c.lambda < 0 || c.lambda > 1) errors.push_back("lambda: must be in [0,1]");
  if (c.alpha < 0 || c.alpha > 1) errors.push_back("alpha: must be in [0,1]");
  if (c.iterations < 1) errors.push_back("iterations: must be >= 1");
  if (c.test_samples < 1) errors.push_back("test_samples: must be >= 1");
  if (c.validation_samples < 1) errors.push_back("validation_samples: must be >= 1");
  if (c.k_max < 1) errors.push_back("k_max: must be >= 1");
  if (c.probe_cap < 1) errors.push_back("probe_cap: must be >= 1");
  if (c.min_group_size < 1) errors.push_back("min_group_size: must be >= 1");
  if (c.eta <= 0) errors.push_back("eta: must be positive");
  if (c.w_max <= 0) errors.push_back("w_max: must be positive");
  if (c.tau_high < 0 || c.tau_high > c.w_max)
    errors.push_back("tau_high: must be in [0, w_max]");
  if (c.feature_budget < 1) errors.push_back("feature_budget: must be >= 1");
  if (c.total_budget < 1) errors.push_back("total_budget: must be >= 1");
  if (c.min_stays < 1) errors.push_back("min_stays: must be >= 1");
  if (c.min_sessions < 1) errors.push_back("min_sessions: must be >= 1");
  if (c.grid_cell_km <= 0) errors.push_back("grid_cell_km: must be positive");
  if ((c.grid_ref_lat.has_value()) != (c.grid_ref_lon.has_value()))
    errors.push_back("grid_ref_lat/grid_ref_lon: set both or neither");

  try {
    corpus::split_ratios_from_string(c.split);
  } catch (const Error& e) {
    errors.push_back(std::string("split: ") + e.what());
  }
  return errors;
}

/// Canonical key = value snapshot: every field, sorted keys, normalized
/// values. Equal configs produce equal bytes.
inline std::string snapshot(const ExperimentConfig& c) {
  std::map<std::string, std::string> kv;
  kv["alpha"] = format_fixed(c.alpha, 6);
  kv["backend"] = c.backend;
  kv["candidate_policy"] = c.candidate_policy;
  kv["checkins"] = c.checkins;
  kv["city"] = c.city;
  kv["columns"] = c.columns;
  kv["eta"] = format_fixed(c.eta, 6);
  kv["feature_budget"] = std::to_string(c.feature_budget);
  kv["fixtures"] = c.fixtures;
  kv["fs_variant"] = c.fs_variant;
  kv["generate_features"] = c.generate_features;
  kv["geo_base_url"] = c.geo_base_url;
  kv["geo_fixture"] = c.geo_fixture;
  kv["geocoder"] = c.geocoder;
  kv["grid_cell_km"] = format_fixed(c.grid_cell_km, 6);
  kv["grid_ref_lat"] = c.grid_ref_lat ? format_fixed(*c.grid_ref_lat, 6) : "";
  kv["grid_ref_lon"] = c.grid_ref_lon ? format_fixed(*c.grid_ref_lon, 6) : "";
  kv["grouping"] = c.grouping;
  kv["iterations"] = std::to_string(c.iterations);
  kv["k_max"] = std::to_string(c.k_max);
  kv["lambda"] = format_fixed(c.lambda, 6);
  kv["major_venues"] = std::to_string(c.major_venues);
  kv["min_group_size"] = std::to_string(c.min_group_size);
  kv["min_sessions"] = std::to_string(c.min_sessions);
  kv["min_stays"] = std::to_string(c.min_stays);
  kv["mock_rules"] = c.mock_rules;
  kv["model"] = c.model;
  kv["poi_radius_m"] = format_fixed(c.poi_radius_m, 6);
  kv["probe_cap"] = std::to_string(c.probe_cap);
  kv["recent_stays"] = std::to_string(c.recent_stays);
  kv["seed"] = std::to_string(c.seed);
  kv["session_policy"] = c.session_policy;
  kv["short_term_sessions"] = std::to_string(c.short_term_sessions);
  kv["social"] = c.social;
  kv["split"] = c.split;
  kv["tau_high"] = format_fixed(c.tau_high, 6);
  kv["test_samples"] = std::to_string(c.test_samples);
  kv["total_budget"] = std::to_string(c.total_budget);
  kv["tz_offset_hours"] = std::to_string(c.tz_offset_hours);
  kv["validation_samples"] = std::to_string(c.validation_samples);
  kv["w_max"] = format_fixed(c.w_max, 6);

  // Unset optionals are omitted so the snapshot re-parses cleanly.
  std::string out;
  for (const auto& [k, v] : kv) {
    if (v.empty()) continue;
    out += k + " = " + v + "\n";
  }
  return out;
}

}  // namespace armove::config
