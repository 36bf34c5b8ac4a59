#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "armove/common.hpp"

// Canonical structured text: compact JSON, keys sorted (nlohmann's default
// object is an ordered std::map), doubles rounded to 1e-6 before storage.
// Every artifact the pipeline persists goes through these helpers so that
// identical runs produce identical bytes.

namespace armove::canonical {

using json = nlohmann::json;

/// Round to 6 decimals; -0.0 normalized to 0.0.
inline double num(double x) {
  double r = std::round(x * 1e6) / 1e6;
  if (r == 0.0) r = 0.0;
  return r;
}

inline std::string dump(const json& j) { return j.dump(); }

inline std::string dump_line(const json& j) { return j.dump() + "\n"; }

inline json parse(const std::string& text) {
  return json::parse(text);
}

inline void write_json(const std::filesystem::path& path, const json& j) {
  write_file_atomic(path, j.dump() + "\n");
}

inline json read_json(const std::filesystem::path& path) {
  return json::parse(read_file(path));
}

inline void write_json_lines(const std::filesystem::path& path,
                             const std::vector<json>& records) {
  std::string out;
  for (const auto& r : records) out += dump_line(r);
  write_file_atomic(path, out);
}

inline std::vector<json> read_json_lines(const std::filesystem::path& path) {
  std::vector<json> records;
  for (const auto& line : read_lines(path)) {
    if (trim(line).empty()) continue;
    records.push_back(json::parse(line));
  }
  return records;
}

}  // namespace armove::canonical
