#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "armove/canonical.hpp"
#include "armove/common.hpp"

namespace armove::metrics {

using canonical::json;

/// Minimal view of one scored prediction: the ranked candidate list, the
/// ground-truth location, and whether the model output failed to parse
/// (failed records always score as misses).
struct ScoredSample {
  std::string sample_id;
  std::vector<std::string> ranked;
  std::string truth;
  bool parse_failed = false;
};

inline double acc_at_k(const std::vector<ScoredSample>& batch, std::size_t k) {
  if (k < 1) throw Error("acc_at_k: k must be >= 1");
  if (batch.empty()) throw Error("acc_at_k: empty batch");
  std::size_t hits = 0;
  for (const auto& s : batch) {
    if (s.parse_failed) continue;
    std::size_t limit = std::min(k, s.ranked.size());
    for (std::size_t i = 0; i < limit; ++i) {
      if (s.ranked[i] == s.truth) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(batch.size());
}

/// Single-relevant-item NDCG: gain 1/log2(rank+1) when the truth sits at
/// 1-indexed rank <= k, else 0. Ideal DCG is 1, so the mean gain is the score.
inline double ndcg_at_k(const std::vector<ScoredSample>& batch, std::size_t k = 5) {
  if (k < 1) throw Error("ndcg_at_k: k must be >= 1");
  if (batch.empty()) throw Error("ndcg_at_k: empty batch");
  double total = 0.0;
  for (const auto& s : batch) {
    if (s.parse_failed) continue;
    std::size_t limit = std::min(k, s.ranked.size());
    for (std::size_t i = 0; i < limit; ++i) {
      if (s.ranked[i] == s.truth) {
        total += 1.0 / std::log2(static_cast<double>(i + 2));
        break;
      }
    }
  }
  return total / static_cast<double>(batch.size());
}

struct MetricsReport {
  double acc1 = 0.0;
  double acc5 = 0.0;
  double ndcg5 = 0.0;
  std::size_t n_samples = 0;
  std::size_t n_parse_failures = 0;
  std::vector<ScoredSample> samples;

  json to_json() const {
    json j;
    j["acc1"] = canonical::num(acc1);
    j["acc5"] = canonical::num(acc5);
    j["ndcg5"] = canonical::num(ndcg5);
    j["n_samples"] = n_samples;
    j["n_parse_failures"] = n_parse_failures;
    json recs = json::array();
    for (const auto& s : samples) {
      json r;
      r["failed"] = s.parse_failed;
      r["ranked"] = s.ranked;
      r["sample"] = s.sample_id;
      r["truth"] = s.truth;
      recs.push_back(std::move(r));
    }
    j["samples"] = std::move(recs);
    return j;
  }

  static MetricsReport from_json(const json& j) {
    MetricsReport r;
    r.acc1 = j.at("acc1").get<double>();
    r.acc5 = j.at("acc5").get<double>();
    r.ndcg5 = j.at("ndcg5").get<double>();
    r.n_samples = j.at("n_samples").get<std::size_t>();
    r.n_parse_failures = j.at("n_parse_failures").get<std::size_t>();
    if (j.contains("samples")) {
      for (const auto& rec : j.at("samples")) {
        ScoredSample s;
        s.parse_failed = rec.at("failed").get<bool>();
        s.ranked = rec.at("ranked").get<std::vector<std::string>>();
        s.sample_id = rec.at("sample").get<std::string>();
        s.truth = rec.at("truth").get<std::string>();
        r.samples.push_back(std::move(s));
      }
    }
    return r;
  }
};

inline MetricsReport compute(const std::vector<ScoredSample>& batch) {
  MetricsReport r;
  r.acc1 = acc_at_k(batch, 1);
  r.acc5 = acc_at_k(batch, 5);
  r.ndcg5 = ndcg_at_k(batch, 5);
  r.n_samples = batch.size();
  for (const auto& s : batch)
    if (s.parse_failed) ++r.n_parse_failures;
  r.samples = batch;
  return r;
}

/// A published result row rendered alongside computed metrics. These numbers
/// come from the literature and are labeled as such, never recomputed here.
struct ReferenceRow {
  std::string model;
  std::string city;
  double acc1;
  double acc5;
  double ndcg5;
};

inline const std::vector<ReferenceRow>& published_reference_rows() {
  static const std::vector<ReferenceRow> rows = {
      {"ARMove", "Shanghai(ISP)", 0.232, 0.477, 0.360},
      {"ARMove", "Moscow", 0.183, 0.383, 0.293},
      {"ARMove", "Tokyo", 0.170, 0.455, 0.320},
      {"ARMove", "Saopaulo", 0.200, 0.390, 0.300},
      {"AgentMove", "Shanghai(ISP)", 0.210, 0.445, 0.338},
      {"AgentMove", "Moscow", 0.155, 0.370, 0.263},
      {"AgentMove", "Tokyo", 0.160, 0.475, 0.323},
      {"AgentMove", "Saopaulo", 0.215, 0.370, 0.296},
  };
  return rows;
}

inline constexpr const char* kReferenceLabel = "published reference - not reproduced";

/// Aligned plain-text comparison table followed by the same rows as CSV.
inline std::string render_report(const std::string& run_label,
                                 const std::string& city,
                                 const MetricsReport& metrics,
                                 const std::vector<ReferenceRow>& references =
                                     published_reference_rows()) {
  struct Row {
    std::string model, city, a1, a5, n5, note;
  };
  std::vector<Row> rows;
  rows.push_back({run_label, city, format_fixed(metrics.acc1, 4),
                  format_fixed(metrics.acc5, 4), format_fixed(metrics.ndcg5, 4),
                  "computed (" + std::to_string(metrics.n_samples) + " samples)"});
  for (const auto& r : references) {
    rows.push_back({r.model, r.city, format_fixed(r.acc1, 3),
                    format_fixed(r.acc5, 3), format_fixed(r.ndcg5, 3),
                    kReferenceLabel});
  }

  const std::vector<std::string> header = {"model", "city",   "Acc@1",
                                           "Acc@5", "NDCG@5", "note"};
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  auto cell = [](const Row& r, std::size_t c) -> const std::string& {
    switch (c) {
      case 0: return r.model;
      case 1: return r.city;
      case 2: return r.a1;
      case 3: return r.a5;
      case 4: return r.n5;
      default: return r.note;
    }
  };
  for (const auto& r : rows)
    for (std::size_t c = 0; c < header.size(); ++c)
      width[c] = std::max(width[c], cell(r, c).size());

  std::string out;
  auto pad = [&](const std::string& s, std::size_t w) {
    out += s;
    out.append(w - s.size() + 2, ' ');
  };
  for (std::size_t c = 0; c < header.size(); ++c) pad(header[c], width[c]);
  out += "\n";
  for (std::size_t c = 0; c < header.size(); ++c) {
    out.append(width[c], '-');
    out += "  ";
  }
  out += "\n";
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < header.size(); ++c) pad(cell(r, c), width[c]);
    out += "\n";
  }
  out += "\n";
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c) out += ",";
    out += header[c];
  }
  out += "\n";
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (c) out += ",";
      out += cell(r, c);
    }
    out += "\n";
  }
  return out;
}

}  // namespace armove::metrics
