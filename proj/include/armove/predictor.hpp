#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "armove/canonical.hpp"
#include "armove/common.hpp"
#include "armove/corpus.hpp"
#include "armove/features.hpp"
#include "armove/llm.hpp"
#include "armove/metrics.hpp"

namespace armove::predictor {

using canonical::json;

/// Escape token for the candidate list: lets the model say "none of these".
inline const std::string kUnseenToken = "unseen";

struct RankedPrediction {
  std::string sample_id;
  std::vector<std::string> ranked;  // deduplicated, length <= 10
  std::string reason;
  std::string raw_response;
  std::string parse_status;  // ok | fallback | failed
  std::string truth;

  json to_json() const {
    json j;
    j["ranked"] = ranked;
    j["reason"] = reason;
    j["sample"] = sample_id;
    j["status"] = parse_status;
    j["truth"] = truth;
    return j;
  }

  static RankedPrediction from_json(const json& j) {
    RankedPrediction p;
    p.ranked = j.at("ranked").get<std::vector<std::string>>();
    p.reason = j.value("reason", "");
    p.sample_id = j.at("sample").get<std::string>();
    p.parse_status = j.at("status").get<std::string>();
    p.truth = j.at("truth").get<std::string>();
    return p;
  }

  metrics::ScoredSample to_scored() const {
    metrics::ScoredSample s;
    s.sample_id = sample_id;
    s.ranked = ranked;
    s.truth = truth;
    s.parse_failed = parse_status == "failed";
    return s;
  }
};

struct PromptConfig {
  std::string model_id = "gpt-4o-mini";
  double temperature = 0.0;
  int max_tokens = 512;
  std::string candidate_policy = "history";  // history | open
  int feature_budget = 1500;  // whitespace tokens for the feature section
  int total_budget = 3000;    // whole prompt, both messages
  int candidate_cap = 50;
  int context_stay_cap = 20;
};

// ---------------------------------------------------------------------------
// prompt assembly
// ---------------------------------------------------------------------------

/// Frequency-ordered historical locations (ties first-seen), capped, plus
/// the escape token.
inline std::vector<std::string> history_candidates(
    const corpus::PredictionSample& sample, int cap) {
  std::map<std::string, std::size_t> counts;
  std::vector<std::string> first_seen;
  for (const auto& sess : sample.history)
    for (const auto& st : sess.stays)
      if (counts[st.location_id]++ == 0) first_seen.push_back(st.location_id);
  for (const auto& st : sample.context)
    if (counts[st.location_id]++ == 0) first_seen.push_back(st.location_id);
  std::stable_sort(first_seen.begin(), first_seen.end(),
                   [&](const std::string& a, const std::string& b) {
                     return counts.at(a) > counts.at(b);
                   });
  if (first_seen.size() > static_cast<std::size_t>(cap)) first_seen.resize(cap);
  first_seen.push_back(kUnseenToken);
  return first_seen;
}

struct PromptInputs {
  std::string feature_text;  // pre-rendered, weight-ordered blocks
  std::string group_label;   // empty when grouping is off
  std::vector<std::string> candidates;  // used only under policy "history"
};

namespace detail {

inline std::string truncate_tokens(const std::string& text, std::size_t limit) {
  std::vector<std::string> toks;
  std::string cur;
  for (char c : text) {
    if (c == ' ' || c == '\n' || c == '\t') {
      if (!cur.empty()) toks.push_back(std::move(cur)), cur.clear();
    } else {
      cur += c;
    }
    if (toks.size() >= limit) break;
  }
  if (!cur.empty() && toks.size() < limit) toks.push_back(std::move(cur));
  return join(toks, " ");
}

}  // namespace detail

inline const std::string kSystemPrompt =
    "TASK: predict-next-location\n"
    "You predict the next location a person will visit. Use the feature "
    "summary and the ongoing session. Reply with JSON only, exactly "
    "{\"prediction\": [\"<location_id>\", ...], \"reason\": \"<short "
    "explanation>\"}, listing up to 10 location ids, most likely first.";

inline llm::ChatRequest assemble_prompt(const corpus::PredictionSample& sample,
                                        const PromptInputs& inputs,
                                        const PromptConfig& cfg = {}) {
  std::string user;
  if (!inputs.group_label.empty())
    user += "user group: " + inputs.group_label + "\n";

  user += "features:\n" + inputs.feature_text;

  user += "current session so far:\n";
  std::size_t skip = sample.context.size() > static_cast<std::size_t>(cfg.context_stay_cap)
                         ? sample.context.size() - cfg.context_stay_cap
                         : 0;
  for (std::size_t i = skip; i < sample.context.size(); ++i) {
    const auto& st = sample.context[i];
    user += "- " + st.location_id + " at " + format_utc(st.timestamp) + "\n";
  }

  user += "predict the location visited at " + format_utc(sample.target.timestamp) + "\n";

  if (cfg.candidate_policy == "history" && !inputs.candidates.empty())
    user += "candidates: " + join(inputs.candidates, ", ") + "\n";

  // Hard ceiling: budgets upstream should make this a no-op, but the whole
  // prompt must never exceed the configured total.
  std::size_t system_tokens = token_count(kSystemPrompt);
  std::size_t total = static_cast<std::size_t>(cfg.total_budget);
  if (system_tokens + token_count(user) > total && total > system_tokens)
    user = detail::truncate_tokens(user, total - system_tokens);

  llm::ChatRequest req;
  req.model_id = cfg.model_id;
  req.temperature = cfg.temperature;
  req.max_tokens = cfg.max_tokens;
  req.purpose = "predict";
  req.messages.push_back({"system", kSystemPrompt});
  req.messages.push_back({"user", std::move(user)});
  return req;
}

// ---------------------------------------------------------------------------
// prediction
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> coerce_ids(const json& arr) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& item : arr) {
    std::string id;
    if (item.is_string())
      id = item.get<std::string>();
    else if (item.is_number_integer())
      id = std::to_string(item.get<std::int64_t>());
    else if (item.is_number())
      id = item.dump();
    else
      continue;  // objects and arrays are not location ids
    id = trim(id);
    if (id.empty() || !seen.insert(id).second) continue;
    out.push_back(std::move(id));
    if (out.size() == 10) break;
  }
  return out;
}

/// Frequency-baseline guess for responses we could not use.
inline std::vector<std::string> fallback_ranking(const corpus::PredictionSample& sample) {
  auto cands = history_candidates(sample, 10);
  if (!cands.empty() && cands.back() == kUnseenToken) cands.pop_back();
  if (cands.size() > 10) cands.resize(10);
  return cands;
}

}  // namespace detail

/// Never throws: every failure mode lands in parse_status.
inline RankedPrediction predict(const corpus::PredictionSample& sample,
                                const llm::ChatRequest& request,
                                llm::Backend& backend,
                                llm::TranscriptLog* log = nullptr) {
  RankedPrediction pred;
  pred.sample_id = sample.sample_id();
  pred.truth = sample.target.location_id;

  llm::ChatResponse resp;
  try {
    resp = backend.complete(request);
  } catch (const std::exception& e) {
    pred.parse_status = "failed";
    pred.reason = std::string("backend error: ") + e.what();
    return pred;
  }
  if (log) log->append(request, resp);
  pred.raw_response = resp.text;

  json payload;
  bool parsed = true;
  try {
    payload = llm::extract_json_payload(resp.text);
  } catch (const llm::ParseError&) {
    parsed = false;
  }

  if (parsed && payload.is_object() && payload.contains("prediction") &&
      payload["prediction"].is_array()) {
    pred.ranked = detail::coerce_ids(payload["prediction"]);
    pred.reason = payload.value("reason", "");
  }

  if (!pred.ranked.empty()) {
    pred.parse_status = "ok";
    return pred;
  }

  // Unusable output: degrade to the user's top historical locations when
  // there are any, otherwise report a hard failure.
  pred.ranked = detail::fallback_ranking(sample);
  if (pred.ranked.empty()) {
    pred.parse_status = "failed";
    if (pred.reason.empty()) pred.reason = "no usable prediction in response";
  } else {
    pred.parse_status = "fallback";
    pred.reason = "unusable response; ranked by historical frequency";
  }
  return pred;
}

/// Serial batch; a single bad sample never aborts the run.
template <class PromptFn>
std::vector<RankedPrediction> run_batch(
    const std::vector<corpus::PredictionSample>& samples, PromptFn make_request,
    llm::Backend& backend, llm::TranscriptLog* log = nullptr) {
  std::vector<RankedPrediction> out;
  out.reserve(samples.size());
  for (const auto& sample : samples)
    out.push_back(predict(sample, make_request(sample), backend, log));
  return out;
}

inline void save_predictions(const std::filesystem::path& path,
                             const std::vector<RankedPrediction>& preds) {
  std::vector<json> records;
  records.reserve(preds.size());
  for (const auto& p : preds) records.push_back(p.to_json());
  canonical::write_json_lines(path, records);
}

inline std::vector<RankedPrediction> load_predictions(
    const std::filesystem::path& path) {
  std::vector<RankedPrediction> out;
  for (const auto& j : canonical::read_json_lines(path))
    out.push_back(RankedPrediction::from_json(j));
  return out;
}

inline std::vector<metrics::ScoredSample> to_scored(
    const std::vector<RankedPrediction>& preds) {
  std::vector<metrics::ScoredSample> out;
  out.reserve(preds.size());
  for (const auto& p : preds) out.push_back(p.to_scored());
  return out;
}

}  // namespace armove::predictor
