#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "armove/canonical.hpp"
#include "armove/common.hpp"
#include "armove/corpus.hpp"
#include "armove/features.hpp"
#include "armove/llm.hpp"
#include "armove/metrics.hpp"
#include "armove/predictor.hpp"

namespace armove::optimizer {

using canonical::json;
using features::Registry;

using WeightMap = std::map<std::string, double>;

constexpr double kInitialWeight = 0.5;

struct WeightParams {
  double eta = 1.0;
  double w_max = 1.0;
  double tau_high = 0.7;
};

struct FeatureWeights {
  WeightMap global;
  std::map<std::string, WeightMap> per_group;
  WeightParams params;

  /// Every registry id gets the initial weight unless already present.
  void ensure_initialized(const Registry& registry) {
    for (const auto* d : registry.all())
      global.emplace(d->feature_id, kInitialWeight);
  }

  double global_weight(const std::string& id) const {
    auto it = global.find(id);
    return it == global.end() ? kInitialWeight : it->second;
  }

  json to_json() const {
    json j;
    json g = json::object();
    for (const auto& [id, w] : global) g[id] = canonical::num(w);
    j["global"] = std::move(g);
    json pg = json::object();
    for (const auto& [gid, m] : per_group) {
      json gm = json::object();
      for (const auto& [id, w] : m) gm[id] = canonical::num(w);
      pg[gid] = std::move(gm);
    }
    j["per_group"] = std::move(pg);
    j["eta"] = canonical::num(params.eta);
    j["tau_high"] = canonical::num(params.tau_high);
    j["w_max"] = canonical::num(params.w_max);
    return j;
  }

  static FeatureWeights from_json(const json& j) {
    FeatureWeights w;
    for (const auto& [id, v] : j.at("global").items())
      w.global[id] = v.get<double>();
    if (j.contains("per_group"))
      for (const auto& [gid, m] : j.at("per_group").items())
        for (const auto& [id, v] : m.items()) w.per_group[gid][id] = v.get<double>();
    w.params.eta = j.value("eta", 1.0);
    w.params.tau_high = j.value("tau_high", 0.7);
    w.params.w_max = j.value("w_max", 1.0);
    return w;
  }
};

struct ObjectiveConfig {
  double lambda = 0.5;
  int k_primary = 1;
  int k_secondary = 5;
  int validation_sample_count = 50;
};

struct FeatureSet {
  std::vector<std::string> standard;     // full standard pool available
  std::vector<std::string> generated;    // model-proposed descriptors
  std::vector<std::string> high_weight;  // weight >= tau_high at selection time
  std::optional<std::string> group_label_feature;
  std::vector<std::string> selected;     // final ordered choice, <= k_max

  json to_json() const {
    json j;
    j["generated"] = generated;
    if (group_label_feature) j["group_label_feature"] = *group_label_feature;
    j["high_weight"] = high_weight;
    j["selected"] = selected;
    j["standard"] = standard;
    return j;
  }

  static FeatureSet from_json(const json& j) {
    FeatureSet f;
    f.generated = j.at("generated").get<std::vector<std::string>>();
    if (j.contains("group_label_feature"))
      f.group_label_feature = j.at("group_label_feature").get<std::string>();
    f.high_weight = j.at("high_weight").get<std::vector<std::string>>();
    f.selected = j.at("selected").get<std::vector<std::string>>();
    f.standard = j.at("standard").get<std::vector<std::string>>();
    return f;
  }
};

struct IterationRecord {
  int index = 0;  // 1-based
  std::vector<std::string> selected;
  double j = 0;
  double acc1 = 0;
  double acc5 = 0;

  json to_json() const {
    json r;
    r["acc1"] = canonical::num(acc1);
    r["acc5"] = canonical::num(acc5);
    r["index"] = index;
    r["j"] = canonical::num(j);
    r["selected"] = selected;
    return r;
  }

  static IterationRecord from_json(const json& r) {
    IterationRecord rec;
    rec.acc1 = r.at("acc1").get<double>();
    rec.acc5 = r.at("acc5").get<double>();
    rec.index = r.at("index").get<int>();
    rec.j = r.at("j").get<double>();
    rec.selected = r.at("selected").get<std::vector<std::string>>();
    return rec;
  }
};

struct OptimizationArtifact {
  std::string scope;  // city name or group id
  int iterations_run = 0;
  std::vector<IterationRecord> records;
  FeatureSet best;
  double best_j = 0;
  WeightMap final_weights;
  WeightMap weight_deltas;  // net change per feature, for group propagation
  std::string groups_ref;   // file holding the group profiles, when any
  json metadata;            // seed, lambda, iterations, caps

  json to_json() const {
    json j;
    j["best"] = best.to_json();
    j["best_j"] = canonical::num(best_j);
    json deltas = json::object();
    for (const auto& [id, d] : weight_deltas) deltas[id] = canonical::num(d);
    j["deltas"] = std::move(deltas);
    j["groups_ref"] = groups_ref;
    j["iterations"] = iterations_run;
    j["metadata"] = metadata;
    json recs = json::array();
    for (const auto& r : records) recs.push_back(r.to_json());
    j["records"] = std::move(recs);
    j["scope"] = scope;
    json w = json::object();
    for (const auto& [id, v] : final_weights) w[id] = canonical::num(v);
    j["weights"] = std::move(w);
    return j;
  }

  static OptimizationArtifact from_json(const json& j) {
    OptimizationArtifact a;
    a.best = FeatureSet::from_json(j.at("best"));
    a.best_j = j.at("best_j").get<double>();
    for (const auto& [id, d] : j.at("deltas").items())
      a.weight_deltas[id] = d.get<double>();
    a.groups_ref = j.value("groups_ref", "");
    a.iterations_run = j.at("iterations").get<int>();
    a.metadata = j.at("metadata");
    for (const auto& r : j.at("records")) a.records.push_back(IterationRecord::from_json(r));
    a.scope = j.at("scope").get<std::string>();
    for (const auto& [id, v] : j.at("weights").items())
      a.final_weights[id] = v.get<double>();
    return a;
  }

  void save(const std::filesystem::path& path) const {
    canonical::write_json(path, to_json());
  }

  static OptimizationArtifact load(const std::filesystem::path& path) {
    return from_json(canonical::read_json(path));
  }
};

// ---------------------------------------------------------------------------
// objective
// ---------------------------------------------------------------------------

/// Produces a full prediction for one sample under a feature set and the
/// weights in force; the pipeline binds rendering + backend into this.
using PredictFn = std::function<predictor::RankedPrediction(
    const corpus::PredictionSample&, const FeatureSet&, const WeightMap&)>;

struct ObjectiveResult {
  double j = 0;
  double acc1 = 0;
  double acc5 = 0;
  bool all_failed = false;
};

/// The blended accuracy objective. lambda trades top-1 against top-5.
inline double objective_value(double lambda, double acc1, double acc5) {
  if (lambda < 0 || lambda > 1) throw Error("lambda must be in [0,1]");
  return lambda * acc1 + (1.0 - lambda) * acc5;
}

inline ObjectiveResult evaluate_objective(
    const FeatureSet& features, const WeightMap& weights,
    const std::vector<corpus::PredictionSample>& samples,
    const ObjectiveConfig& cfg, const PredictFn& predict) {
  if (samples.empty()) throw Error("objective needs at least one sample");
  if (cfg.lambda < 0 || cfg.lambda > 1) throw Error("lambda must be in [0,1]");
  std::vector<metrics::ScoredSample> scored;
  scored.reserve(samples.size());
  for (const auto& s : samples) scored.push_back(predict(s, features, weights).to_scored());

  ObjectiveResult r;
  r.all_failed = std::all_of(scored.begin(), scored.end(),
                             [](const auto& s) { return s.parse_failed; });
  if (!r.all_failed) {
    r.acc1 = metrics::acc_at_k(scored, cfg.k_primary);
    r.acc5 = metrics::acc_at_k(scored, cfg.k_secondary);
  }
  r.j = objective_value(cfg.lambda, r.acc1, r.acc5);
  return r;
}

// ---------------------------------------------------------------------------
// new feature generation
// ---------------------------------------------------------------------------

struct GenerationOutcome {
  std::vector<std::string> added;  // feature ids now in the registry
  std::vector<std::pair<std::string, std::string>> rejected;  // name, reason
  std::vector<std::string> duplicates;
};

inline std::string describe_standard_pools(const Registry& registry) {
  std::string out = "standard feature pools:\n";
  for (const auto* d : registry.all()) {
    if (d->origin != "standard") continue;
    out += "- " + d->feature_id + " (" + d->pool + "): " + d->subcategory + "\n";
  }
  return out;
}

inline llm::ChatRequest generation_request(const std::string& std_summary,
                                           const std::string& corpus_stats,
                                           const std::string& model_id) {
  llm::ChatRequest req;
  req.model_id = model_id;
  req.purpose = "generate";
  req.messages.push_back(
      {"system",
       "TASK: generate-features\n"
       "You design additional mobility features. Given the standard pools and "
       "corpus statistics, propose missing feature dimensions. Reply with JSON "
       "only: a list of {\"name\": str, \"description\": str, "
       "\"computation_rule\": {\"primitive\": str, \"params\": object}}. "
       "Allowed primitives: frequency-over-field, time-bucket histogram, "
       "transition count, dwell statistic."});
  req.messages.push_back({"user", std_summary + "\ncorpus statistics:\n" + corpus_stats});
  return req;
}

inline GenerationOutcome generate_new_features(const std::string& std_summary,
                                               const std::string& corpus_stats,
                                               llm::Backend& backend,
                                               Registry& registry,
                                               const std::string& model_id,
                                               llm::TranscriptLog* log = nullptr) {
  GenerationOutcome out;
  llm::ChatRequest req = generation_request(std_summary, corpus_stats, model_id);
  llm::ChatResponse resp;
  try {
    resp = backend.complete(req);
  } catch (const std::exception& e) {
    out.rejected.emplace_back("(backend)", e.what());
    return out;
  }
  if (log) log->append(req, resp);

  json payload;
  try {
    payload = llm::extract_json_payload(resp.text);
  } catch (const llm::ParseError&) {
    return out;  // unusable proposal round; the standard pool carries on
  }
  if (!payload.is_array()) return out;

  for (const auto& item : payload) {
    if (!item.is_object() || !item.contains("name") || !item["name"].is_string()) {
      out.rejected.emplace_back("(unnamed)", "entry missing name");
      continue;
    }
    std::string name = trim(item["name"].get<std::string>());
    if (name.empty()) {
      out.rejected.emplace_back("(unnamed)", "entry missing name");
      continue;
    }
    std::string primitive;
    json params = json::object();
    const json& rule = item.contains("computation_rule") ? item["computation_rule"] : json();
    if (rule.is_string()) {
      primitive = rule.get<std::string>();
    } else if (rule.is_object() && rule.contains("primitive") &&
               rule["primitive"].is_string()) {
      primitive = rule["primitive"].get<std::string>();
      if (rule.contains("params") && rule["params"].is_object()) params = rule["params"];
    } else {
      out.rejected.emplace_back(name, "missing computation_rule");
      continue;
    }
    if (auto why = features::validate_primitive(primitive, params)) {
      out.rejected.emplace_back(name, *why);
      continue;
    }
    features::FeatureDescriptor d;
    d.feature_id = "generated." + slugify(name);
    d.pool = "generated";
    d.subcategory = name;
    d.origin = "llm_generated";
    d.renderer_id = primitive;
    d.params = params;
    if (registry.add(d))
      out.added.push_back(d.feature_id);
    else
      out.duplicates.push_back(d.feature_id);
  }
  return out;
}

// ---------------------------------------------------------------------------
// weight maintenance
// ---------------------------------------------------------------------------

/// Pure: returns the updated map, never touches the input. Unknown ids are
/// a registry-integrity error.
inline WeightMap apply_deltas(const WeightMap& weights,
                              const std::map<std::string, double>& contributions,
                              const WeightParams& params, const Registry& registry) {
  WeightMap next = weights;
  for (const auto& [id, dj] : contributions) {
    if (!registry.contains(id)) throw Error("weight update for unknown feature: " + id);
    if (!std::isfinite(dj)) throw Error("non-finite contribution for feature: " + id);
    auto it = next.find(id);
    double cur = it == next.end() ? kInitialWeight : it->second;
    double v = std::clamp(cur + params.eta * dj, 0.0, params.w_max);
    next[id] = v;
  }
  return next;
}

inline FeatureWeights update_weights(const FeatureWeights& weights,
                                     const std::map<std::string, double>& contributions,
                                     const Registry& registry) {
  FeatureWeights next = weights;
  next.global = apply_deltas(weights.global, contributions, weights.params, registry);
  return next;
}

// ---------------------------------------------------------------------------
// selection
// ---------------------------------------------------------------------------

namespace detail {

/// Weight-descending, id-ascending on ties: the one ordering used for
/// selection, truncation, and rendering.
inline void order_by_weight(std::vector<std::string>& ids, const WeightMap& weights) {
  auto weight_of = [&](const std::string& id) {
    auto it = weights.find(id);
    return it == weights.end() ? kInitialWeight : it->second;
  };
  std::sort(ids.begin(), ids.end(), [&](const std::string& a, const std::string& b) {
    double wa = weight_of(a), wb = weight_of(b);
    if (wa != wb) return wa > wb;
    return a < b;
  });
}

}  // namespace detail

inline llm::ChatRequest selection_request(const Registry& registry,
                                          const WeightMap& weights, int k_max,
                                          const std::string& model_id) {
  std::string listing = "available features (id, pool, weight):\n";
  for (const auto* d : registry.all()) {
    auto it = weights.find(d->feature_id);
    double w = it == weights.end() ? kInitialWeight : it->second;
    listing += "- " + d->feature_id + " (" + d->pool + ", w=" + format_fixed(w, 4) +
               "): " + d->subcategory + "\n";
  }
  llm::ChatRequest req;
  req.model_id = model_id;
  req.purpose = "select";
  req.messages.push_back(
      {"system",
       "TASK: select-features\n"
       "Pick the most predictive features for next-location prediction. Reply "
       "with JSON only: {\"selected\": [\"<feature_id>\", ...]} choosing at "
       "most " + std::to_string(k_max) + " ids from the list."});
  req.messages.push_back({"user", listing});
  return req;
}

inline FeatureSet select_features(const Registry& registry, const WeightMap& weights,
                                  llm::Backend& backend, int k_max,
                                  const WeightParams& params,
                                  const std::string& model_id,
                                  std::optional<std::string> group_label_feature =
                                      std::nullopt,
                                  llm::TranscriptLog* log = nullptr) {
  if (registry.size() == 0) throw Error("cannot select from an empty registry");
  if (k_max < 1) throw Error("k_max must be positive");

  FeatureSet set;
  for (const auto* d : registry.all()) {
    if (d->origin == "standard") set.standard.push_back(d->feature_id);
    if (d->origin == "llm_generated") set.generated.push_back(d->feature_id);
  }
  set.group_label_feature = group_label_feature;

  for (const auto* d : registry.all()) {
    auto it = weights.find(d->feature_id);
    double w = it == weights.end() ? kInitialWeight : it->second;
    if (w >= params.tau_high) set.high_weight.push_back(d->feature_id);
  }

  std::vector<std::string> agent_picks;
  bool agent_ok = false;
  llm::ChatRequest req = selection_request(registry, weights, k_max, model_id);
  try {
    llm::ChatResponse resp = backend.complete(req);
    if (log) log->append(req, resp);
    json payload = llm::extract_json_payload(resp.text);
    const json* arr = nullptr;
    if (payload.is_array())
      arr = &payload;
    else if (payload.is_object() && payload.contains("selected") &&
             payload["selected"].is_array())
      arr = &payload["selected"];
    if (arr) {
      for (const auto& item : *arr)
        if (item.is_string() && registry.contains(item.get<std::string>()))
          agent_picks.push_back(item.get<std::string>());
      agent_ok = true;
    }
  } catch (const std::exception&) {
    agent_ok = false;
  }

  std::set<std::string> chosen;
  if (agent_ok) {
    for (const auto& id : agent_picks) chosen.insert(id);
  } else {
    // Unusable agent output: top-k_max by weight stands in.
    std::vector<std::string> all_ids;
    for (const auto* d : registry.all()) all_ids.push_back(d->feature_id);
    detail::order_by_weight(all_ids, weights);
    for (const auto& id : all_ids) {
      chosen.insert(id);
      if (static_cast<int>(chosen.size()) >= k_max) break;
    }
  }
  for (const auto& id : set.high_weight) chosen.insert(id);

  // The core features and the group label survive truncation unconditionally.
  std::set<std::string> forced;
  for (const auto& id : features::mandatory_core())
    if (registry.contains(id)) forced.insert(id);
  if (group_label_feature && registry.contains(*group_label_feature))
    forced.insert(*group_label_feature);
  for (const auto& id : forced) chosen.insert(id);

  std::vector<std::string> ordered(chosen.begin(), chosen.end());
  detail::order_by_weight(ordered, weights);
  if (static_cast<int>(ordered.size()) > k_max) {
    std::vector<std::string> kept;
    int free_slots = k_max - static_cast<int>(forced.size());
    for (const auto& id : ordered) {
      if (forced.count(id))
        kept.push_back(id);
      else if (free_slots > 0) {
        kept.push_back(id);
        --free_slots;
      }
    }
    ordered = std::move(kept);
  }
  set.selected = std::move(ordered);
  return set;
}

// ---------------------------------------------------------------------------
// the optimization loop
// ---------------------------------------------------------------------------

struct OptimizeConfig {
  ObjectiveConfig objective;
  int iterations = 5;
  int k_max = 12;
  int probe_cap = 20;  // leave-one-out sample budget
  bool selection_enabled = true;
  bool generate_features = true;
  bool use_high_weight = true;
  bool maintain_weights = true;
  std::uint64_t seed = 1;
  std::string model_id = "gpt-4o-mini";
};

namespace detail {

inline std::vector<corpus::PredictionSample> seeded_subset(
    const std::vector<corpus::PredictionSample>& samples, int count, Rng rng) {
  if (count <= 0 || samples.size() <= static_cast<std::size_t>(count)) return samples;
  auto idx = rng.sample_indices(samples.size(), count);
  std::vector<corpus::PredictionSample> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(samples[i]);
  return out;
}

inline FeatureSet without_feature(const FeatureSet& set, const std::string& id) {
  FeatureSet probe = set;
  probe.selected.erase(std::remove(probe.selected.begin(), probe.selected.end(), id),
                       probe.selected.end());
  return probe;
}

}  // namespace detail

/// The iterative loop: propose, select, score, probe per-feature value,
/// nudge weights, keep the best round. Deterministic given the seed and a
/// deterministic backend.
inline OptimizationArtifact optimize(
    const std::string& scope_label,
    const std::vector<corpus::PredictionSample>& validation, Registry& registry,
    WeightMap& weights, const WeightParams& params, llm::Backend& backend,
    const OptimizeConfig& cfg, const PredictFn& predict,
    const std::string& corpus_stats,
    std::optional<std::string> group_label_feature = std::nullopt,
    llm::TranscriptLog* log = nullptr) {
  if (validation.empty())
    throw Error("optimization needs validation samples (scope: " + scope_label + ")");
  if (cfg.iterations < 1) throw Error("iterations must be >= 1");

  OptimizationArtifact artifact;
  artifact.scope = scope_label;
  artifact.best_j = -1;

  WeightMap initial = weights;
  Rng root(cfg.seed);

  for (int iter = 1; iter <= cfg.iterations; ++iter) {
    const std::string tag = "iter" + std::to_string(iter);

    if (cfg.selection_enabled && cfg.generate_features) {
      generate_new_features(describe_standard_pools(registry), corpus_stats, backend,
                            registry, cfg.model_id, log);
      for (const auto* d : registry.all()) weights.emplace(d->feature_id, kInitialWeight);
    }

    FeatureSet set;
    if (cfg.selection_enabled) {
      set = select_features(registry, weights, backend, cfg.k_max, params,
                            cfg.model_id, group_label_feature, log);
      if (!cfg.use_high_weight) {
        // Variant without the high-weight union: keep agent picks + forced only.
        std::set<std::string> high(set.high_weight.begin(), set.high_weight.end());
        std::set<std::string> keep;
        for (const auto& id : features::mandatory_core()) keep.insert(id);
        if (group_label_feature) keep.insert(*group_label_feature);
        std::vector<std::string> trimmed;
        for (const auto& id : set.selected)
          if (!high.count(id) || keep.count(id)) trimmed.push_back(id);
        if (!trimmed.empty()) set.selected = std::move(trimmed);
      }
    } else {
      // Selection off: the full standard pool is the feature set.
      for (const auto* d : registry.all()) {
        if (d->origin == "standard") set.standard.push_back(d->feature_id);
        if (d->origin == "llm_generated") set.generated.push_back(d->feature_id);
      }
      set.selected = set.standard;
      set.group_label_feature = group_label_feature;
      if (group_label_feature) set.selected.push_back(*group_label_feature);
    }

    auto subset = detail::seeded_subset(validation, cfg.objective.validation_sample_count,
                                        root.derive(tag + ".validation"));
    ObjectiveResult score = evaluate_objective(set, weights, subset, cfg.objective, predict);

    IterationRecord rec;
    rec.index = iter;
    rec.selected = set.selected;
    rec.j = score.j;
    rec.acc1 = score.acc1;
    rec.acc5 = score.acc5;
    artifact.records.push_back(rec);

    if (score.j > artifact.best_j) {
      artifact.best_j = score.j;
      artifact.best = set;
    }

    if (cfg.maintain_weights) {
      std::size_t probe_n = std::min<std::size_t>(subset.size(), cfg.probe_cap);
      std::vector<corpus::PredictionSample> probe(subset.begin(),
                                                  subset.begin() + probe_n);
      ObjectiveResult base = evaluate_objective(set, weights, probe, cfg.objective, predict);
      std::map<std::string, double> contributions;
      for (const auto& id : set.selected) {
        FeatureSet loo = detail::without_feature(set, id);
        if (loo.selected.empty()) continue;  // cannot probe the only feature
        ObjectiveResult without =
            evaluate_objective(loo, weights, probe, cfg.objective, predict);
        contributions[id] = base.j - without.j;
      }
      WeightMap next = apply_deltas(weights, contributions, params, registry);
      weights = std::move(next);
    }
  }

  artifact.iterations_run = cfg.iterations;
  artifact.final_weights = weights;
  for (const auto& [id, w] : weights) {
    auto it = initial.find(id);
    double before = it == initial.end() ? kInitialWeight : it->second;
    if (w != before) artifact.weight_deltas[id] = w - before;
  }

  json meta;
  meta["iterations"] = cfg.iterations;
  meta["k_max"] = cfg.k_max;
  meta["lambda"] = canonical::num(cfg.objective.lambda);
  meta["model"] = cfg.model_id;
  meta["probe_cap"] = cfg.probe_cap;
  meta["seed"] = cfg.seed;
  meta["validation_sample_count"] = cfg.objective.validation_sample_count;
  artifact.metadata = std::move(meta);
  return artifact;
}

}  // namespace armove::optimizer
