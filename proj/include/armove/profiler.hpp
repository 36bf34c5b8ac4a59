#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "armove/canonical.hpp"
#include "armove/common.hpp"
#include "armove/corpus.hpp"
#include "armove/llm.hpp"
#include "armove/optimizer.hpp"

namespace armove::profiler {

using canonical::json;
using optimizer::WeightMap;

inline const std::string kUnclassified = "unclassified";
inline const std::string kGroupLabelFeatureId = "group.label";

struct UserGroup {
  std::string group_id;
  std::string l1_label;
  std::vector<std::string> l2_tags;  // sorted, deduplicated
  std::set<std::string> members;
  std::vector<std::string> merged_from;

  json to_json() const {
    json j;
    j["group_id"] = group_id;
    j["l1_label"] = l1_label;
    j["l2_tags"] = l2_tags;
    j["members"] = std::vector<std::string>(members.begin(), members.end());
    j["merged_from"] = merged_from;
    return j;
  }

  static UserGroup from_json(const json& j) {
    UserGroup g;
    g.group_id = j.at("group_id").get<std::string>();
    g.l1_label = j.at("l1_label").get<std::string>();
    g.l2_tags = j.at("l2_tags").get<std::vector<std::string>>();
    for (const auto& m : j.at("members")) g.members.insert(m.get<std::string>());
    g.merged_from = j.at("merged_from").get<std::vector<std::string>>();
    return g;
  }
};

inline void save_groups(const std::filesystem::path& path,
                        const std::vector<UserGroup>& groups) {
  json arr = json::array();
  for (const auto& g : groups) arr.push_back(g.to_json());
  canonical::write_json(path, arr);
}

inline std::vector<UserGroup> load_groups(const std::filesystem::path& path) {
  std::vector<UserGroup> out;
  for (const auto& j : canonical::read_json(path)) out.push_back(UserGroup::from_json(j));
  return out;
}

struct GroupConfig {
  double alpha = 0.5;     // group-vs-global blend
  int min_group_size = 5;
  std::string stage = "l1l2m";  // off | ol1 | l1l2 | l1l2m
  std::string model_id = "gpt-4o-mini";
};

/// Disjointness + coverage over the given user set; throws on violation.
inline void check_partition(const std::vector<UserGroup>& groups,
                            const std::set<std::string>& users) {
  std::set<std::string> seen;
  for (const auto& g : groups) {
    if (g.members.empty()) throw Error("group " + g.group_id + " has no members");
    for (const auto& u : g.members) {
      if (!seen.insert(u).second)
        throw Error("user " + u + " appears in more than one group");
      if (!users.count(u))
        throw Error("group member " + u + " is not in the user set");
    }
  }
  if (seen.size() != users.size())
    throw Error("groups cover " + std::to_string(seen.size()) + " of " +
                std::to_string(users.size()) + " users");
}

// ---------------------------------------------------------------------------
// persona + interest mining
// ---------------------------------------------------------------------------

inline llm::ChatRequest persona_request(const std::string& user_feature_text,
                                        const std::string& model_id) {
  llm::ChatRequest req;
  req.model_id = model_id;
  req.purpose = "persona";
  req.messages.push_back(
      {"system",
       "TASK: assign-persona\n"
       "Assign one short persona label (for example: office worker, student, "
       "night owl) to the user described below. Reply with JSON only: "
       "{\"label\": \"<persona>\"}."});
  req.messages.push_back({"user", user_feature_text});
  return req;
}

inline std::string assign_l1(const std::string& user_feature_text,
                             llm::Backend& backend, const std::string& model_id,
                             llm::TranscriptLog* log = nullptr) {
  llm::ChatRequest req = persona_request(user_feature_text, model_id);
  try {
    llm::ChatResponse resp = backend.complete(req);
    if (log) log->append(req, resp);
    json payload = llm::extract_json_payload(resp.text);
    std::string label;
    if (payload.is_string())
      label = payload.get<std::string>();
    else if (payload.is_object() && payload.contains("label") &&
             payload["label"].is_string())
      label = payload["label"].get<std::string>();
    label = to_lower(trim(label));
    return label.empty() ? kUnclassified : label;
  } catch (const std::exception&) {
    return kUnclassified;
  }
}

inline llm::ChatRequest interests_request(const std::string& user_feature_text,
                                          const std::string& l1_label,
                                          const std::string& model_id) {
  llm::ChatRequest req;
  req.model_id = model_id;
  req.purpose = "interests";
  req.messages.push_back(
      {"system",
       "TASK: mine-interests\n"
       "List up to 3 secondary interest tags (for example: fitness, nightlife) "
       "for the user described below. Reply with JSON only: {\"tags\": "
       "[\"<tag>\", ...]}."});
  req.messages.push_back({"user", "persona: " + l1_label + "\n" + user_feature_text});
  return req;
}

inline std::vector<std::string> mine_l2(const std::string& user_feature_text,
                                        const std::string& l1_label,
                                        llm::Backend& backend,
                                        const std::string& model_id,
                                        llm::TranscriptLog* log = nullptr) {
  llm::ChatRequest req = interests_request(user_feature_text, l1_label, model_id);
  std::vector<std::string> tags;
  try {
    llm::ChatResponse resp = backend.complete(req);
    if (log) log->append(req, resp);
    json payload = llm::extract_json_payload(resp.text);
    const json* arr = nullptr;
    if (payload.is_array())
      arr = &payload;
    else if (payload.is_object() && payload.contains("tags") &&
             payload["tags"].is_array())
      arr = &payload["tags"];
    if (!arr) return tags;
    std::set<std::string> seen;
    for (const auto& t : *arr) {
      if (!t.is_string()) continue;
      std::string tag = to_lower(trim(t.get<std::string>()));
      if (tag.empty() || !seen.insert(tag).second) continue;
      tags.push_back(std::move(tag));
      if (tags.size() == 3) break;
    }
  } catch (const std::exception&) {
    tags.clear();
  }
  return tags;
}

struct UserProfile {
  std::string user_id;
  std::string l1;
  std::vector<std::string> l2;
};

/// Profiles every user (id order). `feature_text` renders the four pools
/// for one user; stage ol1 skips interest mining.
inline std::vector<UserProfile> profile_users(
    const std::vector<std::string>& user_ids,
    const std::function<std::string(const std::string&)>& feature_text,
    llm::Backend& backend, const GroupConfig& cfg, llm::TranscriptLog* log = nullptr) {
  std::vector<UserProfile> out;
  out.reserve(user_ids.size());
  for (const auto& uid : user_ids) {
    UserProfile p;
    p.user_id = uid;
    std::string text = feature_text(uid);
    p.l1 = assign_l1(text, backend, cfg.model_id, log);
    if (cfg.stage != "ol1")
      p.l2 = mine_l2(text, p.l1, backend, cfg.model_id, log);
    std::sort(p.l2.begin(), p.l2.end());
    out.push_back(std::move(p));
  }
  return out;
}

/// Key = persona alone (ol1) or persona plus sorted interest tags.
inline std::vector<UserGroup> build_groups(const std::vector<UserProfile>& profiles,
                                           const std::string& stage) {
  std::map<std::string, UserGroup> by_key;
  for (const auto& p : profiles) {
    std::string key = slugify(p.l1);
    std::vector<std::string> tags;
    if (stage != "ol1") tags = p.l2;
    for (const auto& t : tags) key += "+" + slugify(t);
    auto& g = by_key["g-" + key];
    if (g.group_id.empty()) {
      g.group_id = "g-" + key;
      g.l1_label = p.l1;
      g.l2_tags = tags;
    }
    g.members.insert(p.user_id);
  }
  std::vector<UserGroup> out;
  for (auto& [_, g] : by_key) out.push_back(std::move(g));
  return out;
}

// ---------------------------------------------------------------------------
// merging
// ---------------------------------------------------------------------------

inline std::set<std::string> label_set(const UserGroup& g) {
  std::set<std::string> s(g.l2_tags.begin(), g.l2_tags.end());
  if (!g.l1_label.empty()) s.insert(g.l1_label);
  return s;
}

inline double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t inter = 0;
  for (const auto& x : a) inter += b.count(x);
  std::size_t uni = a.size() + b.size() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

inline llm::ChatRequest merge_request(const UserGroup& small, const UserGroup& target,
                                      const std::string& model_id) {
  llm::ChatRequest req;
  req.model_id = model_id;
  req.purpose = "merge";
  req.messages.push_back(
      {"system",
       "TASK: confirm-merge\n"
       "Decide whether two user groups are similar enough to merge. Reply with "
       "JSON only: {\"merge\": true} or {\"merge\": false}."});
  req.messages.push_back(
      {"user", "group a: " + small.l1_label + " [" + join(small.l2_tags, ", ") +
                   "]\ngroup b: " + target.l1_label + " [" +
                   join(target.l2_tags, ", ") + "]"});
  return req;
}

/// Folds undersized groups into their most similar peers. Similarity is
/// label/tag Jaccard; the backend (when given) may veto a candidate pair,
/// but an unusable reply falls back to the Jaccard choice.
inline std::vector<UserGroup> merge_groups(std::vector<UserGroup> groups,
                                           int min_group_size,
                                           llm::Backend* backend = nullptr,
                                           const std::string& model_id = "",
                                           llm::TranscriptLog* log = nullptr) {
  if (min_group_size < 1) throw Error("min_group_size must be >= 1");
  if (groups.size() <= 1) return groups;

  std::set<std::pair<std::string, std::string>> vetoed;

  auto consult = [&](const UserGroup& small, const UserGroup& target) -> bool {
    if (!backend) return true;
    llm::ChatRequest req = merge_request(small, target, model_id);
    try {
      llm::ChatResponse resp = backend->complete(req);
      if (log) log->append(req, resp);
      json payload = llm::extract_json_payload(resp.text);
      if (payload.is_object() && payload.contains("merge") &&
          payload["merge"].is_boolean())
        return payload["merge"].get<bool>();
      return true;  // unusable shape: similarity rule is authoritative
    } catch (const std::exception&) {
      return true;  // unusable reply: similarity rule is authoritative
    }
  };

  while (groups.size() > 1) {
    // Smallest undersized group first; id breaks size ties.
    int small_idx = -1;
    for (std::size_t i = 0; i < groups.size(); ++i) {
      if (static_cast<int>(groups[i].members.size()) >= min_group_size) continue;
      bool all_vetoed = true;
      for (std::size_t t = 0; t < groups.size(); ++t) {
        if (t == i) continue;
        if (!vetoed.count({groups[i].group_id, groups[t].group_id})) {
          all_vetoed = false;
          break;
        }
      }
      if (all_vetoed) continue;  // nothing left to try for this group
      if (small_idx < 0 ||
          groups[i].members.size() < groups[small_idx].members.size() ||
          (groups[i].members.size() == groups[small_idx].members.size() &&
           groups[i].group_id < groups[small_idx].group_id))
        small_idx = static_cast<int>(i);
    }
    if (small_idx < 0) break;

    const UserGroup& small = groups[small_idx];
    auto small_labels = label_set(small);
    int target_idx = -1;
    double best_sim = -1;
    for (std::size_t t = 0; t < groups.size(); ++t) {
      if (static_cast<int>(t) == small_idx) continue;
      if (vetoed.count({small.group_id, groups[t].group_id})) continue;
      double sim = jaccard(small_labels, label_set(groups[t]));
      bool better = sim > best_sim;
      if (sim == best_sim && target_idx >= 0) {
        const UserGroup& cur = groups[target_idx];
        if (groups[t].members.size() != cur.members.size())
          better = groups[t].members.size() > cur.members.size();
        else
          better = groups[t].group_id < cur.group_id;
      }
      if (better) {
        best_sim = sim;
        target_idx = static_cast<int>(t);
      }
    }
    if (target_idx < 0) break;

    if (!consult(small, groups[target_idx])) {
      vetoed.insert({small.group_id, groups[target_idx].group_id});
      continue;
    }

    UserGroup& target = groups[target_idx];
    target.members.insert(small.members.begin(), small.members.end());
    target.merged_from.push_back(small.group_id);
    for (const auto& m : small.merged_from) target.merged_from.push_back(m);
    std::set<std::string> tags(target.l2_tags.begin(), target.l2_tags.end());
    tags.insert(small.l2_tags.begin(), small.l2_tags.end());
    target.l2_tags.assign(tags.begin(), tags.end());
    groups.erase(groups.begin() + small_idx);
  }

  std::sort(groups.begin(), groups.end(),
            [](const UserGroup& a, const UserGroup& b) { return a.group_id < b.group_id; });
  return groups;
}

// ---------------------------------------------------------------------------
// weight blending + group optimization
// ---------------------------------------------------------------------------

/// w_eff = alpha * group + (1 - alpha) * global; features the group never
/// touched stay at their global value.
inline WeightMap blend_weights(const WeightMap& global, const WeightMap& group,
                               double alpha) {
  if (alpha < 0 || alpha > 1) throw Error("alpha must be in [0,1]");
  WeightMap out;
  for (const auto& [id, gw] : global) {
    auto it = group.find(id);
    double grp = it == group.end() ? gw : it->second;
    out[id] = alpha * grp + (1 - alpha) * gw;
  }
  for (const auto& [id, grp] : group)
    if (!out.count(id)) out[id] = alpha * grp + (1 - alpha) * grp;
  return out;
}

/// Registers the shared group-label descriptor (rendered per group at
/// prediction time). No-op when already present.
inline void ensure_group_label_feature(features::Registry& registry) {
  if (registry.contains(kGroupLabelFeatureId)) return;
  features::FeatureDescriptor d;
  d.feature_id = kGroupLabelFeatureId;
  d.pool = "generated";
  d.subcategory = "user group label";
  d.origin = "group_label";
  d.renderer_id = "group";
  registry.add(d);
}

inline features::FeatureValue group_label_value(const std::string& label) {
  features::FeatureValue v;
  v.feature_id = kGroupLabelFeatureId;
  v.payload = label;
  if (!label.empty()) v.rendered = "group: " + label;
  return v;
}

struct GroupOptimizeOutcome {
  optimizer::OptimizationArtifact artifact;
  std::vector<std::string> warnings;
};

/// Group-scoped optimization with blended weights; the net weight movement
/// feeds back into the global map scaled by the group's share of users.
/// Falls back to the city-level feature set when the group has no
/// validation samples.
inline GroupOptimizeOutcome optimize_group(
    const UserGroup& group, const std::vector<corpus::PredictionSample>& group_validation,
    features::Registry& registry, optimizer::FeatureWeights& weights,
    llm::Backend& backend, const optimizer::OptimizeConfig& opt_cfg,
    const GroupConfig& grp_cfg, const optimizer::PredictFn& predict,
    const std::string& corpus_stats, std::size_t total_users,
    const optimizer::FeatureSet* city_fallback = nullptr,
    llm::TranscriptLog* log = nullptr) {
  if (group.members.empty()) throw Error("cannot optimize an empty group");
  if (total_users == 0) throw Error("total user count must be positive");

  GroupOptimizeOutcome out;

  std::optional<std::string> label_feature;
  if (!group.l1_label.empty()) {
    ensure_group_label_feature(registry);
    label_feature = kGroupLabelFeatureId;
  }

  if (group_validation.empty()) {
    if (!city_fallback)
      throw Error("group " + group.group_id +
                  " has no validation samples and no city fallback");
    out.warnings.push_back("group " + group.group_id +
                           " has no validation samples; inheriting the city feature set");
    out.artifact.scope = group.group_id;
    out.artifact.best = *city_fallback;
    if (label_feature) {
      out.artifact.best.group_label_feature = label_feature;
      if (std::find(out.artifact.best.selected.begin(), out.artifact.best.selected.end(),
                    *label_feature) == out.artifact.best.selected.end())
        out.artifact.best.selected.push_back(*label_feature);
    }
    out.artifact.final_weights = blend_weights(
        weights.global, weights.per_group[group.group_id], grp_cfg.alpha);
    out.artifact.metadata = json{{"inherited", true}};
    return out;
  }

  WeightMap effective =
      blend_weights(weights.global, weights.per_group[group.group_id], grp_cfg.alpha);

  out.artifact = optimizer::optimize(group.group_id, group_validation, registry,
                                     effective, weights.params, backend, opt_cfg,
                                     predict, corpus_stats, label_feature, log);

  weights.per_group[group.group_id] = effective;

  // Size-proportional propagation into the global weights.
  double share = static_cast<double>(group.members.size()) /
                 static_cast<double>(total_users);
  std::map<std::string, double> scaled;
  for (const auto& [id, delta] : out.artifact.weight_deltas)
    scaled[id] = share * delta;
  if (!scaled.empty()) {
    optimizer::WeightParams unit = weights.params;
    unit.eta = 1.0;  // deltas are absolute movements, not gradients
    weights.global = optimizer::apply_deltas(weights.global, scaled, unit, registry);
  }
  return out;
}

}  // namespace armove::profiler
