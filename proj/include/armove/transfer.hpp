#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "armove/canonical.hpp"
#include "armove/common.hpp"
#include "armove/corpus.hpp"
#include "armove/features.hpp"
#include "armove/layout.hpp"
#include "armove/optimizer.hpp"
#include "armove/profiler.hpp"

namespace armove::transfer {

using canonical::json;

struct TransferArtifact {
  std::vector<std::string> source_cities;
  std::string model_id;
  optimizer::FeatureWeights weights;
  optimizer::FeatureSet feature_set;
  std::vector<profiler::UserGroup> groups;
  json descriptors;  // registry snapshot so generated features travel
  json metadata;     // seed, lambda, iterations

  json to_json() const {
    json j;
    j["descriptors"] = descriptors;
    j["feature_set"] = feature_set.to_json();
    json garr = json::array();
    for (const auto& g : groups) garr.push_back(g.to_json());
    j["groups"] = std::move(garr);
    j["metadata"] = metadata;
    j["model"] = model_id;
    j["source_cities"] = source_cities;
    j["weights"] = weights.to_json();
    return j;
  }

  static TransferArtifact from_json(const json& j) {
    TransferArtifact a;
    a.descriptors = j.at("descriptors");
    a.feature_set = optimizer::FeatureSet::from_json(j.at("feature_set"));
    for (const auto& g : j.at("groups")) a.groups.push_back(profiler::UserGroup::from_json(g));
    a.metadata = j.at("metadata");
    a.model_id = j.at("model").get<std::string>();
    a.source_cities = j.at("source_cities").get<std::vector<std::string>>();
    a.weights = optimizer::FeatureWeights::from_json(j.at("weights"));
    return a;
  }

  void save(const std::filesystem::path& path) const {
    canonical::write_json(path, to_json());
  }

  static TransferArtifact load(const std::filesystem::path& path) {
    return from_json(canonical::read_json(path));
  }

  features::Registry registry() const { return features::Registry::from_json(descriptors); }

  /// Group label a user carried in the source run; empty when ungrouped.
  std::string group_label_for(const std::string& user_id) const {
    for (const auto& g : groups)
      if (g.members.count(user_id)) return g.l1_label;
    return "";
  }

  std::string group_id_for(const std::string& user_id) const {
    for (const auto& g : groups)
      if (g.members.count(user_id)) return g.group_id;
    return "";
  }
};

// ---------------------------------------------------------------------------
// export
// ---------------------------------------------------------------------------

/// Packs a completed optimization run into a transferable artifact. A run
/// missing pieces is rejected with every gap named.
inline TransferArtifact export_artifact(const std::filesystem::path& run_dir) {
  namespace fs = std::filesystem;
  std::vector<std::string> missing;
  auto need = [&](const char* name) {
    fs::path p = run_dir / name;
    if (!fs::exists(p)) missing.push_back(name);
    return p;
  };
  fs::path opt_path = need(layout::kOptimization);
  fs::path reg_path = need(layout::kRegistry);
  fs::path weights_path = need(layout::kWeights);
  fs::path cfg_path = need(layout::kConfig);
  if (!missing.empty())
    throw Error("run is incomplete; missing: " + join(missing, ", "));

  auto opt = optimizer::OptimizationArtifact::load(opt_path);

  TransferArtifact a;
  a.source_cities = {opt.scope};
  a.descriptors = canonical::read_json(reg_path);
  a.feature_set = opt.best;
  a.weights = optimizer::FeatureWeights::from_json(canonical::read_json(weights_path));

  fs::path groups_path = run_dir / layout::kGroups;
  if (fs::exists(groups_path)) a.groups = profiler::load_groups(groups_path);

  // Metadata comes from the optimization record; the config snapshot rides
  // along for provenance.
  a.metadata = opt.metadata;
  a.metadata["config"] = read_file(cfg_path);
  a.model_id = opt.metadata.value("model", "");
  return a;
}

// ---------------------------------------------------------------------------
// same-city user replacement
// ---------------------------------------------------------------------------

struct ReplacementPlan {
  std::vector<std::string> kept;      // artifact users staying in place
  std::vector<std::string> removed;   // artifact users swapped out
  std::vector<std::string> added;     // held-out users swapped in
};

/// Seeded uniform swap of replace_n artifact users for held-out ones.
inline ReplacementPlan plan_user_replacement(const corpus::Corpus& corpus,
                                             const std::set<std::string>& artifact_users,
                                             int replace_n, std::uint64_t seed) {
  if (replace_n < 0) throw Error("replace_n must be >= 0");

  std::vector<std::string> in_artifact;
  std::vector<std::string> held_out;
  for (const auto& [uid, _] : corpus.users) {
    if (artifact_users.count(uid))
      in_artifact.push_back(uid);
    else
      held_out.push_back(uid);
  }
  if (static_cast<std::size_t>(replace_n) > held_out.size())
    throw Error("need " + std::to_string(replace_n) + " held-out users but only " +
                std::to_string(held_out.size()) + " are available");
  if (static_cast<std::size_t>(replace_n) > in_artifact.size())
    throw Error("cannot replace " + std::to_string(replace_n) + " of " +
                std::to_string(in_artifact.size()) + " artifact users");

  ReplacementPlan plan;
  if (replace_n == 0) {
    plan.kept = in_artifact;
    return plan;
  }

  Rng rng(seed);
  auto out_idx = rng.derive("remove").sample_indices(in_artifact.size(), replace_n);
  std::set<std::size_t> removed_set(out_idx.begin(), out_idx.end());
  for (std::size_t i = 0; i < in_artifact.size(); ++i) {
    if (removed_set.count(i))
      plan.removed.push_back(in_artifact[i]);
    else
      plan.kept.push_back(in_artifact[i]);
  }
  auto in_idx = rng.derive("add").sample_indices(held_out.size(), replace_n);
  for (auto i : in_idx) plan.added.push_back(held_out[i]);
  std::sort(plan.added.begin(), plan.added.end());
  std::sort(plan.removed.begin(), plan.removed.end());
  return plan;
}

// ---------------------------------------------------------------------------
// multi-city fusion
// ---------------------------------------------------------------------------

struct FusionResult {
  corpus::Corpus fused;
  std::map<std::string, std::size_t> drawn_per_city;
  std::vector<std::string> warnings;
};

/// Samples an even share of users from each corpus (remainder round-robin
/// in list order), namespacing ids as "city:user".
inline FusionResult fuse_cities(const std::vector<const corpus::Corpus*>& corpora,
                                int total_users, std::uint64_t seed) {
  if (corpora.size() < 2) throw Error("fusion needs at least two corpora");
  if (total_users < static_cast<int>(corpora.size()))
    throw Error("total_users must cover at least one user per city");

  std::size_t n_cities = corpora.size();
  std::vector<int> quota(n_cities, total_users / static_cast<int>(n_cities));
  for (int r = 0; r < total_users % static_cast<int>(n_cities); ++r) ++quota[r];

  // Cities that cannot fill their quota hand the deficit to later cities.
  std::vector<std::size_t> have(n_cities);
  for (std::size_t i = 0; i < n_cities; ++i) have[i] = corpora[i]->users.size();

  FusionResult out;
  for (int pass = 0; pass < static_cast<int>(n_cities); ++pass) {
    int deficit = 0;
    for (std::size_t i = 0; i < n_cities; ++i) {
      if (static_cast<std::size_t>(quota[i]) > have[i]) {
        deficit += quota[i] - static_cast<int>(have[i]);
        if (pass == 0)
          out.warnings.push_back("city " + corpora[i]->city + " has only " +
                                 std::to_string(have[i]) + " users; taking all");
        quota[i] = static_cast<int>(have[i]);
      }
    }
    if (deficit == 0) break;
    // Rebalance round-robin onto cities with spare users.
    bool placed = true;
    while (deficit > 0 && placed) {
      placed = false;
      for (std::size_t i = 0; i < n_cities && deficit > 0; ++i) {
        if (static_cast<std::size_t>(quota[i]) < have[i]) {
          ++quota[i];
          --deficit;
          placed = true;
        }
      }
    }
    if (deficit > 0) {
      out.warnings.push_back("not enough users across cities; fused " +
                             std::to_string(total_users - deficit) + " of " +
                             std::to_string(total_users));
      break;
    }
  }

  Rng rng(seed);
  std::vector<std::string> names;
  for (const auto* c : corpora) names.push_back(c->city);
  out.fused.city = join(names, "+");
  out.fused.tz_offset_hours = corpora.front()->tz_offset_hours;

  for (std::size_t i = 0; i < n_cities; ++i) {
    const auto& c = *corpora[i];
    std::vector<std::string> ids;
    for (const auto& [uid, _] : c.users) ids.push_back(uid);
    auto drawn = rng.derive("fuse." + c.city).sample_indices(ids.size(), quota[i]);
    std::sort(drawn.begin(), drawn.end());
    for (auto di : drawn) {
      const std::string& uid = ids[di];
      std::string fused_id = c.city + ":" + uid;
      auto sessions = c.users.at(uid);
      for (auto& s : sessions) {
        s.user_id = fused_id;
        for (auto& st : s.stays) st.user_id = fused_id;
      }
      out.fused.users[fused_id] = std::move(sessions);
    }
    out.drawn_per_city[c.city] = static_cast<std::size_t>(quota[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// cross-city feature availability
// ---------------------------------------------------------------------------

/// Feature ids selected by the artifact but undefined in the registry at
/// hand; these render as "unavailable" blocks instead of aborting.
inline std::vector<std::string> unavailable_features(
    const optimizer::FeatureSet& set, const features::Registry& registry) {
  std::vector<std::string> out;
  for (const auto& id : set.selected)
    if (!registry.contains(id)) out.push_back(id);
  return out;
}

inline features::FeatureValue unavailable_value(const std::string& feature_id) {
  features::FeatureValue v;
  v.feature_id = feature_id;
  v.payload = "unavailable";
  v.rendered = feature_id + ": unavailable";
  return v;
}

}  // namespace armove::transfer
