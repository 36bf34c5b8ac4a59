#include <algorithm>
#include <cmath>
#include <set>

#include <catch2/catch_amalgamated.hpp>

#include "armove/profiler.hpp"
#include "support/test_support.hpp"

using namespace armove;

namespace {

corpus::PredictionSample ranked_sample(const std::string& user,
                                       std::vector<std::string> past,
                                       std::vector<std::string> ctx,
                                       const std::string& target) {
  corpus::PredictionSample s;
  s.user_id = user;
  s.session_id = 7;
  std::int64_t ts = 1000;
  std::vector<corpus::Stay> stays;
  for (auto& loc : past) stays.push_back(testutil::make_stay(loc, ts += 3600));
  s.history.push_back(testutil::make_session(0, "train", std::move(stays)));
  for (auto& loc : ctx) s.context.push_back(testutil::make_stay(loc, ts += 3600));
  s.target = testutil::make_stay(target, ts + 3600);
  return s;
}

optimizer::PredictFn boosting_predictor() {
  return [](const corpus::PredictionSample& s, const optimizer::FeatureSet& fs,
            const optimizer::WeightMap&) {
    auto ranked = predictor::history_candidates(s, 10);
    ranked.pop_back();
    std::set<std::string> sel(fs.selected.begin(), fs.selected.end());
    int boost = static_cast<int>(sel.count("memory.long_term") +
                                 sel.count("trajectory.visit_frequency"));
    auto it = std::find(ranked.begin(), ranked.end(), s.target.location_id);
    if (it != ranked.end()) {
      int idx = static_cast<int>(it - ranked.begin());
      int to = std::max(0, idx - boost);
      ranked.erase(it);
      ranked.insert(ranked.begin() + to, s.target.location_id);
    }
    predictor::RankedPrediction p;
    p.sample_id = s.sample_id();
    p.truth = s.target.location_id;
    p.ranked = std::move(ranked);
    p.parse_status = "ok";
    return p;
  };
}

std::vector<corpus::PredictionSample> group_validation() {
  std::vector<corpus::PredictionSample> v;
  v.push_back(ranked_sample("a", {"h", "h", "h", "w", "w", "c"}, {"h"}, "w"));
  v.push_back(ranked_sample("b", {"h", "h", "w", "w", "g", "c", "c", "c"}, {"w"}, "h"));
  v.push_back(ranked_sample("c", {"h", "h", "h", "w", "c", "c"}, {"g"}, "c"));
  v.push_back(ranked_sample("d", {"h", "w", "w", "c", "g", "g", "g"}, {"w"}, "c"));
  return v;
}

profiler::UserGroup make_group(std::string id, std::string l1,
                               std::vector<std::string> tags,
                               std::vector<std::string> members) {
  profiler::UserGroup g;
  g.group_id = std::move(id);
  g.l1_label = std::move(l1);
  g.l2_tags = std::move(tags);
  g.members.insert(members.begin(), members.end());
  return g;
}

std::set<std::string> all_members(const std::vector<profiler::UserGroup>& groups) {
  std::set<std::string> out;
  for (const auto& g : groups)
    for (const auto& m : g.members) out.insert(m);
  return out;
}

std::string dump_groups(const std::vector<profiler::UserGroup>& groups) {
  canonical::json arr = canonical::json::array();
  for (const auto& g : groups) arr.push_back(g.to_json());
  return arr.dump();
}

}  // namespace

TEST_CASE("persona replies are normalised or degrade to unclassified", "[profiler]") {
  auto ask = [](const std::string& reply) {
    testutil::ScriptedBackend backend(testutil::ScriptedBackend::fixed(reply));
    return profiler::assign_l1("user: u1", backend, "m");
  };
  CHECK(ask(R"({"label": " Night Owl "})") == "night owl");
  CHECK(ask(R"("Commuter")") == "commuter");
  CHECK(ask(R"({"label": ""})") == "unclassified");
  CHECK(ask(R"({"persona": "clerk"})") == "unclassified");
  CHECK(ask("no structured answer here") == "unclassified");

  testutil::ThrowingBackend broken;
  CHECK(profiler::assign_l1("user: u1", broken, "m") == "unclassified");
}

TEST_CASE("interest mining dedupes, lowercases, and caps at three", "[profiler]") {
  auto ask = [](const std::string& reply) {
    testutil::ScriptedBackend backend(testutil::ScriptedBackend::fixed(reply));
    return profiler::mine_l2("user: u1", "commuter", backend, "m");
  };
  CHECK(ask(R"({"tags": ["Bars", "bars", " Live Music ", "food", "extra"]})") ==
        std::vector<std::string>{"bars", "live music", "food"});
  CHECK(ask(R"(["parks", 7, "", "Parks", "gyms"])") ==
        std::vector<std::string>{"parks", "gyms"});
  CHECK(ask(R"({"tags": []})").empty());
  CHECK(ask(R"({"interests": ["food"]})").empty());
  CHECK(ask("nothing usable").empty());

  testutil::ThrowingBackend broken;
  CHECK(profiler::mine_l2("user: u1", "commuter", broken, "m").empty());
}

TEST_CASE("profiling walks users in order and honours the stage", "[profiler]") {
  int interest_calls = 0;
  testutil::ScriptedBackend backend([&](const llm::ChatRequest& req, int) -> std::string {
    const std::string& user = req.messages.back().content;
    if (req.purpose == "persona") {
      if (user.find("u1") != std::string::npos) return R"({"label": "Night Owl"})";
      return "no idea";
    }
    REQUIRE(req.purpose == "interests");
    ++interest_calls;
    CHECK(user.rfind("persona: ", 0) == 0);
    if (user.find("u1") != std::string::npos)
      return R"({"tags": ["clubs", "bars"]})";
    return "[]";
  });

  auto feature_text = [](const std::string& uid) { return "user: " + uid; };
  profiler::GroupConfig cfg;

  SECTION("full two-level profiling") {
    auto profiles = profiler::profile_users({"u1", "u2"}, feature_text, backend, cfg);
    REQUIRE(profiles.size() == 2);
    CHECK(profiles[0].user_id == "u1");
    CHECK(profiles[0].l1 == "night owl");
    CHECK(profiles[0].l2 == std::vector<std::string>{"bars", "clubs"});  // sorted
    CHECK(profiles[1].l1 == "unclassified");
    CHECK(profiles[1].l2.empty());
    CHECK(interest_calls == 2);
  }

  SECTION("persona-only stage skips interest mining") {
    cfg.stage = "ol1";
    auto profiles = profiler::profile_users({"u1", "u2"}, feature_text, backend, cfg);
    REQUIRE(profiles.size() == 2);
    CHECK(profiles[0].l2.empty());
    CHECK(interest_calls == 0);
  }
}

TEST_CASE("groups are keyed by persona and tags", "[profiler]") {
  std::vector<profiler::UserProfile> profiles = {
      {"u1", "Commuter", {"food", "parks"}},
      {"u2", "commuter", {"food", "parks"}},
      {"u3", "night owl", {"bars"}},
      {"u4", "commuter", {}},
  };

  auto groups = profiler::build_groups(profiles, "l1l2m");
  REQUIRE(groups.size() == 3);
  CHECK(groups[0].group_id == "g-commuter");
  CHECK(groups[0].members == std::set<std::string>{"u4"});
  CHECK(groups[1].group_id == "g-commuter+food+parks");
  CHECK(groups[1].members == std::set<std::string>{"u1", "u2"});
  CHECK(groups[1].l1_label == "Commuter");  // first profile seeds the labels
  CHECK(groups[1].l2_tags == std::vector<std::string>{"food", "parks"});
  CHECK(groups[2].group_id == "g-night-owl+bars");

  SECTION("persona-only stage ignores tags") {
    auto coarse = profiler::build_groups(profiles, "ol1");
    REQUIRE(coarse.size() == 2);
    CHECK(coarse[0].group_id == "g-commuter");
    CHECK(coarse[0].members == std::set<std::string>{"u1", "u2", "u4"});
    CHECK(coarse[0].l2_tags.empty());
    CHECK(coarse[1].group_id == "g-night-owl");
  }
}

TEST_CASE("partition checks catch each violation", "[profiler]") {
  std::set<std::string> users = {"u1", "u2"};
  auto ok = std::vector<profiler::UserGroup>{make_group("g-a", "x", {}, {"u1"}),
                                             make_group("g-b", "y", {}, {"u2"})};
  CHECK_NOTHROW(profiler::check_partition(ok, users));

  CHECK_THROWS_WITH(
      profiler::check_partition({make_group("g-a", "x", {}, {})}, users),
      "group g-a has no members");
  CHECK_THROWS_WITH(
      profiler::check_partition({make_group("g-a", "x", {}, {"u1"}),
                                 make_group("g-b", "y", {}, {"u1", "u2"})},
                                users),
      "user u1 appears in more than one group");
  CHECK_THROWS_WITH(
      profiler::check_partition({make_group("g-a", "x", {}, {"u9"})}, users),
      "group member u9 is not in the user set");
  CHECK_THROWS_WITH(
      profiler::check_partition({make_group("g-a", "x", {}, {"u1"})}, users),
      "groups cover 1 of 2 users");
}

TEST_CASE("jaccard similarity over label sets", "[profiler]") {
  using Set = std::set<std::string>;
  CHECK(profiler::jaccard(Set{}, Set{}) == 0.0);
  CHECK(profiler::jaccard(Set{"a"}, Set{"a"}) == 1.0);
  CHECK(profiler::jaccard(Set{"a", "b"}, Set{"b", "c"}) == 1.0 / 3.0);
  CHECK(profiler::jaccard(Set{"a"}, Set{}) == 0.0);

  auto g = make_group("g-x", "commuter", {"food", "parks"}, {"u1"});
  CHECK(profiler::label_set(g) == Set{"commuter", "food", "parks"});
  g.l1_label.clear();
  CHECK(profiler::label_set(g) == Set{"food", "parks"});
}

TEST_CASE("merging folds undersized groups into their closest peers", "[profiler]") {
  std::vector<profiler::UserGroup> groups = {
      make_group("g-x", "", {"alpha"}, {"u1"}),
      make_group("g-y", "", {"alpha", "beta"}, {"u2"}),
      make_group("g-z", "", {"gamma"}, {"u3", "u4", "u5", "u6", "u7"}),
  };
  auto merged = profiler::merge_groups(groups, 5);
  REQUIRE(merged.size() == 1);
  CHECK(merged[0].group_id == "g-z");
  CHECK(merged[0].members ==
        std::set<std::string>{"u1", "u2", "u3", "u4", "u5", "u6", "u7"});
  // g-x fell into g-y first (closest tags), then the combined group into g-z.
  CHECK(merged[0].merged_from == std::vector<std::string>{"g-y", "g-x"});
  CHECK(merged[0].l2_tags == std::vector<std::string>{"alpha", "beta", "gamma"});
}

TEST_CASE("merge ties prefer the larger then lexicographically smaller peer",
          "[profiler]") {
  auto small = make_group("g-s", "", {"t"}, {"u1"});
  SECTION("size breaks the similarity tie") {
    std::vector<profiler::UserGroup> groups = {
        small,
        make_group("g-p", "", {"t", "p"}, {"u2", "u3", "u4", "u5", "u6"}),
        make_group("g-q", "", {"t", "q"}, {"u7", "u8", "u9", "u10", "u11", "u12"}),
    };
    auto merged = profiler::merge_groups(groups, 5);
    REQUIRE(merged.size() == 2);
    CHECK(merged[1].group_id == "g-q");
    CHECK(merged[1].members.count("u1") == 1);
    CHECK(merged[0].members.count("u1") == 0);
  }
  SECTION("group id breaks the size tie") {
    std::vector<profiler::UserGroup> groups = {
        small,
        make_group("g-q", "", {"t", "q"}, {"u7", "u8", "u9", "u10", "u11"}),
        make_group("g-p", "", {"t", "p"}, {"u2", "u3", "u4", "u5", "u6"}),
    };
    auto merged = profiler::merge_groups(groups, 5);
    REQUIRE(merged.size() == 2);
    CHECK(merged[0].group_id == "g-p");
    CHECK(merged[0].members.count("u1") == 1);
  }
}

TEST_CASE("merge consults the model and respects vetoes", "[profiler]") {
  std::vector<profiler::UserGroup> groups = {
      make_group("g-s", "", {"t"}, {"u1"}),
      make_group("g-t1", "", {"t", "p"}, {"u2", "u3", "u4", "u5", "u6"}),
      make_group("g-t2", "", {"t", "q", "r"}, {"u7", "u8", "u9", "u10", "u11"}),
  };

  SECTION("a veto redirects the merge to the next best peer") {
    testutil::ScriptedBackend backend([](const llm::ChatRequest& req, int) {
      REQUIRE(req.purpose == "merge");
      bool preferred = req.messages.back().content.find("[t, p]") != std::string::npos;
      return std::string(preferred ? R"({"merge": false})" : R"({"merge": true})");
    });
    auto merged = profiler::merge_groups(groups, 5, &backend, "m");
    CHECK(backend.calls() == 2);
    REQUIRE(merged.size() == 2);
    CHECK(merged[0].group_id == "g-t1");
    CHECK(merged[0].members.size() == 5);
    CHECK(merged[1].group_id == "g-t2");
    CHECK(merged[1].members.count("u1") == 1);
    CHECK(merged[1].merged_from == std::vector<std::string>{"g-s"});
  }

  SECTION("vetoing everything leaves the undersized group in place") {
    testutil::ScriptedBackend backend(
        testutil::ScriptedBackend::fixed(R"({"merge": false})"));
    auto merged = profiler::merge_groups(groups, 5, &backend, "m");
    CHECK(backend.calls() == 2);  // both candidate peers refused once
    REQUIRE(merged.size() == 3);
    CHECK(merged[0].members == std::set<std::string>{"u1"});
    CHECK(all_members(merged) == all_members(groups));
  }

  SECTION("an unusable reply falls back to the similarity rule") {
    testutil::ScriptedBackend backend(
        testutil::ScriptedBackend::fixed("hmm, hard to say"));
    auto merged = profiler::merge_groups(groups, 5, &backend, "m");
    REQUIRE(merged.size() == 2);
    CHECK(merged[0].members.count("u1") == 1);  // highest-jaccard peer absorbed it
  }

  SECTION("a non-boolean merge field is unusable, not a veto") {
    testutil::ScriptedBackend backend(
        testutil::ScriptedBackend::fixed(R"({"merge": "yes"})"));
    auto merged = profiler::merge_groups(groups, 5, &backend, "m");
    REQUIRE(merged.size() == 2);
  }
}

TEST_CASE("merge edge cases", "[profiler]") {
  CHECK_THROWS_WITH(profiler::merge_groups({}, 0), "min_group_size must be >= 1");

  // A lone group is returned as-is even when undersized.
  std::vector<profiler::UserGroup> lone = {make_group("g-a", "x", {}, {"u1"})};
  auto out = profiler::merge_groups(lone, 5);
  REQUIRE(out.size() == 1);
  CHECK(out[0].group_id == "g-a");

  // Two undersized groups collapse into a single remainder below the minimum.
  std::vector<profiler::UserGroup> pair = {make_group("g-a", "x", {}, {"u1"}),
                                           make_group("g-b", "y", {}, {"u2"})};
  auto remain = profiler::merge_groups(pair, 5);
  REQUIRE(remain.size() == 1);
  CHECK(remain[0].group_id == "g-b");
  CHECK(remain[0].members == std::set<std::string>{"u1", "u2"});
  CHECK(remain[0].merged_from == std::vector<std::string>{"g-a"});
}

TEST_CASE("merge invariants hold across random scenarios", "[profiler]") {
  const std::vector<std::string> personas = {"commuter", "explorer", "homebody"};
  const std::vector<std::string> tag_pool = {"food", "bars",  "parks",
                                             "gyms", "arts", "trains"};
  Rng rng(4242);
  int user_counter = 0;

  testutil::ScriptedBackend fuzzy_veto([](const llm::ChatRequest& req, int) {
    bool merge = fnv1a64(req.messages.back().content) % 2 == 0;
    return std::string(merge ? R"({"merge": true})" : R"({"merge": false})");
  });
  testutil::ScriptedBackend noisy(testutil::ScriptedBackend::fixed("not json at all"));

  for (int trial = 0; trial < 300; ++trial) {
    std::vector<profiler::UserGroup> groups;
    int n = 1 + static_cast<int>(rng.below(10));
    for (int i = 0; i < n; ++i) {
      profiler::UserGroup g;
      g.l1_label = personas[rng.below(personas.size())];
      std::set<std::string> tags;
      for (std::uint64_t t = rng.below(3); t > 0; --t)
        tags.insert(tag_pool[rng.below(tag_pool.size())]);
      g.l2_tags.assign(tags.begin(), tags.end());
      g.group_id = "g-" + std::to_string(i) + "-" + g.l1_label;
      int size = 1 + static_cast<int>(rng.below(8));
      for (int m = 0; m < size; ++m) g.members.insert("u" + std::to_string(user_counter++));
      groups.push_back(std::move(g));
    }
    int min_size = 1 + static_cast<int>(rng.below(6));
    auto users = all_members(groups);

    llm::Backend* backend = nullptr;
    bool vetoes_possible = false;
    switch (trial % 3) {
      case 0: break;  // similarity rule alone
      case 1: backend = &noisy; break;  // unusable replies act like consent
      case 2:
        backend = &fuzzy_veto;
        vetoes_possible = true;
        break;
    }

    auto merged = profiler::merge_groups(groups, min_size, backend, "m");

    // The merge must stay a partition of the original users.
    REQUIRE_NOTHROW(profiler::check_partition(merged, users));
    REQUIRE(std::is_sorted(merged.begin(), merged.end(),
                           [](const auto& a, const auto& b) {
                             return a.group_id < b.group_id;
                           }));

    if (!vetoes_possible) {
      // Undersized groups never survive unless one group is all that is left.
      if (merged.size() > 1)
        for (const auto& g : merged)
          REQUIRE(g.members.size() >= static_cast<std::size_t>(min_size));
      // Re-merging a settled grouping changes nothing.
      auto again = profiler::merge_groups(merged, min_size, backend, "m");
      REQUIRE(dump_groups(again) == dump_groups(merged));
    }
  }
}

TEST_CASE("weight blending mixes group and global views", "[profiler]") {
  optimizer::WeightMap global{{"a", 0.8}, {"b", 0.2}};
  optimizer::WeightMap group{{"a", 0.4}, {"c", 0.9}};

  auto half = profiler::blend_weights(global, group, 0.5);
  CHECK(half.at("a") == 0.5 * 0.4 + 0.5 * 0.8);
  CHECK(half.at("b") == 0.2);  // untouched by the group
  CHECK(half.at("c") == 0.9);  // group-only features keep their group value

  auto zero = profiler::blend_weights(global, group, 0.0);
  CHECK(zero.at("a") == 0.8);
  auto one = profiler::blend_weights(global, group, 1.0);
  CHECK(one.at("a") == 0.4);

  CHECK_THROWS_WITH(profiler::blend_weights(global, group, -0.1),
                    "alpha must be in [0,1]");
  CHECK_THROWS_WITH(profiler::blend_weights(global, group, 1.1),
                    "alpha must be in [0,1]");
}

TEST_CASE("the group label feature renders per group", "[profiler]") {
  auto registry = features::Registry::standard();
  profiler::ensure_group_label_feature(registry);
  REQUIRE(registry.contains(profiler::kGroupLabelFeatureId));
  const auto& d = registry.at(profiler::kGroupLabelFeatureId);
  CHECK(d.origin == "group_label");
  CHECK(d.renderer_id == "group");
  auto before = registry.size();
  profiler::ensure_group_label_feature(registry);  // idempotent
  CHECK(registry.size() == before);

  auto value = profiler::group_label_value("night owl");
  CHECK(value.feature_id == "group.label");
  CHECK(value.rendered == "group: night owl");
  CHECK(profiler::group_label_value("").rendered.empty());
}

TEST_CASE("groups survive a save/load round trip", "[profiler]") {
  testutil::TempDir dir;
  auto path = dir.path() / "groups.json";
  std::vector<profiler::UserGroup> groups = {
      make_group("g-a", "commuter", {"food"}, {"u1", "u2"}),
      make_group("g-b", "explorer", {}, {"u3"}),
  };
  groups[0].merged_from = {"g-old"};
  profiler::save_groups(path, groups);
  auto loaded = profiler::load_groups(path);
  CHECK(dump_groups(loaded) == dump_groups(groups));
}

TEST_CASE("group optimization propagates scaled weight movement", "[profiler]") {
  auto validation = group_validation();
  llm::MockBackend backend(
      {{"TASK: generate-features", "[]"},
       {"TASK: select-features",
        R"(["memory.long_term", "trajectory.visit_frequency", "memory.top_hours"])"}});

  auto registry = features::Registry::standard();
  optimizer::FeatureWeights weights;
  weights.ensure_initialized(registry);
  auto before_global = weights.global;

  auto group = make_group("g-commuter", "commuter", {}, {"a", "b", "c"});

  optimizer::OptimizeConfig cfg;
  cfg.iterations = 2;
  cfg.seed = 5;
  profiler::GroupConfig gcfg;

  auto outcome =
      profiler::optimize_group(group, validation, registry, weights, backend, cfg,
                               gcfg, boosting_predictor(), "stats", 10);

  CHECK(outcome.warnings.empty());
  CHECK(outcome.artifact.scope == "g-commuter");
  CHECK(registry.contains("group.label"));
  REQUIRE(outcome.artifact.best.group_label_feature.has_value());
  CHECK(*outcome.artifact.best.group_label_feature == "group.label");

  // The per-group map holds the effective weights after the run.
  REQUIRE(weights.per_group.count("g-commuter") == 1);
  CHECK(weights.per_group.at("g-commuter") == outcome.artifact.final_weights);

  // Global weights moved by the group's share (3 of 10 users) of each delta.
  CHECK_FALSE(outcome.artifact.weight_deltas.empty());
  for (const auto& [id, w] : weights.global) {
    double base = before_global.count(id) ? before_global.at(id) : 0.5;
    double delta = 0.0;
    auto it = outcome.artifact.weight_deltas.find(id);
    if (it != outcome.artifact.weight_deltas.end()) delta = it->second;
    REQUIRE(w == std::clamp(base + 1.0 * (0.3 * delta), 0.0, 1.0));
  }
}

TEST_CASE("group optimization inherits the city set when starved", "[profiler]") {
  auto registry = features::Registry::standard();
  optimizer::FeatureWeights weights;
  weights.global = {{"memory.long_term", 0.8}};
  testutil::ThrowingBackend backend;  // the inherit path must not consult a model
  optimizer::OptimizeConfig cfg;
  profiler::GroupConfig gcfg;
  std::vector<corpus::PredictionSample> no_samples;

  optimizer::FeatureSet city;
  city.selected = {"memory.long_term", "trajectory.times"};

  SECTION("with a fallback the set is inherited and labelled") {
    auto group = make_group("g-wanderers", "wanderer", {}, {"x", "y"});
    auto outcome =
        profiler::optimize_group(group, no_samples, registry, weights, backend, cfg,
                                 gcfg, boosting_predictor(), "stats", 10, &city);
    REQUIRE(outcome.warnings.size() == 1);
    CHECK(outcome.warnings[0] ==
          "group g-wanderers has no validation samples; inheriting the city feature set");
    CHECK(outcome.artifact.best.selected ==
          std::vector<std::string>{"memory.long_term", "trajectory.times",
                                   "group.label"});
    CHECK(outcome.artifact.metadata.at("inherited") == true);
    CHECK(outcome.artifact.final_weights.at("memory.long_term") == 0.8);
    CHECK(registry.contains("group.label"));
  }

  SECTION("an unlabelled group inherits without the label feature") {
    auto group = make_group("g-misc", "", {}, {"x"});
    auto outcome =
        profiler::optimize_group(group, no_samples, registry, weights, backend, cfg,
                                 gcfg, boosting_predictor(), "stats", 10, &city);
    CHECK(outcome.artifact.best.selected ==
          std::vector<std::string>{"memory.long_term", "trajectory.times"});
    CHECK_FALSE(outcome.artifact.best.group_label_feature.has_value());
    CHECK_FALSE(registry.contains("group.label"));
  }

  SECTION("without a fallback starvation is an error") {
    auto group = make_group("g-misc", "wanderer", {}, {"x"});
    CHECK_THROWS_WITH(
        profiler::optimize_group(group, no_samples, registry, weights, backend, cfg,
                                 gcfg, boosting_predictor(), "stats", 10),
        "group g-misc has no validation samples and no city fallback");
  }
}

TEST_CASE("group optimization validates its inputs", "[profiler]") {
  auto registry = features::Registry::standard();
  optimizer::FeatureWeights weights;
  testutil::ThrowingBackend backend;
  optimizer::OptimizeConfig cfg;
  profiler::GroupConfig gcfg;
  auto validation = group_validation();

  auto empty_group = make_group("g-none", "x", {}, {});
  CHECK_THROWS_WITH(
      profiler::optimize_group(empty_group, validation, registry, weights, backend,
                               cfg, gcfg, boosting_predictor(), "stats", 10),
      "cannot optimize an empty group");

  auto group = make_group("g-a", "x", {}, {"u1"});
  CHECK_THROWS_WITH(
      profiler::optimize_group(group, validation, registry, weights, backend, cfg,
                               gcfg, boosting_predictor(), "stats", 0),
      "total user count must be positive");
}
