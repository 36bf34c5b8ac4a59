#include <algorithm>
#include <set>

#include <catch2/catch_amalgamated.hpp>

#include "armove/transfer.hpp"
#include "support/test_support.hpp"

using namespace armove;

namespace {

corpus::Corpus make_city(const std::string& city, int users) {
  corpus::Corpus c;
  c.city = city;
  c.tz_offset_hours = 3;
  for (int i = 0; i < users; ++i) {
    std::string uid = "u" + std::to_string(i);
    corpus::Session s;
    s.user_id = uid;
    s.session_id = 0;
    s.split = "train";
    s.stays = {testutil::make_stay("a", 1000), testutil::make_stay("b", 5000)};
    for (auto& st : s.stays) st.user_id = uid;
    c.users[uid] = {s};
  }
  return c;
}

transfer::TransferArtifact sample_artifact() {
  transfer::TransferArtifact a;
  a.source_cities = {"alphaville"};
  a.model_id = "gpt-4o-mini";
  a.weights.global = {{"memory.long_term", 0.9}, {"trajectory.times", 0.5}};
  a.weights.per_group["g-commuter"] = {{"memory.long_term", 0.7}};
  a.feature_set.standard = {"memory.long_term", "trajectory.times"};
  a.feature_set.selected = {"memory.long_term", "trajectory.times"};
  a.descriptors = features::Registry::standard().to_json();
  a.metadata = {{"seed", 7}, {"model", "gpt-4o-mini"}};

  profiler::UserGroup g;
  g.group_id = "g-commuter";
  g.l1_label = "commuter";
  g.members = {"u1", "u2"};
  a.groups.push_back(g);
  return a;
}

}  // namespace

TEST_CASE("transfer artifacts round-trip and resolve group lookups", "[transfer]") {
  testutil::TempDir dir;
  auto artifact = sample_artifact();
  auto path = dir.path() / "transfer.json";
  artifact.save(path);
  auto loaded = transfer::TransferArtifact::load(path);
  CHECK(loaded.to_json().dump() == artifact.to_json().dump());

  CHECK(loaded.group_label_for("u1") == "commuter");
  CHECK(loaded.group_id_for("u2") == "g-commuter");
  CHECK(loaded.group_label_for("stranger").empty());
  CHECK(loaded.group_id_for("stranger").empty());

  auto registry = loaded.registry();
  CHECK(registry.size() == 16);
  CHECK(registry.contains("memory.long_term"));
}

TEST_CASE("export packs a completed run directory", "[transfer]") {
  testutil::TempDir dir;

  optimizer::OptimizationArtifact opt;
  opt.scope = "alphaville";
  opt.iterations_run = 2;
  opt.best.selected = {"memory.long_term", "trajectory.times"};
  opt.best_j = 0.4;
  opt.metadata = {{"model", "gpt-4o-mini"}, {"seed", 7}};
  opt.save(dir.path() / layout::kOptimization);

  canonical::write_json(dir.path() / layout::kRegistry,
                        features::Registry::standard().to_json());
  optimizer::FeatureWeights weights;
  weights.global = {{"memory.long_term", 0.8}};
  canonical::write_json(dir.path() / layout::kWeights, weights.to_json());
  write_file_atomic(dir.path() / layout::kConfig, "city = alphaville\n");

  SECTION("with groups present they ride along") {
    profiler::UserGroup g;
    g.group_id = "g-a";
    g.l1_label = "commuter";
    g.members = {"u1"};
    profiler::save_groups(dir.path() / layout::kGroups, {g});

    auto artifact = transfer::export_artifact(dir.path());
    CHECK(artifact.source_cities == std::vector<std::string>{"alphaville"});
    CHECK(artifact.model_id == "gpt-4o-mini");
    CHECK(artifact.feature_set.to_json().dump() == opt.best.to_json().dump());
    CHECK(artifact.weights.global.at("memory.long_term") == 0.8);
    CHECK(artifact.metadata.at("config") == "city = alphaville\n");
    CHECK(artifact.metadata.at("seed") == 7);
    REQUIRE(artifact.groups.size() == 1);
    CHECK(artifact.groups[0].group_id == "g-a");
    CHECK(artifact.registry().size() == 16);
  }

  SECTION("without groups the artifact is simply ungrouped") {
    auto artifact = transfer::export_artifact(dir.path());
    CHECK(artifact.groups.empty());
    CHECK(artifact.group_label_for("u1").empty());
  }
}

TEST_CASE("export names every missing piece", "[transfer]") {
  testutil::TempDir dir;
  CHECK_THROWS_WITH(
      transfer::export_artifact(dir.path()),
      "run is incomplete; missing: optimization.json, registry.json, "
      "weights.json, config.txt");

  optimizer::OptimizationArtifact opt;
  opt.scope = "x";
  opt.save(dir.path() / layout::kOptimization);
  write_file_atomic(dir.path() / layout::kConfig, "c\n");
  CHECK_THROWS_WITH(transfer::export_artifact(dir.path()),
                    "run is incomplete; missing: registry.json, weights.json");
}

TEST_CASE("user replacement plans are seeded and validated", "[transfer]") {
  auto corpus = make_city("alphaville", 10);
  std::set<std::string> artifact_users = {"u0", "u1", "u2", "u3", "u4", "u5"};

  SECTION("replace_n zero keeps everyone") {
    auto plan = transfer::plan_user_replacement(corpus, artifact_users, 0, 9);
    CHECK(plan.kept == std::vector<std::string>(artifact_users.begin(),
                                                artifact_users.end()));
    CHECK(plan.removed.empty());
    CHECK(plan.added.empty());
  }

  SECTION("swaps draw from the right pools deterministically") {
    auto plan = transfer::plan_user_replacement(corpus, artifact_users, 2, 9);
    auto again = transfer::plan_user_replacement(corpus, artifact_users, 2, 9);
    CHECK(plan.removed == again.removed);
    CHECK(plan.added == again.added);
    CHECK(plan.kept == again.kept);

    REQUIRE(plan.removed.size() == 2);
    REQUIRE(plan.added.size() == 2);
    CHECK(plan.kept.size() == 4);
    CHECK(std::is_sorted(plan.removed.begin(), plan.removed.end()));
    CHECK(std::is_sorted(plan.added.begin(), plan.added.end()));
    for (const auto& u : plan.removed) CHECK(artifact_users.count(u) == 1);
    for (const auto& u : plan.added) CHECK(artifact_users.count(u) == 0);
    for (const auto& u : plan.kept) {
      CHECK(artifact_users.count(u) == 1);
      CHECK(std::find(plan.removed.begin(), plan.removed.end(), u) ==
            plan.removed.end());
    }
  }

  SECTION("bad arguments are rejected") {
    CHECK_THROWS_WITH(transfer::plan_user_replacement(corpus, artifact_users, -1, 9),
                      "replace_n must be >= 0");
    CHECK_THROWS_WITH(transfer::plan_user_replacement(corpus, artifact_users, 5, 9),
                      "need 5 held-out users but only 4 are available");
    std::set<std::string> one = {"u0"};
    CHECK_THROWS_WITH(transfer::plan_user_replacement(corpus, one, 2, 9),
                      "cannot replace 2 of 1 artifact users");
  }
}

TEST_CASE("city fusion draws an even share from each corpus", "[transfer]") {
  auto a = make_city("alef", 12);
  auto b = make_city("bet", 12);
  auto c = make_city("gimel", 12);
  auto d = make_city("dalet", 12);

  auto result = transfer::fuse_cities({&a, &b, &c, &d}, 20, 11);
  CHECK(result.warnings.empty());
  CHECK(result.fused.city == "alef+bet+gimel+dalet");
  CHECK(result.fused.tz_offset_hours == 3);
  CHECK(result.fused.users.size() == 20);
  CHECK(result.drawn_per_city ==
        std::map<std::string, std::size_t>{
            {"alef", 5}, {"bet", 5}, {"gimel", 5}, {"dalet", 5}});

  // Ids are namespaced and rewritten through sessions and stays.
  for (const auto& [uid, sessions] : result.fused.users) {
    auto colon = uid.find(':');
    REQUIRE(colon != std::string::npos);
    for (const auto& s : sessions) {
      CHECK(s.user_id == uid);
      for (const auto& st : s.stays) CHECK(st.user_id == uid);
    }
  }

  SECTION("the remainder lands on the first cities") {
    auto r = transfer::fuse_cities({&a, &b, &c}, 8, 11);
    CHECK(r.drawn_per_city ==
          std::map<std::string, std::size_t>{{"alef", 3}, {"bet", 3}, {"gimel", 2}});
    CHECK(r.fused.users.size() == 8);
  }

  SECTION("same seed, same draw") {
    auto r1 = transfer::fuse_cities({&a, &b, &c, &d}, 20, 11);
    std::set<std::string> u1, u2;
    for (const auto& [uid, _] : result.fused.users) u1.insert(uid);
    for (const auto& [uid, _] : r1.fused.users) u2.insert(uid);
    CHECK(u1 == u2);
  }
}

TEST_CASE("city fusion rebalances around short cities", "[transfer]") {
  auto small = make_city("c0", 2);
  auto mid = make_city("c1", 10);
  auto big = make_city("c2", 10);

  auto result = transfer::fuse_cities({&small, &mid, &big}, 9, 4);
  REQUIRE(result.warnings.size() == 1);
  CHECK(result.warnings[0] == "city c0 has only 2 users; taking all");
  CHECK(result.drawn_per_city ==
        std::map<std::string, std::size_t>{{"c0", 2}, {"c1", 4}, {"c2", 3}});
  CHECK(result.fused.users.size() == 9);

  SECTION("a global deficit is reported, not fatal") {
    auto tiny1 = make_city("t1", 2);
    auto tiny2 = make_city("t2", 2);
    auto short_fused = transfer::fuse_cities({&tiny1, &tiny2}, 10, 4);
    CHECK(short_fused.fused.users.size() == 4);
    REQUIRE(short_fused.warnings.size() == 3);
    CHECK(short_fused.warnings[2] == "not enough users across cities; fused 4 of 10");
  }
}

TEST_CASE("city fusion validates its inputs", "[transfer]") {
  auto a = make_city("a", 5);
  auto b = make_city("b", 5);
  CHECK_THROWS_WITH(transfer::fuse_cities({&a}, 5, 1),
                    "fusion needs at least two corpora");
  CHECK_THROWS_WITH(transfer::fuse_cities({&a, &b}, 1, 1),
                    "total_users must cover at least one user per city");
}

TEST_CASE("selected features missing from a registry render unavailable",
          "[transfer]") {
  auto registry = features::Registry::standard();
  optimizer::FeatureSet set;
  set.selected = {"memory.long_term", "generated.only-at-home", "trajectory.times"};

  CHECK(transfer::unavailable_features(set, registry) ==
        std::vector<std::string>{"generated.only-at-home"});

  auto value = transfer::unavailable_value("generated.only-at-home");
  CHECK(value.feature_id == "generated.only-at-home");
  CHECK(value.rendered == "generated.only-at-home: unavailable");
  CHECK_FALSE(value.empty_payload());
}
