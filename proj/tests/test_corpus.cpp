#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "armove/corpus.hpp"
#include "support/preprocessing_fixture.hpp"
#include "support/test_support.hpp"

using namespace armove;
using corpus::Stay;

namespace {

// Reference sessionizer, written independently of the production one: builds
// explicit stay groups with its own boundary arithmetic.
std::vector<std::vector<Stay>> oracle_sessions(const std::vector<Stay>& stays,
                                               corpus::SessionPolicy policy,
                                               int tz_offset_hours) {
  std::vector<std::vector<Stay>> out;
  auto local_day = [&](std::int64_t ts) {
    std::int64_t shifted = ts + std::int64_t(tz_offset_hours) * 3600;
    std::int64_t rem = ((shifted % 86400) + 86400) % 86400;
    return (shifted - rem) / 86400;
  };
  for (const auto& st : stays) {
    bool boundary = out.empty();
    if (!boundary) {
      const auto& cur = out.back();
      switch (policy) {
        case corpus::SessionPolicy::kWindow72h:
          boundary = st.timestamp - cur.front().timestamp > 72 * 3600;
          break;
        case corpus::SessionPolicy::kWindow72hGap:
          boundary = st.timestamp - cur.back().timestamp > 72 * 3600;
          break;
        case corpus::SessionPolicy::kPerDay:
          boundary = local_day(st.timestamp) != local_day(cur.front().timestamp);
          break;
      }
    }
    if (boundary) out.emplace_back();
    out.back().push_back(st);
  }
  return out;
}

std::vector<Stay> random_stay_sequence(Rng& rng) {
  // Gap menu hits the 72h boundary exactly and from both sides, plus
  // local-midnight neighborhoods.
  static const std::int64_t gaps[] = {0,     1,        1800,      3600,
                                      82800, 86399,    86400,     86401,
                                      259140, 259200,  259201,    864000};
  std::vector<Stay> stays;
  std::int64_t ts = 1704067200 - std::int64_t(rng.below(30)) * 86400 +
                    std::int64_t(rng.below(86400));
  std::size_t n = 1 + rng.below(60);
  for (std::size_t i = 0; i < n; ++i) {
    Stay st;
    st.user_id = "u";
    st.location_id = "loc" + std::to_string(rng.below(12));
    st.timestamp = ts;
    stays.push_back(st);
    ts += gaps[rng.below(std::size(gaps))];
  }
  return stays;
}

}  // namespace

TEST_CASE("sessionize agrees with a reference walk on random sequences", "[corpus]") {
  const corpus::SessionPolicy policies[] = {corpus::SessionPolicy::kWindow72h,
                                            corpus::SessionPolicy::kWindow72hGap,
                                            corpus::SessionPolicy::kPerDay};
  const int tz_values[] = {-8, 0, 5, 8, 13};
  Rng rng(2024);
  for (int trial = 0; trial < 300; ++trial) {
    auto stays = random_stay_sequence(rng);
    auto policy = policies[rng.below(3)];
    int tz = tz_values[rng.below(std::size(tz_values))];

    auto expect = oracle_sessions(stays, policy, tz);
    auto got = corpus::sessionize(stays, policy, tz);

    REQUIRE(got.size() == expect.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].session_id == static_cast<int>(i));
      CHECK(got[i].user_id == "u");
      REQUIRE(got[i].stays.size() == expect[i].size());
      for (std::size_t j = 0; j < expect[i].size(); ++j) {
        CHECK(got[i].stays[j].timestamp == expect[i][j].timestamp);
        CHECK(got[i].stays[j].location_id == expect[i][j].location_id);
      }
    }
  }
}

TEST_CASE("a 72h-exactly gap does not start a new session", "[corpus]") {
  std::vector<Stay> stays;
  for (std::int64_t off : {std::int64_t(0), 72 * 3600L}) {
    Stay st;
    st.user_id = "u";
    st.location_id = "a";
    st.timestamp = 1000000 + off;
    stays.push_back(st);
  }
  CHECK(corpus::sessionize(stays, corpus::SessionPolicy::kWindow72h).size() == 1);
  CHECK(corpus::sessionize(stays, corpus::SessionPolicy::kWindow72hGap).size() == 1);
  stays[1].timestamp += 1;
  CHECK(corpus::sessionize(stays, corpus::SessionPolicy::kWindow72h).size() == 2);
  CHECK(corpus::sessionize(stays, corpus::SessionPolicy::kWindow72hGap).size() == 2);
}

TEST_CASE("fixture sessionizes to the hand-computed boundaries", "[corpus]") {
  auto expect = testutil::preprocessing_fixture_expectations();

  auto w72 = testutil::build_fixture_corpus(corpus::SessionPolicy::kWindow72h);
  auto gap = testutil::build_fixture_corpus(corpus::SessionPolicy::kWindow72hGap);
  auto day = testutil::build_fixture_corpus(corpus::SessionPolicy::kPerDay);

  for (const auto& [user, count] : expect.sessions_window72h)
    CHECK(w72.users.at(user).size() == count);
  for (const auto& [user, count] : expect.sessions_window72h_gap)
    CHECK(gap.users.at(user).size() == count);
  for (const auto& [user, count] : expect.sessions_per_day)
    CHECK(day.users.at(user).size() == count);

  // u05's long session: the window rule splits off the +73h stay, the gap
  // rule keeps all five stays together.
  const auto& u05_w = w72.users.at("u05");
  CHECK(u05_w[5].stays.size() == 4);
  CHECK(u05_w[6].stays.size() == 1);
  const auto& u05_g = gap.users.at("u05");
  CHECK(u05_g[5].stays.size() == 5);

  // u04's midnight session: whole under the window rule, split 1+3 by local day.
  CHECK(w72.users.at("u04")[5].stays.size() == 4);
  const auto& u04_d = day.users.at("u04");
  CHECK(u04_d[5].stays.size() == 1);
  CHECK(u04_d[6].stays.size() == 3);
}

TEST_CASE("fixture filtering drops exactly the designed sessions and users",
          "[corpus]") {
  auto expect = testutil::preprocessing_fixture_expectations();
  auto built = testutil::build_fixture_corpus(corpus::SessionPolicy::kWindow72h);

  corpus::FilterStats stats;
  auto filtered = corpus::filter_corpus(built, &stats);

  CHECK(stats.dropped_sessions == expect.dropped_sessions);
  CHECK(stats.dropped_users == expect.dropped_users);
  REQUIRE(filtered.users.size() == expect.surviving_sessions.size());
  std::size_t total = 0;
  for (const auto& [user, count] : expect.surviving_sessions) {
    REQUIRE(filtered.users.count(user) == 1);
    CHECK(filtered.users.at(user).size() == count);
    total += filtered.users.at(user).size();
  }
  CHECK(total == expect.total_surviving);

  // Session ids are contiguous after filtering.
  for (const auto& [user, sessions] : filtered.users)
    for (std::size_t i = 0; i < sessions.size(); ++i)
      CHECK(sessions[i].session_id == static_cast<int>(i));

  // Every surviving session meets the minimums.
  for (const auto& [user, sessions] : filtered.users) {
    CHECK(sessions.size() >= corpus::kMinSessionsPerUser);
    for (const auto& s : sessions) CHECK(s.stays.size() >= corpus::kMinStaysPerSession);
  }
}

TEST_CASE("filter respects custom minimums", "[corpus]") {
  auto built = testutil::build_fixture_corpus(corpus::SessionPolicy::kWindow72h);
  corpus::FilterStats stats;
  auto loose = corpus::filter_corpus(built, &stats, 3, 3);
  // With 3-stay sessions allowed, u09 (6x3) and u02's short session survive.
  CHECK(loose.users.count("u09") == 1);
  CHECK(loose.users.at("u02").size() == 7);
  CHECK(loose.users.count("u10") == 1);  // 3 sessions now clears min_sessions=3

  corpus::Corpus tiny;
  tiny.users["a"] = {testutil::make_session(0, "", {testutil::make_stay("x", 1)})};
  CHECK_THROWS_AS(corpus::filter_corpus(tiny), Error);
}

TEST_CASE("fixture split counts follow the floor rule", "[corpus]") {
  auto expect = testutil::preprocessing_fixture_expectations();
  auto filtered =
      corpus::filter_corpus(testutil::build_fixture_corpus(corpus::SessionPolicy::kWindow72h));

  auto count_tags = [&](corpus::Corpus& c) {
    std::map<std::string, std::size_t> tags;
    for (const auto& [_, sessions] : c.users)
      for (const auto& s : sessions) ++tags[s.split];
    return tags;
  };

  SECTION("7:1:2") {
    auto c = filtered;
    corpus::temporal_split(c, corpus::split_ratios_from_string("7:1:2"));
    auto tags = count_tags(c);
    // 47 sessions: floor(32.9)=32 train, floor(4.7)=4 valid, 11 test.
    CHECK(tags["train"] == 32);
    CHECK(tags["valid"] == 4);
    CHECK(tags["test"] == 11);
    // The globally earliest session trains; the latest tests.
    CHECK(c.users.at("u01")[0].split == "train");
    CHECK(c.users.at("u04")[5].split == "test");
  }

  SECTION("4:1:5") {
    auto c = filtered;
    corpus::temporal_split(c, corpus::split_ratios_from_string("4:1:5"));
    auto tags = count_tags(c);
    // 47 sessions: floor(18.8)=18 train, floor(4.7)=4 valid, 25 test.
    CHECK(tags["train"] == 18);
    CHECK(tags["valid"] == 4);
    CHECK(tags["test"] == 25);
  }
}

TEST_CASE("temporal split matches an independent re-derivation", "[corpus]") {
  auto filtered =
      corpus::filter_corpus(testutil::build_fixture_corpus(corpus::SessionPolicy::kWindow72h));
  corpus::temporal_split(filtered, {0.7, 0.1, 0.2});

  // Re-derive tags: order (first_ts, user, session_id), apply floor cutoffs.
  struct Ref {
    std::int64_t ts;
    std::string user;
    int idx;
  };
  std::vector<Ref> refs;
  for (const auto& [user, sessions] : filtered.users)
    for (const auto& s : sessions) refs.push_back({s.stays.front().timestamp, user, s.session_id});
  std::sort(refs.begin(), refs.end(), [](const Ref& a, const Ref& b) {
    return std::tie(a.ts, a.user, a.idx) < std::tie(b.ts, b.user, b.idx);
  });
  std::size_t n = refs.size();
  std::size_t n_train = static_cast<std::size_t>(std::floor(0.7 * double(n)));
  std::size_t n_valid = static_cast<std::size_t>(std::floor(0.1 * double(n)));
  for (std::size_t i = 0; i < n; ++i) {
    std::string want = i < n_train ? "train" : (i < n_train + n_valid ? "valid" : "test");
    CHECK(filtered.users.at(refs[i].user)[std::size_t(refs[i].idx)].split == want);
  }
}

TEST_CASE("split ratio parsing and validation", "[corpus]") {
  auto r = corpus::split_ratios_from_string("4:1:5");
  CHECK(r.train == 4.0);
  CHECK(r.valid == 1.0);
  CHECK(r.test == 5.0);
  CHECK_THROWS_AS(corpus::split_ratios_from_string("7:1"), Error);
  CHECK_THROWS_AS(corpus::split_ratios_from_string("a:b:c"), Error);

  corpus::Corpus c = testutil::build_fixture_corpus(corpus::SessionPolicy::kWindow72h);
  CHECK_THROWS_AS(corpus::temporal_split(c, {0.0, 0.1, 0.9}), Error);
}

TEST_CASE("parse_checkins reports precise skip reasons", "[corpus]") {
  corpus::ColumnSchema schema;
  schema.location = 2;
  schema.lat = 3;
  schema.lon = 4;
  std::vector<std::string> lines = {
      "u1\t2024-01-01T00:00:00\thome\t31.2\t121.4",
      "",
      "\t2024-01-01T01:00:00\thome\t31.2\t121.4",
      "u1\tnever\thome\t31.2\t121.4",
      "u1\t2024-01-01T02:00:00\thome",
      "u1\t2024-01-01T03:00:00\thome\tnorth\teast",
      "u1\t2024-01-01T04:00:00\thome\t91.0\t121.4",
      "u1\t2024-01-01T05:00:00\t\t31.2\t121.4",
      "u1\t2024-01-01T06:00:00\tcafe\t31.3\t121.5",
  };
  auto result = corpus::parse_checkins(lines, schema);
  REQUIRE(result.stays.size() == 2);
  CHECK(result.skipped == 6);
  REQUIRE(result.warnings.size() == 6);
  CHECK(result.warnings[0] == "line 3: missing user");
  CHECK(result.warnings[1] == "line 4: malformed timestamp");
  CHECK(result.warnings[2] == "line 5: missing coordinates");
  CHECK(result.warnings[3] == "line 6: malformed coordinates");
  CHECK(result.warnings[4] == "line 7: coordinates out of range");
  CHECK(result.warnings[5] == "line 8: missing location id");

  CHECK(result.stays[0].location_id == "home");
  REQUIRE(result.stays[0].lat.has_value());
  CHECK(*result.stays[0].lat == 31.2);
}

TEST_CASE("parse_checkins without coordinate columns ignores them", "[corpus]") {
  corpus::ColumnSchema schema;
  schema.location = 2;
  auto result = corpus::parse_checkins({"u1\t100\thome\tgarbage"}, schema);
  REQUIRE(result.stays.size() == 1);
  CHECK_FALSE(result.stays[0].lat.has_value());
  CHECK(result.stays[0].timestamp == 100);
}

TEST_CASE("coordinate-only schema maps through the grid", "[corpus]") {
  corpus::ColumnSchema schema;
  schema.lat = 2;
  schema.lon = 3;
  CHECK_THROWS_AS(corpus::parse_checkins({}, schema), Error);  // no grid

  corpus::GridConfig grid{31.2, 121.4, 1.0};
  auto result = corpus::parse_checkins(
      {"u1\t100\t31.2\t121.4", "u1\t200\t31.21\t121.41"}, schema, grid);
  REQUIRE(result.stays.size() == 2);
  CHECK(result.stays[0].location_id == "0_0");
  CHECK(result.stays[0].location_id == corpus::map_to_grid(31.2, 121.4, grid));
  CHECK(result.stays[1].location_id == corpus::map_to_grid(31.21, 121.41, grid));

  // Grid cells follow plain equirectangular arithmetic.
  double lat_rad = 31.2 * M_PI / 180.0;
  double x_km = (121.41 - 121.4) * corpus::kKmPerDegLon * std::cos(lat_rad);
  double y_km = (31.21 - 31.2) * corpus::kKmPerDegLat;
  std::string want = std::to_string(static_cast<long long>(std::floor(x_km))) + "_" +
                     std::to_string(static_cast<long long>(std::floor(y_km)));
  CHECK(result.stays[1].location_id == want);

  CHECK_THROWS_AS(corpus::map_to_grid(31.2, 121.4, {31.2, 121.4, 0.0}), Error);
}

TEST_CASE("make_sample carries history, context, and target", "[corpus]") {
  auto filtered =
      corpus::filter_corpus(testutil::build_fixture_corpus(corpus::SessionPolicy::kWindow72h));
  auto sample = corpus::make_sample(filtered, "u01", 2);
  CHECK(sample.user_id == "u01");
  CHECK(sample.session_id == 2);
  CHECK(sample.history.size() == 2);  // sessions 0 and 1 precede session 2
  CHECK(sample.context.size() == 3);  // 4 stays, last is the target
  const auto& session = filtered.users.at("u01")[2];
  CHECK(sample.target.location_id == session.stays.back().location_id);
  CHECK(sample.sample_id() == "u01#2");

  CHECK_THROWS_AS(corpus::make_sample(filtered, "nobody", 0), Error);
  CHECK_THROWS_AS(corpus::make_sample(filtered, "u01", 99), Error);
}

TEST_CASE("samples_for_split picks exactly the tagged sessions", "[corpus]") {
  auto filtered =
      corpus::filter_corpus(testutil::build_fixture_corpus(corpus::SessionPolicy::kWindow72h));
  corpus::temporal_split(filtered, {0.7, 0.1, 0.2});
  auto valid = corpus::samples_for_split(filtered, "valid");
  CHECK(valid.size() == 4);
  std::set<std::string> tagged;
  for (const auto& [user, sessions] : filtered.users)
    for (const auto& s : sessions)
      if (s.split == "valid") tagged.insert(user + "#" + std::to_string(s.session_id));
  std::set<std::string> sampled;
  for (const auto& s : valid) sampled.insert(s.sample_id());
  CHECK(sampled == tagged);
}

TEST_CASE("sample_test_set clamps and stays deterministic", "[corpus]") {
  auto filtered =
      corpus::filter_corpus(testutil::build_fixture_corpus(corpus::SessionPolicy::kWindow72h));
  corpus::temporal_split(filtered, {0.7, 0.1, 0.2});

  auto a = corpus::sample_test_set(filtered, 5, 99);
  auto b = corpus::sample_test_set(filtered, 5, 99);
  REQUIRE(a.samples.size() == 5);
  CHECK_FALSE(a.warning.has_value());
  for (std::size_t i = 0; i < a.samples.size(); ++i)
    CHECK(a.samples[i].sample_id() == b.samples[i].sample_id());

  auto c = corpus::sample_test_set(filtered, 5, 100);
  std::set<std::string> ids_a, ids_c;
  for (const auto& s : a.samples) ids_a.insert(s.sample_id());
  for (const auto& s : c.samples) ids_c.insert(s.sample_id());
  CHECK(ids_a.size() == 5);

  auto all = corpus::sample_test_set(filtered, 1000, 1);
  CHECK(all.samples.size() == 11);  // every test session
  REQUIRE(all.warning.has_value());
  CHECK(all.warning->find("only 11 available") != std::string::npos);

  CHECK_THROWS_AS(corpus::sample_test_set(filtered, 0, 1), Error);
}

TEST_CASE("corpus json round-trip preserves everything", "[corpus]") {
  auto built = testutil::build_fixture_corpus(corpus::SessionPolicy::kWindow72h);
  auto filtered = corpus::filter_corpus(built);
  corpus::temporal_split(filtered, {0.7, 0.1, 0.2});
  filtered.grid = corpus::GridConfig{31.2, 121.4, 1.0};

  testutil::TempDir dir;
  auto path = dir.path() / "corpus.json";
  corpus::save(filtered, path);
  auto loaded = corpus::load(path);

  CHECK(loaded.city == filtered.city);
  CHECK(loaded.tz_offset_hours == filtered.tz_offset_hours);
  REQUIRE(loaded.grid.has_value());
  CHECK(loaded.grid->cell_km == 1.0);
  REQUIRE(loaded.users.size() == filtered.users.size());
  for (const auto& [user, sessions] : filtered.users) {
    const auto& got = loaded.users.at(user);
    REQUIRE(got.size() == sessions.size());
    for (std::size_t i = 0; i < sessions.size(); ++i) {
      CHECK(got[i].split == sessions[i].split);
      CHECK(got[i].session_id == sessions[i].session_id);
      REQUIRE(got[i].stays.size() == sessions[i].stays.size());
      for (std::size_t j = 0; j < sessions[i].stays.size(); ++j) {
        CHECK(got[i].stays[j].location_id == sessions[i].stays[j].location_id);
        CHECK(got[i].stays[j].timestamp == sessions[i].stays[j].timestamp);
      }
    }
  }

  // Save is byte-stable.
  auto second = dir.path() / "corpus2.json";
  corpus::save(loaded, second);
  CHECK(read_file(path) == read_file(second));
}

TEST_CASE("restrict_users keeps only the requested ids", "[corpus]") {
  auto filtered =
      corpus::filter_corpus(testutil::build_fixture_corpus(corpus::SessionPolicy::kWindow72h));
  auto sub = corpus::restrict_users(filtered, {"u01", "u03", "ghost"});
  CHECK(sub.users.size() == 2);
  CHECK(sub.users.count("u01") == 1);
  CHECK(sub.users.count("u03") == 1);
  CHECK(sub.city == filtered.city);
}
