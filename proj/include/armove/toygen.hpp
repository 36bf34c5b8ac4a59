#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "armove/canonical.hpp"
#include "armove/common.hpp"
#include "armove/geo.hpp"

namespace armove::toygen {

/// Deterministic synthetic check-in data, small enough to run the whole
/// pipeline in seconds yet shaped like the real thing: home/work routine
/// with occasional exploration, a friendship ring, and fixed coordinates
/// backed by a reverse-geocode fixture.

struct ToyCity {
  std::string name;
  std::string user_prefix;  // user ids: <user_prefix><k>
  std::string loc_prefix;   // location ids: <loc_prefix><i>
  double center_lat;
  double center_lon;
};

inline std::vector<ToyCity> standard_cities() {
  return {
      {"alphaville", "au", "al", 31.200, 121.400},
      {"betatown", "bu", "bl", 55.750, 37.620},
      {"gammaport", "gu", "gl", 35.680, 139.770},
      {"deltabay", "du", "dl", -23.550, -46.630},
  };
}

struct ToyConfig {
  int users_per_city = 10;
  int locations_per_city = 24;
  int sessions_per_user = 16;
  std::uint64_t seed = 11;
  std::int64_t start_ts = 1704067200;  // 2024-01-01 00:00:00 UTC
};

inline double location_lat(const ToyCity& city, int i) {
  return city.center_lat + 0.001 * (i % 6);
}

inline double location_lon(const ToyCity& city, int i) {
  return city.center_lon + 0.001 * (i / 6);
}

inline std::string location_category(int i) {
  static const std::vector<std::string> kinds = {"food", "park", "office", "shop",
                                                 "transit"};
  return kinds[static_cast<std::size_t>(i) % kinds.size()];
}

struct CityFiles {
  std::string checkins_tsv;
  std::string social_tsv;
};

inline CityFiles generate_city(const ToyCity& city, const ToyConfig& cfg) {
  CityFiles files;
  Rng rng = Rng(cfg.seed).derive(city.name);

  auto loc = [&](int i) { return city.loc_prefix + std::to_string(i); };
  auto line = [&](const std::string& user, std::int64_t ts, int loc_idx) {
    files.checkins_tsv += user + "\t" + format_utc(ts) + "\t" + loc(loc_idx) + "\t" +
                          format_fixed(location_lat(city, loc_idx), 5) + "\t" +
                          format_fixed(location_lon(city, loc_idx), 5) + "\t" +
                          location_category(loc_idx) + "\n";
  };

  for (int k = 0; k < cfg.users_per_city; ++k) {
    std::string user = city.user_prefix + std::to_string(k);
    Rng urng = rng.derive(static_cast<std::uint64_t>(k));
    int home = k % 3;
    int work = 3 + k % 4;
    std::vector<int> favorites = {home, work, 7 + k % 5,
                                  12 + k % std::max(1, cfg.locations_per_city - 12)};

    // Sessions four days apart so any windowed policy separates them.
    for (int s = 0; s < cfg.sessions_per_user; ++s) {
      std::int64_t t = cfg.start_ts + static_cast<std::int64_t>(k) * 3600 +
                       static_cast<std::int64_t>(s) * 4 * 86400;
      int stays = 4 + static_cast<int>(urng.below(4));
      for (int j = 0; j < stays; ++j) {
        int where;
        if (j == 0) {
          where = home;
        } else if (j == stays - 1) {
          // The prediction target: strongly biased toward routine.
          double r = urng.real();
          if (r < 0.55)
            where = home;
          else if (r < 0.85)
            where = work;
          else
            where = favorites[static_cast<std::size_t>(
                urng.below(favorites.size()))];
        } else if (urng.real() < 0.75) {
          where = favorites[static_cast<std::size_t>(urng.below(favorites.size()))];
        } else {
          where = static_cast<int>(urng.below(
              static_cast<std::uint64_t>(cfg.locations_per_city)));
        }
        line(user, t, where);
        t += 3600 * (2 + static_cast<std::int64_t>(urng.below(4)));
      }
    }
  }

  // Friendship ring plus a chord from every even user.
  for (int k = 0; k < cfg.users_per_city; ++k) {
    std::string a = city.user_prefix + std::to_string(k);
    std::string b = city.user_prefix + std::to_string((k + 1) % cfg.users_per_city);
    files.social_tsv += a + "\t" + b + "\n";
    if (k % 2 == 0 && cfg.users_per_city > 2) {
      std::string c = city.user_prefix + std::to_string((k + 2) % cfg.users_per_city);
      files.social_tsv += a + "\t" + c + "\n";
    }
  }
  return files;
}

inline std::vector<canonical::json> geo_fixture_records(
    const std::vector<ToyCity>& cities, const ToyConfig& cfg) {
  std::vector<canonical::json> records;
  for (const auto& city : cities) {
    for (int i = 0; i < cfg.locations_per_city; ++i) {
      canonical::json j;
      j["key"] = geo::quantize_key(location_lat(city, i), location_lon(city, i));
      j["admin"] = city.name + " district " + std::to_string(i % 3);
      j["subdistrict"] = "sd-" + std::to_string(i % 5);
      j["pois"] = std::vector<std::string>{location_category(i) + " corner",
                                           "plaza " + std::to_string(i % 4)};
      records.push_back(std::move(j));
    }
  }
  return records;
}

/// Writes <city>.tsv and <city>_social.tsv for each city plus a shared
/// geo_fixture.jsonl into dir.
inline void generate(const std::filesystem::path& dir, const ToyConfig& cfg = {}) {
  auto cities = standard_cities();
  for (const auto& city : cities) {
    auto files = generate_city(city, cfg);
    write_file_atomic(dir / (city.name + ".tsv"), files.checkins_tsv);
    write_file_atomic(dir / (city.name + "_social.tsv"), files.social_tsv);
  }
  canonical::write_json_lines(dir / "geo_fixture.jsonl",
                              geo_fixture_records(cities, cfg));
}

}  // namespace armove::toygen
