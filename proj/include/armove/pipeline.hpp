#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "armove/canonical.hpp"
#include "armove/common.hpp"
#include "armove/config.hpp"
#include "armove/corpus.hpp"
#include "armove/features.hpp"
#include "armove/geo.hpp"
#include "armove/layout.hpp"
#include "armove/llm.hpp"
#include "armove/metrics.hpp"
#include "armove/optimizer.hpp"
#include "armove/predictor.hpp"
#include "armove/profiler.hpp"
#include "armove/transfer.hpp"

namespace armove::pipeline {

using canonical::json;
using config::ExperimentConfig;

namespace fs = std::filesystem;

inline fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

/// Predecessor-artifact gate: each stage names the stage that produces
/// what it is missing.
inline fs::path require_artifact(const fs::path& run_dir, const char* name,
                                 const char* producing_stage) {
  fs::path p = run_dir / name;
  if (!fs::exists(p))
    throw Error(std::string(name) + " missing; run the " + producing_stage +
                " stage first");
  return p;
}

/// Pin dataset/backend paths to absolute form so the run directory's config
/// snapshot re-runs any stage without knowing where the original config
/// file lived.
inline ExperimentConfig resolve_paths(const ExperimentConfig& cfg,
                                      const fs::path& base_dir) {
  ExperimentConfig out = cfg;
  auto pin = [&](std::string& field) {
    if (!field.empty())
      field = fs::weakly_canonical(resolve(base_dir, field)).string();
  };
  pin(out.checkins);
  pin(out.social);
  pin(out.geo_fixture);
  pin(out.mock_rules);
  pin(out.fixtures);
  return out;
}

inline std::string transcripts_name(const std::string& stage) {
  return "transcripts." + stage + ".jsonl";
}

// ---------------------------------------------------------------------------
// backend + geocoder wiring
// ---------------------------------------------------------------------------

/// Live transports need httplib; the CLI supplies these factories so test
/// and library builds stay network-free. `override_backend` short-circuits
/// backend construction entirely, which lets tests instrument call counts.
struct LiveFactories {
  std::function<std::shared_ptr<llm::Backend>()> chat;
  std::function<std::shared_ptr<geo::Transport>()> geocode;
  std::shared_ptr<llm::Backend> override_backend;
};

inline std::shared_ptr<llm::Backend> make_backend(const ExperimentConfig& cfg,
                                                  const fs::path& base_dir,
                                                  const LiveFactories& live = {}) {
  if (live.override_backend) return live.override_backend;
  if (cfg.backend == "mock")
    return llm::MockBackend::from_file(resolve(base_dir, cfg.mock_rules));
  if (cfg.backend == "replay")
    return std::make_shared<llm::ReplayBackend>(resolve(base_dir, cfg.fixtures));
  if (cfg.backend == "record") {
    std::shared_ptr<llm::Backend> inner;
    if (!cfg.mock_rules.empty())
      inner = llm::MockBackend::from_file(resolve(base_dir, cfg.mock_rules));
    else if (live.chat)
      inner = live.chat();
    else
      throw Error("record backend needs mock_rules or a live backend");
    return std::make_shared<llm::RecordingBackend>(inner,
                                                   resolve(base_dir, cfg.fixtures));
  }
  if (cfg.backend == "live") {
    if (!live.chat) throw Error("live backend is only available through the CLI");
    return live.chat();
  }
  throw Error("unknown backend: " + cfg.backend);
}

inline std::unique_ptr<geo::ReverseGeocoder> make_geocoder(
    const ExperimentConfig& cfg, const fs::path& base_dir,
    const LiveFactories& live = {}) {
  geo::GeocoderConfig gcfg;
  gcfg.mode = cfg.geocoder;
  std::shared_ptr<geo::Transport> transport;
  if (cfg.geocoder == "live") {
    if (!live.geocode) throw Error("live geocoder is only available through the CLI");
    transport = live.geocode();
  }
  auto geocoder = std::make_unique<geo::ReverseGeocoder>(
      gcfg, std::make_shared<geo::GeoCache>(), transport);
  if (!cfg.geo_fixture.empty())
    geocoder->load_fixture(resolve(base_dir, cfg.geo_fixture));
  return geocoder;
}

// ---------------------------------------------------------------------------
// config -> module knobs
// ---------------------------------------------------------------------------

inline corpus::ColumnSchema schema_from_columns(const std::string& columns) {
  corpus::ColumnSchema schema;
  schema.user = schema.time = -1;
  auto tokens = split(columns, ',');
  for (int i = 0; i < static_cast<int>(tokens.size()); ++i) {
    std::string t = to_lower(trim(tokens[static_cast<std::size_t>(i)]));
    if (t == "user") schema.user = i;
    else if (t == "time") schema.time = i;
    else if (t == "location") schema.location = i;
    else if (t == "lat") schema.lat = i;
    else if (t == "lon") schema.lon = i;
    else if (t == "category") schema.category = i;
    else if (t == "-") continue;  // explicitly skipped column
    else throw Error("columns: unknown role '" + t + "'");
  }
  if (schema.user < 0 || schema.time < 0)
    throw Error("columns: user and time are required");
  return schema;
}

inline features::BuilderConfig builder_config(const ExperimentConfig& cfg) {
  features::BuilderConfig b;
  b.major_venue_n = cfg.major_venues;
  b.short_term_sessions = cfg.short_term_sessions;
  b.recent_stays = cfg.recent_stays;
  b.tz_offset_hours = cfg.tz_offset_hours;
  return b;
}

inline optimizer::WeightParams weight_params(const ExperimentConfig& cfg) {
  optimizer::WeightParams p;
  p.eta = cfg.eta;
  p.w_max = cfg.w_max;
  p.tau_high = cfg.tau_high;
  return p;
}

inline optimizer::OptimizeConfig optimize_config(const ExperimentConfig& cfg) {
  optimizer::OptimizeConfig o;
  o.objective.lambda = cfg.lambda;
  o.objective.validation_sample_count = cfg.validation_samples;
  o.iterations = cfg.iterations;
  o.k_max = cfg.k_max;
  o.probe_cap = cfg.probe_cap;
  o.seed = cfg.seed;
  o.model_id = cfg.model;

  if (cfg.fs_variant == "off") {
    o.selection_enabled = false;
    o.generate_features = false;
    o.use_high_weight = false;
    o.maintain_weights = false;
  } else if (cfg.fs_variant == "fs-ol") {
    o.generate_features = false;
    o.use_high_weight = false;
    o.maintain_weights = false;
  } else if (cfg.fs_variant == "fs-lnf") {
    o.generate_features = true;
    o.use_high_weight = false;
    o.maintain_weights = false;
  }  // fs-lnfw keeps the defaults: everything on

  if (cfg.generate_features == "on") o.generate_features = true;
  if (cfg.generate_features == "off") o.generate_features = false;
  return o;
}

inline predictor::PromptConfig prompt_config(const ExperimentConfig& cfg) {
  predictor::PromptConfig p;
  p.model_id = cfg.model;
  p.candidate_policy = cfg.candidate_policy;
  p.feature_budget = cfg.feature_budget;
  p.total_budget = cfg.total_budget;
  return p;
}

inline profiler::GroupConfig group_config(const ExperimentConfig& cfg) {
  profiler::GroupConfig g;
  g.alpha = cfg.alpha;
  g.min_group_size = cfg.min_group_size;
  g.stage = cfg.grouping;
  g.model_id = cfg.model;
  return g;
}

// ---------------------------------------------------------------------------
// feature engine: one render path shared by optimization and prediction
// ---------------------------------------------------------------------------

class FeatureEngine {
public:
  FeatureEngine(const corpus::Corpus& corpus, const features::Registry& registry,
                features::SocialGraph graph, geo::ReverseGeocoder* geocoder,
                features::BuilderConfig bcfg, int feature_budget)
      : corpus_(corpus),
        registry_(registry),
        graph_(std::move(graph)),
        geocoder_(geocoder),
        bcfg_(bcfg),
        feature_budget_(feature_budget) {}

  /// Per-user interest keywords (from grouping); empty before profiling.
  void set_keywords(std::map<std::string, std::vector<std::string>> keywords) {
    keywords_ = std::move(keywords);
  }

  const std::vector<std::string>& keywords_for(const std::string& user) const {
    static const std::vector<std::string> none;
    auto it = keywords_.find(user);
    return it == keywords_.end() ? none : it->second;
  }

  features::FeatureValue value_for(const std::string& id,
                                   const corpus::PredictionSample& sample,
                                   const std::string& group_label) const {
    if (id == profiler::kGroupLabelFeatureId)
      return profiler::group_label_value(group_label);
    if (!registry_.contains(id)) return transfer::unavailable_value(id);
    const auto& desc = registry_.at(id);
    if (desc.origin == "llm_generated")
      return features::compute_generated(desc, sample, bcfg_);

    auto pick = [&](const std::vector<features::FeatureValue>& pool) {
      for (const auto& v : pool)
        if (v.feature_id == id) return v;
      throw Error("builder did not produce feature " + id);
    };
    if (desc.pool == "trajectory")
      return pick(features::build_trajectory_features(sample, bcfg_));
    if (desc.pool == "spatial")
      return pick(features::build_spatial_features(sample, *geocoder_));
    if (desc.pool == "memory")
      return pick(features::build_memory_features(sample.history,
                                                  keywords_for(sample.user_id), bcfg_));
    if (desc.pool == "social")
      return pick(features::build_social_features(sample.user_id, graph_, corpus_));
    throw Error("no builder for pool " + desc.pool + " (feature " + id + ")");
  }

  features::RenderResult render(const corpus::PredictionSample& sample,
                                const optimizer::FeatureSet& set,
                                const optimizer::WeightMap& weights,
                                const std::string& group_label) const {
    // One builder pass per pool the set touches, then pick requested ids.
    std::vector<features::FeatureValue> values;
    std::map<std::string, std::vector<features::FeatureValue>> pools;
    for (const auto& id : set.selected) {
      if (id == profiler::kGroupLabelFeatureId) {
        values.push_back(profiler::group_label_value(group_label));
        continue;
      }
      if (!registry_.contains(id)) {
        values.push_back(transfer::unavailable_value(id));
        continue;
      }
      const auto& desc = registry_.at(id);
      if (desc.origin == "llm_generated") {
        values.push_back(features::compute_generated(desc, sample, bcfg_));
        continue;
      }
      auto& pool = pools[desc.pool];
      if (pool.empty()) {
        if (desc.pool == "trajectory")
          pool = features::build_trajectory_features(sample, bcfg_);
        else if (desc.pool == "spatial")
          pool = features::build_spatial_features(sample, *geocoder_);
        else if (desc.pool == "memory")
          pool = features::build_memory_features(sample.history,
                                                 keywords_for(sample.user_id), bcfg_);
        else if (desc.pool == "social")
          pool = features::build_social_features(sample.user_id, graph_, corpus_);
        else
          throw Error("no builder for pool " + desc.pool);
      }
      for (const auto& v : pool)
        if (v.feature_id == id) values.push_back(v);
    }
    return features::render_feature_block(values, weights, feature_budget_);
  }

  /// The four pools rendered for one user, for persona/interest prompts.
  /// Uses the user's last usable session as the vantage point.
  std::string user_profile_text(const std::string& user_id) const {
    auto it = corpus_.users.find(user_id);
    if (it == corpus_.users.end()) throw Error("unknown user: " + user_id);
    const corpus::Session* vantage = nullptr;
    for (const auto& s : it->second) {
      if (s.stays.size() < 2) continue;
      if (s.split == "train" || !vantage) vantage = &s;
    }
    if (!vantage) return "user: " + user_id + "\n(no usable sessions)\n";
    auto sample = corpus::make_sample(corpus_, user_id, vantage->session_id);

    std::vector<features::FeatureValue> values;
    for (auto& v : features::build_trajectory_features(sample, bcfg_))
      values.push_back(std::move(v));
    for (auto& v : features::build_spatial_features(sample, *geocoder_))
      values.push_back(std::move(v));
    for (auto& v : features::build_memory_features(sample.history, {}, bcfg_))
      values.push_back(std::move(v));
    for (auto& v : features::build_social_features(user_id, graph_, corpus_))
      values.push_back(std::move(v));
    auto render = features::render_feature_block(values, {}, feature_budget_);
    return "user: " + user_id + "\n" + render.text;
  }

  const features::Registry& registry() const { return registry_; }
  void set_registry(const features::Registry& r) { registry_ = r; }

private:
  const corpus::Corpus& corpus_;
  features::Registry registry_;
  features::SocialGraph graph_;
  geo::ReverseGeocoder* geocoder_;
  features::BuilderConfig bcfg_;
  int feature_budget_;
  std::map<std::string, std::vector<std::string>> keywords_;
};

inline std::string corpus_stats_text(const corpus::Corpus& c) {
  std::size_t sessions = 0, stays = 0;
  std::set<std::string> locations;
  for (const auto& [_, ss] : c.users) {
    sessions += ss.size();
    for (const auto& s : ss) {
      stays += s.stays.size();
      for (const auto& st : s.stays) locations.insert(st.location_id);
    }
  }
  std::string out;
  out += "city: " + c.city + "\n";
  out += "users: " + std::to_string(c.users.size()) + "\n";
  out += "sessions: " + std::to_string(sessions) + "\n";
  out += "stays: " + std::to_string(stays) + "\n";
  out += "distinct locations: " + std::to_string(locations.size()) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// stages
// ---------------------------------------------------------------------------

struct StageOutcome {
  std::vector<std::string> warnings;
};

inline StageOutcome stage_ingest(const ExperimentConfig& cfg, const fs::path& run_dir,
                                 const fs::path& base_dir) {
  StageOutcome out;
  if (cfg.checkins.empty()) throw Error("checkins: required");
  auto lines = read_lines(resolve(base_dir, cfg.checkins));
  auto schema = schema_from_columns(cfg.columns);

  std::optional<corpus::GridConfig> grid;
  if (cfg.grid_ref_lat && cfg.grid_ref_lon)
    grid = corpus::GridConfig{*cfg.grid_ref_lat, *cfg.grid_ref_lon, cfg.grid_cell_km};

  auto parsed = corpus::parse_checkins(lines, schema, grid);
  for (auto& w : parsed.warnings) out.warnings.push_back("ingest: " + w);

  auto policy = corpus::session_policy_from_string(cfg.session_policy);
  auto built =
      corpus::build_corpus(parsed.stays, cfg.city, policy, cfg.tz_offset_hours, grid);

  corpus::FilterStats stats;
  auto filtered = corpus::filter_corpus(built, &stats,
                                        static_cast<std::size_t>(cfg.min_stays),
                                        static_cast<std::size_t>(cfg.min_sessions));
  out.warnings.push_back("ingest: dropped " + std::to_string(stats.dropped_sessions) +
                         " short sessions and " + std::to_string(stats.dropped_users) +
                         " sparse users");

  corpus::temporal_split(filtered, corpus::split_ratios_from_string(cfg.split));
  corpus::save(filtered, run_dir / layout::kCorpus);
  return out;
}

inline StageOutcome stage_features(const ExperimentConfig& cfg, const fs::path& run_dir) {
  require_artifact(run_dir, layout::kCorpus, "ingest");
  auto registry = features::Registry::standard();
  canonical::write_json(run_dir / layout::kRegistry, registry.to_json());

  optimizer::FeatureWeights weights;
  weights.params = weight_params(cfg);
  weights.ensure_initialized(registry);
  canonical::write_json(run_dir / layout::kWeights, weights.to_json());
  return {};
}

/// Everything the optimize/predict stages share.
struct EngineBundle {
  corpus::Corpus corpus;
  std::unique_ptr<geo::ReverseGeocoder> geocoder;
  std::unique_ptr<FeatureEngine> engine;
};

inline EngineBundle load_engine(const ExperimentConfig& cfg, const fs::path& run_dir,
                                const fs::path& base_dir,
                                const LiveFactories& live = {}) {
  EngineBundle b;
  b.corpus = corpus::load(require_artifact(run_dir, layout::kCorpus, "ingest"));
  auto registry = features::Registry::from_json(
      canonical::read_json(require_artifact(run_dir, layout::kRegistry, "features")));
  features::SocialGraph graph;
  if (!cfg.social.empty()) graph = features::SocialGraph::load(resolve(base_dir, cfg.social));
  b.geocoder = make_geocoder(cfg, base_dir, live);
  b.engine = std::make_unique<FeatureEngine>(b.corpus, registry, std::move(graph),
                                             b.geocoder.get(), builder_config(cfg),
                                             cfg.feature_budget);

  // Group interests feed the memory pool once grouping has run.
  fs::path groups_path = run_dir / layout::kGroups;
  if (fs::exists(groups_path)) {
    std::map<std::string, std::vector<std::string>> keywords;
    for (const auto& g : profiler::load_groups(groups_path))
      for (const auto& u : g.members) keywords[u] = g.l2_tags;
    b.engine->set_keywords(std::move(keywords));
  }
  return b;
}

inline optimizer::PredictFn make_predict_fn(const FeatureEngine& engine,
                                            const predictor::PromptConfig& pcfg,
                                            llm::Backend& backend,
                                            const std::string& group_label,
                                            llm::TranscriptLog* log) {
  return [&engine, pcfg, &backend, group_label, log](
             const corpus::PredictionSample& sample, const optimizer::FeatureSet& set,
             const optimizer::WeightMap& weights) {
    auto render = engine.render(sample, set, weights, group_label);
    predictor::PromptInputs inputs;
    inputs.feature_text = render.text;
    inputs.group_label = group_label;
    if (pcfg.candidate_policy == "history")
      inputs.candidates = predictor::history_candidates(sample, pcfg.candidate_cap);
    auto request = predictor::assemble_prompt(sample, inputs, pcfg);
    return predictor::predict(sample, request, backend, log);
  };
}

inline StageOutcome stage_optimize(const ExperimentConfig& cfg, const fs::path& run_dir,
                                   const fs::path& base_dir, llm::Backend& backend,
                                   const LiveFactories& live = {}) {
  StageOutcome out;
  auto bundle = load_engine(cfg, run_dir, base_dir, live);
  auto& engine = *bundle.engine;
  auto weights = optimizer::FeatureWeights::from_json(
      canonical::read_json(require_artifact(run_dir, layout::kWeights, "features")));
  features::Registry registry = engine.registry();

  auto validation = corpus::samples_for_split(bundle.corpus, "valid");
  if (validation.empty())
    throw Error("no validation samples; check the split configuration");

  auto ocfg = optimize_config(cfg);
  auto pcfg = prompt_config(cfg);
  const std::string stats = corpus_stats_text(bundle.corpus);
  llm::TranscriptLog log;

  // City level first; group refinement builds on it.
  auto city_predict = make_predict_fn(engine, pcfg, backend, "", &log);
  auto city_artifact =
      optimizer::optimize(cfg.city, validation, registry, weights.global,
                          weights.params, backend, ocfg, city_predict, stats,
                          std::nullopt, &log);
  engine.set_registry(registry);

  std::vector<profiler::UserGroup> groups;
  json group_artifacts = json::array();
  if (cfg.grouping != "off") {
    auto gcfg = group_config(cfg);
    std::vector<std::string> user_ids;
    for (const auto& [uid, _] : bundle.corpus.users) user_ids.push_back(uid);

    auto profiles = profiler::profile_users(
        user_ids, [&](const std::string& uid) { return engine.user_profile_text(uid); },
        backend, gcfg, &log);
    groups = profiler::build_groups(profiles, gcfg.stage);

    std::set<std::string> all_users(user_ids.begin(), user_ids.end());
    profiler::check_partition(groups, all_users);
    if (gcfg.stage == "l1l2m") {
      groups = profiler::merge_groups(groups, gcfg.min_group_size, &backend,
                                      gcfg.model_id, &log);
      profiler::check_partition(groups, all_users);
    }
    profiler::save_groups(run_dir / layout::kGroups, groups);

    std::map<std::string, std::vector<std::string>> keywords;
    for (const auto& g : groups)
      for (const auto& u : g.members) keywords[u] = g.l2_tags;
    engine.set_keywords(std::move(keywords));

    for (const auto& group : groups) {
      std::vector<corpus::PredictionSample> group_validation;
      for (const auto& s : validation)
        if (group.members.count(s.user_id)) group_validation.push_back(s);

      auto group_predict = make_predict_fn(engine, pcfg, backend, group.l1_label, &log);
      auto outcome = profiler::optimize_group(
          group, group_validation, registry, weights, backend, ocfg, gcfg,
          group_predict, stats, bundle.corpus.users.size(), &city_artifact.best, &log);
      engine.set_registry(registry);
      for (auto& w : outcome.warnings) out.warnings.push_back("optimize: " + w);
      group_artifacts.push_back(outcome.artifact.to_json());
    }
    city_artifact.groups_ref = layout::kGroups;
  }

  canonical::write_json(run_dir / layout::kRegistry, registry.to_json());
  canonical::write_json(run_dir / layout::kWeights, weights.to_json());
  city_artifact.save(run_dir / layout::kOptimization);
  if (cfg.grouping != "off")
    canonical::write_json(run_dir / "group_artifacts.json", group_artifacts);
  log.save(run_dir / transcripts_name("optimize"));
  return out;
}

inline StageOutcome stage_predict(const ExperimentConfig& cfg, const fs::path& run_dir,
                                  const fs::path& base_dir, llm::Backend& backend,
                                  const LiveFactories& live = {}) {
  StageOutcome out;
  auto bundle = load_engine(cfg, run_dir, base_dir, live);
  auto& engine = *bundle.engine;
  auto city_artifact = optimizer::OptimizationArtifact::load(
      require_artifact(run_dir, layout::kOptimization, "optimize"));
  auto weights = optimizer::FeatureWeights::from_json(
      canonical::read_json(require_artifact(run_dir, layout::kWeights, "features")));

  std::vector<profiler::UserGroup> groups;
  fs::path groups_path = run_dir / layout::kGroups;
  if (fs::exists(groups_path)) groups = profiler::load_groups(groups_path);

  // Group-scoped feature sets and weights, when group optimization ran.
  std::map<std::string, optimizer::OptimizationArtifact> by_group;
  fs::path ga_path = run_dir / "group_artifacts.json";
  if (fs::exists(ga_path))
    for (const auto& j : canonical::read_json(ga_path)) {
      auto a = optimizer::OptimizationArtifact::from_json(j);
      by_group.emplace(a.scope, std::move(a));
    }

  auto test = corpus::sample_test_set(bundle.corpus, cfg.test_samples, cfg.seed);
  if (test.warning) out.warnings.push_back("predict: " + *test.warning);

  auto pcfg = prompt_config(cfg);
  llm::TranscriptLog log;

  auto request_for = [&](const corpus::PredictionSample& sample) {
    std::string label;
    const optimizer::OptimizationArtifact* scoped = &city_artifact;
    const optimizer::WeightMap* wmap = &weights.global;
    for (const auto& g : groups) {
      if (!g.members.count(sample.user_id)) continue;
      label = g.l1_label;
      auto it = by_group.find(g.group_id);
      if (it != by_group.end()) {
        scoped = &it->second;
        if (!it->second.final_weights.empty()) wmap = &it->second.final_weights;
      }
      break;
    }
    auto render = engine.render(sample, scoped->best, *wmap, label);
    predictor::PromptInputs inputs;
    inputs.feature_text = render.text;
    inputs.group_label = label;
    if (pcfg.candidate_policy == "history")
      inputs.candidates = predictor::history_candidates(sample, pcfg.candidate_cap);
    return predictor::assemble_prompt(sample, inputs, pcfg);
  };

  auto predictions = predictor::run_batch(test.samples, request_for, backend, &log);
  predictor::save_predictions(run_dir / layout::kPredictions, predictions);
  log.save(run_dir / transcripts_name("predict"));
  return out;
}

inline StageOutcome stage_eval(const ExperimentConfig&, const fs::path& run_dir) {
  auto predictions = predictor::load_predictions(
      require_artifact(run_dir, layout::kPredictions, "predict"));
  auto report = metrics::compute(predictor::to_scored(predictions));
  canonical::write_json(run_dir / layout::kMetrics, report.to_json());
  return {};
}

inline StageOutcome stage_report(const ExperimentConfig& cfg, const fs::path& run_dir) {
  auto report = metrics::MetricsReport::from_json(
      canonical::read_json(require_artifact(run_dir, layout::kMetrics, "eval")));
  std::string text = metrics::render_report(cfg.city + " (" + cfg.model + ")",
                                            cfg.city, report);
  write_file_atomic(run_dir / layout::kReport, text);
  return {};
}

// ---------------------------------------------------------------------------
// full runs
// ---------------------------------------------------------------------------

struct RunSummary {
  fs::path run_dir;
  std::vector<std::string> warnings;
};

inline void write_warnings(const fs::path& run_dir,
                           const std::vector<std::string>& warnings) {
  std::string text;
  for (const auto& w : warnings) text += w + "\n";
  write_file_atomic(run_dir / layout::kWarnings, text);
}

inline void validate_or_throw(const ExperimentConfig& cfg, const fs::path& base_dir) {
  auto errors = config::validate(cfg, base_dir);
  if (!errors.empty()) throw Error("invalid config:\n  " + join(errors, "\n  "));
}

inline RunSummary run(const ExperimentConfig& raw_cfg, const fs::path& run_dir,
                      const fs::path& base_dir, const LiveFactories& live = {}) {
  validate_or_throw(raw_cfg, base_dir);
  ExperimentConfig cfg = resolve_paths(raw_cfg, base_dir);
  fs::create_directories(run_dir);
  write_file_atomic(run_dir / layout::kConfig, config::snapshot(cfg));

  RunSummary summary;
  summary.run_dir = run_dir;
  auto absorb = [&](StageOutcome outcome) {
    for (auto& w : outcome.warnings) summary.warnings.push_back(std::move(w));
  };

  absorb(stage_ingest(cfg, run_dir, base_dir));
  absorb(stage_features(cfg, run_dir));
  auto backend = make_backend(cfg, base_dir, live);
  absorb(stage_optimize(cfg, run_dir, base_dir, *backend, live));
  absorb(stage_predict(cfg, run_dir, base_dir, *backend, live));
  absorb(stage_eval(cfg, run_dir));
  absorb(stage_report(cfg, run_dir));
  write_warnings(run_dir, summary.warnings);
  return summary;
}

/// Iteration ablation: one run directory per setting (ft3/ft5/ft10 for
/// 3,5,10).
inline std::vector<fs::path> run_iteration_sweep(const ExperimentConfig& cfg,
                                                 const fs::path& sweep_dir,
                                                 const fs::path& base_dir,
                                                 const std::vector<int>& iteration_counts,
                                                 const LiveFactories& live = {}) {
  std::vector<fs::path> dirs;
  for (int n : iteration_counts) {
    ExperimentConfig c = cfg;
    c.iterations = n;
    fs::path dir = sweep_dir / ("ft" + std::to_string(n));
    run(c, dir, base_dir, live);
    dirs.push_back(dir);
  }
  return dirs;
}

/// Fused-corpus run: ingest each source city, draw an even share of users
/// from each, and run the normal pipeline on the combined corpus. The
/// resulting artifact can then be applied to a further city directly.
inline RunSummary run_city_fusion(const std::vector<ExperimentConfig>& source_cfgs,
                                  const fs::path& run_dir, const fs::path& base_dir,
                                  int total_users, const LiveFactories& live = {}) {
  if (source_cfgs.size() < 2) throw Error("fusion needs at least two source configs");
  RunSummary summary;
  summary.run_dir = run_dir;
  fs::create_directories(run_dir);

  std::vector<corpus::Corpus> sources;
  for (const auto& raw : source_cfgs) {
    validate_or_throw(raw, base_dir);
    ExperimentConfig cfg = resolve_paths(raw, base_dir);
    fs::path source_dir = run_dir / "sources" / cfg.city;
    fs::create_directories(source_dir);
    auto outcome = stage_ingest(cfg, source_dir, base_dir);
    for (auto& w : outcome.warnings)
      summary.warnings.push_back(cfg.city + ": " + std::move(w));
    sources.push_back(corpus::load(source_dir / layout::kCorpus));
  }

  std::vector<const corpus::Corpus*> refs;
  for (const auto& c : sources) refs.push_back(&c);
  ExperimentConfig fused_cfg = resolve_paths(source_cfgs.front(), base_dir);
  auto fusion = transfer::fuse_cities(refs, total_users, fused_cfg.seed);
  for (auto& w : fusion.warnings) summary.warnings.push_back("fuse: " + std::move(w));

  // Per-city social graphs and check-in files do not describe the fused
  // id space, so the fused run drops them; the geo fixture still applies
  // because coordinates travel with the stays.
  fused_cfg.city = fusion.fused.city;
  fused_cfg.checkins.clear();
  fused_cfg.social.clear();

  write_file_atomic(run_dir / layout::kConfig, config::snapshot(fused_cfg));
  corpus::save(fusion.fused, run_dir / layout::kCorpus);

  json meta;
  meta["mode"] = "fuse";
  json drawn;
  for (const auto& [city, n] : fusion.drawn_per_city) drawn[city] = n;
  meta["drawn_per_city"] = drawn;
  meta["total_users"] = total_users;
  canonical::write_json(run_dir / "transfer.json", meta);

  auto absorb = [&](StageOutcome outcome) {
    for (auto& w : outcome.warnings) summary.warnings.push_back(std::move(w));
  };
  absorb(stage_features(fused_cfg, run_dir));
  auto backend = make_backend(fused_cfg, base_dir, live);
  absorb(stage_optimize(fused_cfg, run_dir, base_dir, *backend, live));
  absorb(stage_predict(fused_cfg, run_dir, base_dir, *backend, live));
  absorb(stage_eval(fused_cfg, run_dir));
  absorb(stage_report(fused_cfg, run_dir));
  write_warnings(run_dir, summary.warnings);
  return summary;
}

// ---------------------------------------------------------------------------
// transfer runs
// ---------------------------------------------------------------------------

namespace detail {

inline void write_artifact_stand_in(const fs::path& run_dir,
                                    const transfer::TransferArtifact& artifact,
                                    const std::string& scope, json extra_metadata) {
  optimizer::OptimizationArtifact opt;
  opt.scope = scope;
  opt.best = artifact.feature_set;
  opt.final_weights = artifact.weights.global;
  opt.metadata = artifact.metadata;
  opt.metadata.erase("config");
  for (auto& [k, v] : extra_metadata.items()) opt.metadata[k] = v;
  opt.save(run_dir / layout::kOptimization);
}

inline std::set<std::string> artifact_user_set(const transfer::TransferArtifact& a) {
  std::set<std::string> users;
  for (const auto& g : a.groups) users.insert(g.members.begin(), g.members.end());
  return users;
}

}  // namespace detail

/// Same-city user swap: replace_n users are re-profiled and re-optimized
/// starting from the artifact's weights; everyone else keeps their source
/// assignments. replace_n = 0 reproduces the artifact exactly.
inline RunSummary run_user_transfer(const transfer::TransferArtifact& artifact,
                                    const ExperimentConfig& raw_cfg,
                                    const fs::path& run_dir, const fs::path& base_dir,
                                    int replace_n, const LiveFactories& live = {}) {
  validate_or_throw(raw_cfg, base_dir);
  ExperimentConfig cfg = resolve_paths(raw_cfg, base_dir);
  fs::create_directories(run_dir);
  write_file_atomic(run_dir / layout::kConfig, config::snapshot(cfg));

  RunSummary summary;
  summary.run_dir = run_dir;
  auto absorb = [&](StageOutcome outcome) {
    for (auto& w : outcome.warnings) summary.warnings.push_back(std::move(w));
  };

  absorb(stage_ingest(cfg, run_dir, base_dir));
  auto full_corpus = corpus::load(run_dir / layout::kCorpus);

  auto artifact_users = detail::artifact_user_set(artifact);
  if (artifact_users.empty() && replace_n > 0)
    throw Error("artifact carries no user assignments; cannot replace users");

  std::vector<std::string> active;
  transfer::ReplacementPlan plan;
  if (artifact_users.empty()) {
    for (const auto& [uid, _] : full_corpus.users) active.push_back(uid);
  } else {
    plan = transfer::plan_user_replacement(full_corpus, artifact_users, replace_n,
                                           cfg.seed);
    active = plan.kept;
    active.insert(active.end(), plan.added.begin(), plan.added.end());
    std::sort(active.begin(), active.end());
  }
  auto working = corpus::restrict_users(full_corpus, active);
  if (working.users.empty()) throw Error("no users left after replacement planning");
  corpus::save(working, run_dir / layout::kCorpus);

  // The artifact's knowledge is the starting point, recorded for audit.
  auto registry = artifact.registry();
  canonical::write_json(run_dir / layout::kRegistry, registry.to_json());
  auto weights = artifact.weights;
  canonical::write_json(run_dir / "initial_weights.json", weights.to_json());
  canonical::write_json(run_dir / layout::kWeights, weights.to_json());

  // Kept users keep their groups; replaced members drop out.
  std::vector<profiler::UserGroup> groups;
  std::set<std::string> removed(plan.removed.begin(), plan.removed.end());
  for (const auto& g : artifact.groups) {
    profiler::UserGroup kept = g;
    for (const auto& u : removed) kept.members.erase(u);
    if (!kept.members.empty()) groups.push_back(std::move(kept));
  }

  json transfer_meta;
  transfer_meta["mode"] = "user";
  transfer_meta["replace_n"] = replace_n;
  transfer_meta["added"] = plan.added;
  transfer_meta["removed"] = plan.removed;

  if (replace_n == 0) {
    if (!groups.empty()) profiler::save_groups(run_dir / layout::kGroups, groups);
    detail::write_artifact_stand_in(run_dir, artifact, cfg.city, transfer_meta);
  } else {
    auto backend = make_backend(cfg, base_dir, live);
    auto bundle = load_engine(cfg, run_dir, base_dir, live);
    auto& engine = *bundle.engine;
    auto gcfg = group_config(cfg);
    llm::TranscriptLog log;

    // New users get profiled and folded into the partition.
    auto profiles = profiler::profile_users(
        plan.added, [&](const std::string& uid) { return engine.user_profile_text(uid); },
        *backend, gcfg, &log);
    auto new_groups = profiler::build_groups(profiles, gcfg.stage);
    std::set<std::string> changed;
    for (auto& ng : new_groups) {
      bool matched = false;
      for (auto& g : groups) {
        if (g.group_id == ng.group_id) {
          g.members.insert(ng.members.begin(), ng.members.end());
          changed.insert(g.group_id);
          matched = true;
          break;
        }
      }
      if (!matched) {
        changed.insert(ng.group_id);
        groups.push_back(std::move(ng));
      }
    }

    // Undersized brand-new groups fold into their most similar peers;
    // existing assignments never dissolve.
    bool merged_any = true;
    while (merged_any) {
      merged_any = false;
      for (std::size_t i = 0; i < groups.size(); ++i) {
        const auto& g = groups[i];
        bool brand_new = !artifact.groups.empty() &&
                         std::none_of(artifact.groups.begin(), artifact.groups.end(),
                                      [&](const profiler::UserGroup& ag) {
                                        return ag.group_id == g.group_id;
                                      });
        if (!brand_new ||
            static_cast<int>(g.members.size()) >= gcfg.min_group_size ||
            groups.size() == 1)
          continue;
        auto labels = profiler::label_set(g);
        int target = -1;
        double best = -1;
        for (std::size_t t = 0; t < groups.size(); ++t) {
          if (t == i) continue;
          double sim = profiler::jaccard(labels, profiler::label_set(groups[t]));
          if (sim > best ||
              (sim == best && target >= 0 &&
               groups[t].members.size() > groups[static_cast<std::size_t>(target)]
                                              .members.size())) {
            best = sim;
            target = static_cast<int>(t);
          }
        }
        if (target < 0) continue;
        auto& tg = groups[static_cast<std::size_t>(target)];
        tg.members.insert(g.members.begin(), g.members.end());
        tg.merged_from.push_back(g.group_id);
        changed.erase(g.group_id);
        changed.insert(tg.group_id);
        groups.erase(groups.begin() + static_cast<std::ptrdiff_t>(i));
        merged_any = true;
        break;
      }
    }

    std::set<std::string> active_set(active.begin(), active.end());
    profiler::check_partition(groups, active_set);
    std::sort(groups.begin(), groups.end(),
              [](const profiler::UserGroup& a, const profiler::UserGroup& b) {
                return a.group_id < b.group_id;
              });
    profiler::save_groups(run_dir / layout::kGroups, groups);

    std::map<std::string, std::vector<std::string>> keywords;
    for (const auto& g : groups)
      for (const auto& u : g.members) keywords[u] = g.l2_tags;
    engine.set_keywords(std::move(keywords));

    // Re-optimize only the groups that gained members.
    auto validation = corpus::samples_for_split(working, "valid");
    auto ocfg = optimize_config(cfg);
    auto pcfg = prompt_config(cfg);
    const std::string stats = corpus_stats_text(working);
    for (const auto& group : groups) {
      if (!changed.count(group.group_id)) continue;
      std::vector<corpus::PredictionSample> group_validation;
      for (const auto& s : validation)
        if (group.members.count(s.user_id)) group_validation.push_back(s);
      auto group_predict = make_predict_fn(engine, pcfg, *backend, group.l1_label, &log);
      auto outcome = profiler::optimize_group(
          group, group_validation, registry, weights, *backend, ocfg, gcfg,
          group_predict, stats, working.users.size(), &artifact.feature_set, &log);
      engine.set_registry(registry);
      for (auto& w : outcome.warnings) summary.warnings.push_back("transfer: " + w);
    }
    canonical::write_json(run_dir / layout::kRegistry, registry.to_json());
    canonical::write_json(run_dir / layout::kWeights, weights.to_json());
    detail::write_artifact_stand_in(run_dir, artifact, cfg.city, transfer_meta);
    log.save(run_dir / transcripts_name("transfer"));
  }

  canonical::write_json(run_dir / "transfer.json", transfer_meta);
  auto backend = make_backend(cfg, base_dir, live);
  absorb(stage_predict(cfg, run_dir, base_dir, *backend, live));
  absorb(stage_eval(cfg, run_dir));
  absorb(stage_report(cfg, run_dir));
  write_warnings(run_dir, summary.warnings);
  return summary;
}

/// Weights and feature set applied to another city's data, no re-optimization.
inline RunSummary run_direct_city_transfer(const transfer::TransferArtifact& artifact,
                                           const ExperimentConfig& raw_cfg,
                                           const fs::path& run_dir,
                                           const fs::path& base_dir,
                                           const LiveFactories& live = {}) {
  validate_or_throw(raw_cfg, base_dir);
  ExperimentConfig target_cfg = resolve_paths(raw_cfg, base_dir);
  fs::create_directories(run_dir);
  write_file_atomic(run_dir / layout::kConfig, config::snapshot(target_cfg));

  RunSummary summary;
  summary.run_dir = run_dir;
  auto absorb = [&](StageOutcome outcome) {
    for (auto& w : outcome.warnings) summary.warnings.push_back(std::move(w));
  };

  absorb(stage_ingest(target_cfg, run_dir, base_dir));
  canonical::write_json(run_dir / layout::kRegistry, artifact.descriptors);
  canonical::write_json(run_dir / layout::kWeights, artifact.weights.to_json());

  json meta;
  meta["mode"] = "city";
  meta["source"] = join(artifact.source_cities, "+");
  detail::write_artifact_stand_in(run_dir, artifact, target_cfg.city, meta);
  canonical::write_json(run_dir / "transfer.json", meta);

  auto backend = make_backend(target_cfg, base_dir, live);
  absorb(stage_predict(target_cfg, run_dir, base_dir, *backend, live));
  absorb(stage_eval(target_cfg, run_dir));
  absorb(stage_report(target_cfg, run_dir));
  write_warnings(run_dir, summary.warnings);
  return summary;
}

/// A small model inherits the artifact's groups, feature set, and weights;
/// it only ever predicts. No optimization-phase backend calls happen.
inline RunSummary run_model_transfer(const transfer::TransferArtifact& artifact,
                                     const ExperimentConfig& raw_cfg,
                                     const std::string& student_model,
                                     const fs::path& run_dir, const fs::path& base_dir,
                                     const LiveFactories& live = {}) {
  ExperimentConfig student_cfg = resolve_paths(raw_cfg, base_dir);
  student_cfg.model = student_model;
  validate_or_throw(student_cfg, base_dir);
  fs::create_directories(run_dir);
  write_file_atomic(run_dir / layout::kConfig, config::snapshot(student_cfg));

  RunSummary summary;
  summary.run_dir = run_dir;
  auto absorb = [&](StageOutcome outcome) {
    for (auto& w : outcome.warnings) summary.warnings.push_back(std::move(w));
  };

  absorb(stage_ingest(student_cfg, run_dir, base_dir));
  canonical::write_json(run_dir / layout::kRegistry, artifact.descriptors);
  canonical::write_json(run_dir / layout::kWeights, artifact.weights.to_json());
  if (!artifact.groups.empty())
    profiler::save_groups(run_dir / layout::kGroups, artifact.groups);

  json meta;
  meta["mode"] = "model";
  meta["student"] = student_model;
  meta["teacher"] = artifact.model_id;
  detail::write_artifact_stand_in(run_dir, artifact, student_cfg.city, meta);
  canonical::write_json(run_dir / "transfer.json", meta);

  auto backend = make_backend(student_cfg, base_dir, live);
  absorb(stage_predict(student_cfg, run_dir, base_dir, *backend, live));
  absorb(stage_eval(student_cfg, run_dir));
  absorb(stage_report(student_cfg, run_dir));
  write_warnings(run_dir, summary.warnings);
  return summary;
}

}  // namespace armove::pipeline
