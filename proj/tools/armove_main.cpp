// Command-line front end: configuration loading, stage dispatch, and the
// transfer/sweep harnesses. This is the only binary that links the live
// HTTP transports.

#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "armove/armove.hpp"
#include "armove/net.hpp"
#include "armove/toygen.hpp"

namespace fs = std::filesystem;
using armove::Error;
using armove::config::ExperimentConfig;

namespace {

struct ConfigSource {
  std::string config_path;
  std::vector<std::string> overrides;  // key=value, applied in order
};

void add_config_opts(CLI::App* cmd, ConfigSource& src, bool required) {
  auto* opt = cmd->add_option("--config,-c", src.config_path,
                              "config file (key = value lines)");
  if (required) opt->required();
  cmd->add_option("--set", src.overrides,
                  "override a config key, e.g. --set seed=9 (repeatable)");
}

struct LoadedConfig {
  ExperimentConfig config;
  fs::path base_dir;
};

void apply_overrides(ExperimentConfig& cfg, const std::vector<std::string>& overrides) {
  std::vector<std::string> errors;
  for (const auto& kv : overrides) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) {
      errors.push_back("--set " + kv + ": expected key=value");
      continue;
    }
    std::string err = armove::config::set_field(cfg, armove::trim(kv.substr(0, eq)),
                                                armove::trim(kv.substr(eq + 1)));
    if (!err.empty()) errors.push_back("--set " + kv + ": " + err);
  }
  if (!errors.empty()) throw Error("invalid overrides:\n  " + armove::join(errors, "\n  "));
}

LoadedConfig load_from_file(const ConfigSource& src) {
  auto outcome = armove::config::load_config(src.config_path);
  if (!outcome.errors.empty())
    throw Error("config errors in " + src.config_path + ":\n  " +
                armove::join(outcome.errors, "\n  "));
  apply_overrides(outcome.config, src.overrides);
  LoadedConfig out;
  out.config = outcome.config;
  fs::path parent = fs::path(src.config_path).parent_path();
  out.base_dir = parent.empty() ? fs::current_path() : fs::absolute(parent);
  return out;
}

/// Stage subcommands take their config from --config (initializing the run
/// directory) or from the run directory's own snapshot.
LoadedConfig load_for_stage(const fs::path& run_dir, const ConfigSource& src) {
  if (!src.config_path.empty()) {
    auto loaded = load_from_file(src);
    armove::pipeline::validate_or_throw(loaded.config, loaded.base_dir);
    loaded.config = armove::pipeline::resolve_paths(loaded.config, loaded.base_dir);
    fs::create_directories(run_dir);
    armove::write_file_atomic(run_dir / armove::layout::kConfig,
                              armove::config::snapshot(loaded.config));
    return loaded;
  }
  fs::path snapshot = run_dir / armove::layout::kConfig;
  if (!fs::exists(snapshot))
    throw Error(std::string(armove::layout::kConfig) +
                " missing; pass --config to initialize the run directory");
  auto outcome = armove::config::load_config(snapshot);
  if (!outcome.errors.empty())
    throw Error("config errors in " + snapshot.string() + ":\n  " +
                armove::join(outcome.errors, "\n  "));
  apply_overrides(outcome.config, src.overrides);
  return {outcome.config, run_dir};
}

armove::pipeline::LiveFactories live_factories(const ExperimentConfig& cfg) {
  armove::pipeline::LiveFactories f;
  f.chat = []() { return armove::net::make_live_backend(); };
  std::string geo_base = cfg.geo_base_url;
  f.geocode = [geo_base]() {
    return std::make_shared<armove::net::HttplibGeoTransport>(geo_base);
  };
  return f;
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
}

void append_warnings(const fs::path& run_dir, const std::vector<std::string>& warnings) {
  if (warnings.empty()) return;
  fs::path path = run_dir / armove::layout::kWarnings;
  std::string text;
  if (fs::exists(path)) text = armove::read_file(path);
  for (const auto& w : warnings) text += w + "\n";
  armove::write_file_atomic(path, text);
}

void print_metrics(const fs::path& run_dir) {
  fs::path path = run_dir / armove::layout::kMetrics;
  if (!fs::exists(path)) return;
  auto report =
      armove::metrics::MetricsReport::from_json(armove::canonical::read_json(path));
  std::printf("acc@1  %.4f\nacc@5  %.4f\nndcg@5 %.4f\nsamples %zu (%zu parse failures)\n",
              report.acc1, report.acc5, report.ndcg5, report.n_samples,
              report.n_parse_failures);
}

void run_stage(const std::string& stage, const fs::path& run_dir,
               const ConfigSource& src) {
  auto loaded = load_for_stage(run_dir, src);
  const auto& cfg = loaded.config;
  auto live = live_factories(cfg);
  armove::pipeline::StageOutcome outcome;
  if (stage == "ingest") {
    outcome = armove::pipeline::stage_ingest(cfg, run_dir, loaded.base_dir);
  } else if (stage == "features") {
    outcome = armove::pipeline::stage_features(cfg, run_dir);
  } else if (stage == "optimize") {
    auto backend = armove::pipeline::make_backend(cfg, loaded.base_dir, live);
    outcome = armove::pipeline::stage_optimize(cfg, run_dir, loaded.base_dir, *backend,
                                               live);
  } else if (stage == "predict") {
    auto backend = armove::pipeline::make_backend(cfg, loaded.base_dir, live);
    outcome = armove::pipeline::stage_predict(cfg, run_dir, loaded.base_dir, *backend,
                                              live);
  } else if (stage == "eval") {
    outcome = armove::pipeline::stage_eval(cfg, run_dir);
  } else if (stage == "report") {
    outcome = armove::pipeline::stage_report(cfg, run_dir);
    std::printf("%s", armove::read_file(run_dir / armove::layout::kReport).c_str());
  } else {
    throw Error("unknown stage: " + stage);
  }
  print_warnings(outcome.warnings);
  append_warnings(run_dir, outcome.warnings);
  std::printf("%s stage complete in %s\n", stage.c_str(), run_dir.string().c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"agentic next-location prediction pipeline"};
  app.require_subcommand(1);

  // ---- run ----
  ConfigSource run_src;
  std::string run_out;
  auto* run_cmd = app.add_subcommand("run", "execute every stage into a run directory");
  add_config_opts(run_cmd, run_src, true);
  run_cmd->add_option("--out,-o", run_out, "run directory")->required();
  run_cmd->callback([&]() {
    auto loaded = load_from_file(run_src);
    auto summary = armove::pipeline::run(loaded.config, run_out, loaded.base_dir,
                                         live_factories(loaded.config));
    print_warnings(summary.warnings);
    std::printf("run complete: %s\n", summary.run_dir.string().c_str());
    print_metrics(summary.run_dir);
  });

  // ---- stage subcommands ----
  struct StageCmd {
    std::string name;
    std::string help;
  };
  const std::vector<StageCmd> stages = {
      {"ingest", "parse check-ins, sessionize, filter, split"},
      {"features", "write the standard feature registry and initial weights"},
      {"optimize", "run feature optimization (and grouping) on the validation split"},
      {"predict", "rank next locations for the sampled test set"},
      {"eval", "score predictions into metrics"},
      {"report", "render the metrics report with published reference rows"},
  };
  std::vector<std::unique_ptr<ConfigSource>> stage_srcs;
  std::vector<std::unique_ptr<std::string>> stage_outs;
  for (const auto& st : stages) {
    auto* cmd = app.add_subcommand(st.name, st.help);
    stage_srcs.push_back(std::make_unique<ConfigSource>());
    stage_outs.push_back(std::make_unique<std::string>());
    ConfigSource* src = stage_srcs.back().get();
    std::string* out = stage_outs.back().get();
    add_config_opts(cmd, *src, false);
    cmd->add_option("--run,-r", *out, "run directory")->required();
    std::string name = st.name;
    cmd->callback([name, src, out]() { run_stage(name, *out, *src); });
  }

  // ---- sweep ----
  ConfigSource sweep_src;
  std::string sweep_out;
  std::vector<int> sweep_iters = {3, 5, 10};
  auto* sweep_cmd =
      app.add_subcommand("sweep", "iteration ablation: one run directory per count");
  add_config_opts(sweep_cmd, sweep_src, true);
  sweep_cmd->add_option("--out,-o", sweep_out, "parent directory")->required();
  sweep_cmd->add_option("--iterations", sweep_iters,
                        "iteration counts (default 3 5 10)");
  sweep_cmd->callback([&]() {
    auto loaded = load_from_file(sweep_src);
    auto dirs = armove::pipeline::run_iteration_sweep(
        loaded.config, sweep_out, loaded.base_dir, sweep_iters,
        live_factories(loaded.config));
    for (const auto& d : dirs) std::printf("swept: %s\n", d.string().c_str());
  });

  // ---- transfer ----
  auto* transfer_cmd =
      app.add_subcommand("transfer", "move learned artifacts across users, cities, models");
  transfer_cmd->require_subcommand(1);

  std::string exp_run, exp_out;
  auto* exp_cmd = transfer_cmd->add_subcommand(
      "export", "bundle a finished run into a portable artifact");
  exp_cmd->add_option("--run,-r", exp_run, "source run directory")->required();
  exp_cmd->add_option("--out,-o", exp_out, "artifact file")->required();
  exp_cmd->callback([&]() {
    auto artifact = armove::transfer::export_artifact(exp_run);
    artifact.save(exp_out);
    std::printf("exported %s\n", exp_out.c_str());
  });

  ConfigSource user_src;
  std::string user_artifact, user_out;
  int user_replace_n = 0;
  auto* user_cmd = transfer_cmd->add_subcommand(
      "user", "swap users within the artifact's city and refresh their groups");
  user_cmd->add_option("--artifact,-a", user_artifact, "artifact file")->required();
  add_config_opts(user_cmd, user_src, true);
  user_cmd->add_option("--out,-o", user_out, "run directory")->required();
  user_cmd->add_option("--replace-n", user_replace_n, "users to swap (default 0)");
  user_cmd->callback([&]() {
    auto artifact = armove::transfer::TransferArtifact::load(user_artifact);
    auto loaded = load_from_file(user_src);
    auto summary = armove::pipeline::run_user_transfer(
        artifact, loaded.config, user_out, loaded.base_dir, user_replace_n,
        live_factories(loaded.config));
    print_warnings(summary.warnings);
    std::printf("user transfer complete: %s\n", summary.run_dir.string().c_str());
    print_metrics(summary.run_dir);
  });

  ConfigSource city_src;
  std::string city_artifact, city_out, city_target;
  auto* city_cmd = transfer_cmd->add_subcommand(
      "city", "apply the artifact to another city without re-optimizing");
  city_cmd->add_option("--artifact,-a", city_artifact, "artifact file")->required();
  add_config_opts(city_cmd, city_src, true);
  city_cmd->add_option("--target-city", city_target,
                       "override the target city label from the config");
  city_cmd->add_option("--out,-o", city_out, "run directory")->required();
  city_cmd->callback([&]() {
    auto artifact = armove::transfer::TransferArtifact::load(city_artifact);
    auto loaded = load_from_file(city_src);
    if (!city_target.empty()) loaded.config.city = city_target;
    auto summary = armove::pipeline::run_direct_city_transfer(
        artifact, loaded.config, city_out, loaded.base_dir,
        live_factories(loaded.config));
    print_warnings(summary.warnings);
    std::printf("city transfer complete: %s\n", summary.run_dir.string().c_str());
    print_metrics(summary.run_dir);
  });

  std::vector<std::string> fuse_configs;
  std::vector<std::string> fuse_sets;
  std::string fuse_out;
  int fuse_total = 0;
  auto* fuse_cmd = transfer_cmd->add_subcommand(
      "fuse", "pool users from several cities and optimize on the fused corpus");
  fuse_cmd->add_option("--config,-c", fuse_configs, "source city config (repeat)")
      ->required()
      ->expected(-2);
  fuse_cmd->add_option("--set", fuse_sets, "override a key in every source config");
  fuse_cmd->add_option("--total-users", fuse_total, "users to draw overall")->required();
  fuse_cmd->add_option("--out,-o", fuse_out, "run directory")->required();
  fuse_cmd->callback([&]() {
    std::vector<ExperimentConfig> cfgs;
    fs::path base_dir;
    for (const auto& path : fuse_configs) {
      ConfigSource src;
      src.config_path = path;
      src.overrides = fuse_sets;
      auto loaded = load_from_file(src);
      cfgs.push_back(loaded.config);
      base_dir = loaded.base_dir;  // paths are resolved per config below
      cfgs.back() = armove::pipeline::resolve_paths(cfgs.back(), loaded.base_dir);
    }
    auto summary = armove::pipeline::run_city_fusion(cfgs, fuse_out, base_dir,
                                                     fuse_total,
                                                     live_factories(cfgs.front()));
    print_warnings(summary.warnings);
    std::printf("fusion run complete: %s\n", summary.run_dir.string().c_str());
    print_metrics(summary.run_dir);
  });

  ConfigSource model_src;
  std::string model_artifact, model_out, model_student;
  auto* model_cmd = transfer_cmd->add_subcommand(
      "model", "reuse the artifact's features and groups with a smaller model");
  model_cmd->add_option("--artifact,-a", model_artifact, "artifact file")->required();
  add_config_opts(model_cmd, model_src, true);
  model_cmd->add_option("--student", model_student, "student model id")->required();
  model_cmd->add_option("--out,-o", model_out, "run directory")->required();
  model_cmd->callback([&]() {
    auto artifact = armove::transfer::TransferArtifact::load(model_artifact);
    auto loaded = load_from_file(model_src);
    auto summary = armove::pipeline::run_model_transfer(
        artifact, loaded.config, model_student, model_out, loaded.base_dir,
        live_factories(loaded.config));
    print_warnings(summary.warnings);
    std::printf("model transfer complete: %s\n", summary.run_dir.string().c_str());
    print_metrics(summary.run_dir);
  });

  // ---- toygen ----
  std::string toy_out;
  armove::toygen::ToyConfig toy_cfg;
  auto* toy_cmd =
      app.add_subcommand("toygen", "regenerate the bundled synthetic check-in data");
  toy_cmd->add_option("--out,-o", toy_out, "output directory")->required();
  toy_cmd->add_option("--seed", toy_cfg.seed, "generator seed (default 11)");
  toy_cmd->add_option("--users-per-city", toy_cfg.users_per_city, "default 10");
  toy_cmd->add_option("--sessions-per-user", toy_cfg.sessions_per_user, "default 16");
  toy_cmd->callback([&]() {
    armove::toygen::generate(toy_out, toy_cfg);
    std::printf("toy data written to %s\n", toy_out.c_str());
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
