#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tempov/cli/commands.hpp"
#include "tempov/core/error.hpp"

using nlohmann::json;
namespace cli = tempov::cli;
namespace fs = std::filesystem;

namespace {

void diagnostic(const std::string& kind, const std::string& message) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << std::endl;
}

json config_or_empty(const std::string& path) { return path.empty() ? json::object() : cli::read_json_file(path); }

std::optional<std::uint64_t> env_seed() {
  const char* s = std::getenv("TEMPOV_SEED");
  if (!s || !*s) return std::nullopt;
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used, 0);
    if (used != std::string(s).size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw tempov::ConfigError(std::string("TEMPOV_SEED is not an unsigned integer: ") + s);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tempov: satellite wealth mapping at desk scale", "tempov"};
  app.require_subcommand(1);
  int threads = 0;
  std::string log_path;
  app.add_option("--threads", threads, "Cap on every worker pool (0 = hardware)")->check(CLI::NonNegativeNumber);
  app.add_option("--log", log_path, "Write progress records here instead of stdout");

  std::string config, out, data;

  auto* synth = app.add_subcommand("synth", "Generate the synthetic world");
  synth->add_option("--config", config, "World config JSON");
  synth->add_option("--out", out)->required();

  bool hold_out = false;
  auto* pretrain = app.add_subcommand("pretrain", "Self-supervised pretraining");
  pretrain->add_option("--config", config, "{preset|encoder, pretrain}");
  pretrain->add_option("--data", data)->required();
  pretrain->add_option("--out", out, "Checkpoint path")->required();
  pretrain->add_flag("--hold-out", hold_out, "Keep every third location out and report the invariance gap");

  cli::AdaptArgs aa;
  std::string plan_path, folds_path;
  int test_fold = -1, val_fold = -1;
  auto* adapt = app.add_subcommand("adapt", "Two-stage supervised adaptation");
  adapt->add_option("--ckpt", aa.checkpoint)->required();
  adapt->add_option("--plan", plan_path)->required();
  adapt->add_option("--data", aa.data)->required();
  adapt->add_option("--out", aa.out)->required();
  adapt->add_option("--folds", folds_path);
  adapt->add_option("--test-fold", test_fold);
  adapt->add_option("--val-fold", val_fold);

  cli::EvaluateArgs ea;
  std::string scenario, eval_out;
  auto* evaluate = app.add_subcommand("evaluate", "Score checkpoints on a generalization scenario");
  evaluate->add_option("--ckpt", ea.checkpoints, "One checkpoint, or one per fold")->required();
  evaluate->add_option("--scenario", scenario, "Name or 1..5")->required();
  evaluate->add_option("--country", ea.spec.country);
  evaluate->add_option("--year", ea.spec.year)->required();
  evaluate->add_option("--folds", folds_path);
  evaluate->add_option("--data", ea.data)->required();
  evaluate->add_option("--fold", ea.spec.fold);
  evaluate->add_option("--k", ea.spec.k);
  evaluate->add_option("--out", eval_out);

  cli::MapArgs ma;
  std::string pop, baseline;
  auto* map = app.add_subcommand("map", "Ensemble wealth map over a grid");
  map->add_option("--ckpt", ma.checkpoints)->required();
  map->add_option("--grid", ma.grid)->required();
  map->add_option("--tiles", ma.tiles)->required();
  map->add_option("--year", ma.year)->required();
  map->add_option("--pop", pop, "Population raster");
  map->add_option("--out", ma.out)->required();
  map->add_option("--workers-acq", ma.pipeline.acquisition_workers);
  map->add_option("--workers-inf", ma.pipeline.inference_workers);
  map->add_option("--queue", ma.pipeline.queue_capacity);
  map->add_flag("--shard-by-country", ma.pipeline.shard_by_country);
  map->add_option("--mask-threshold", ma.mask_threshold);
  map->add_option("--baseline", baseline, "Earlier wealth map; also writes the change map");

  cli::AnalyzeArgs na;
  std::string covariates, grid, analyze_out;
  bool unweighted = false;
  auto* analyze = app.add_subcommand("analyze", "Inequality, convergence and variance decomposition");
  analyze->add_option("--map-t1", na.map_t1)->required();
  analyze->add_option("--map-t2", na.map_t2)->required();
  analyze->add_option("--pop", pop);
  analyze->add_option("--countries", na.countries)->required();
  analyze->add_option("--covariates", covariates);
  analyze->add_option("--grid", grid);
  analyze->add_option("--years-elapsed", na.years_elapsed);
  analyze->add_flag("--unweighted", unweighted, "Ignore population weights");
  analyze->add_option("--out", analyze_out);

  std::string preset = "toy";
  auto* bench = app.add_subcommand("bench", "End-to-end synthetic benchmark and acceptance report");
  bench->add_option("--preset", preset)->check(CLI::IsMember({"toy"}));
  bench->add_option("--out", out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    diagnostic("usage", e.what());
    std::cerr << app.help();
    return 1;
  }

  std::unique_ptr<std::ofstream> log_file;
  std::mutex log_mu;
  cli::CommandContext ctx;
  ctx.threads = threads;
  try {
    ctx.seed_override = env_seed();
    if (!log_path.empty()) {
      log_file = std::make_unique<std::ofstream>(log_path);
      if (!*log_file) throw tempov::IoError("cannot open log file " + log_path);
    }
    ctx.log = [&](const json& rec) {
      std::lock_guard lock(log_mu);
      (log_file ? *log_file : std::cout) << rec.dump() << std::endl;
    };

    json summary;
    int code = 0;
    if (*synth) {
      summary = cli::run_synth(config_or_empty(config), out, ctx);
    } else if (*pretrain) {
      summary = cli::run_pretrain(config_or_empty(config), data, out, hold_out, ctx);
    } else if (*adapt) {
      aa.plan = cli::read_json_file(plan_path);
      if (!folds_path.empty()) aa.folds = folds_path;
      if (test_fold >= 0) aa.test_fold = test_fold;
      if (val_fold >= 0) aa.val_fold = val_fold;
      summary = cli::run_adapt(aa, ctx);
    } else if (*evaluate) {
      ea.spec.scenario = tempov::eval::parse_scenario(scenario);
      if (ctx.seed_override) ea.spec.seed = *ctx.seed_override;
      if (!folds_path.empty()) ea.folds = folds_path;
      if (!eval_out.empty()) ea.out = eval_out;
      summary = cli::run_evaluate(ea, ctx);
    } else if (*map) {
      if (!pop.empty()) ma.population = pop;
      if (!baseline.empty()) ma.baseline = baseline;
      summary = cli::run_map(ma, ctx);
    } else if (*analyze) {
      if (!pop.empty()) na.population = pop;
      if (!covariates.empty()) na.covariates = covariates;
      if (!grid.empty()) na.grid = grid;
      if (!analyze_out.empty()) na.out = analyze_out;
      na.population_weighted = !unweighted;
      summary = cli::run_analyze(na, ctx);
    } else if (*bench) {
      summary = cli::run_bench(preset, out, ctx);
      if (!summary.value("passed", false)) {
        std::vector<std::string> failing;
        for (const auto& c : summary.at("criteria"))
          if (!c.value("passed", false)) failing.push_back(std::to_string(c.value("id", 0)) + " " + c.value("name", ""));
        diagnostic("acceptance", "failing criteria: " + json(failing).dump());
        code = 2;
      }
    }
    if (log_file) log_file->flush();
    std::cout << summary.dump() << std::endl;
    return code;
  } catch (const tempov::Error& e) {
    diagnostic(e.kind(), e.what());
    return e.user_error() ? 1 : 2;
  } catch (const nlohmann::json::exception& e) {
    diagnostic("config", e.what());
    return 1;
  } catch (const std::exception& e) {
    diagnostic("internal", e.what());
    return 2;
  }
}
