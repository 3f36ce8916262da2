#include "tempov/cli/commands.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <map>
#include <set>
#include <thread>

#include "tempov/adapt/finetune.hpp"
#include "tempov/analysis/report.hpp"
#include "tempov/cli/workflow.hpp"
#include "tempov/core/error.hpp"
#include "tempov/data/io.hpp"
#include "tempov/data/pairs.hpp"
#include "tempov/eval/folds.hpp"
#include "tempov/eval/report.hpp"
#include "tempov/mapgen/output.hpp"

namespace tempov::cli {

using nlohmann::json;

int CommandContext::thread_cap(int wanted) const {
  const int hw = std::max(1u, std::thread::hardware_concurrency());
  const int cap = threads > 0 ? threads : hw;
  return std::max(1, std::min(wanted, cap));
}

json read_json_file(const fs::path& p) {
  std::ifstream f(p);
  if (!f) throw IoError("cannot read " + p.string());
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw InputError("malformed JSON in " + p.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& p, const json& j) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p);
  f << j.dump(2) << '\n';
  if (!f) throw IoError("cannot write " + p.string());
}

fs::path raster_stem(const fs::path& p) {
  const auto ext = p.extension();
  return ext == ".json" || ext == ".bin" ? fs::path(p).replace_extension() : p;
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path manifest_root(const fs::path& out_file) {
  return out_file.has_parent_path() ? out_file.parent_path() : fs::path(".");
}

void finish(RunManifest& m, const fs::path& root, const CommandContext& ctx) {
  if (ctx.write_manifest) m.write(root);
}

eval::FoldAssignment load_folds(const fs::path& data, const std::optional<fs::path>& folds, bool required) {
  const fs::path p = folds ? *folds : data / "folds.json";
  if (!fs::exists(p)) {
    if (required || folds) throw IoError("fold file " + p.string() + " not found");
    return {};
  }
  return eval::fold_assignment_from_json(read_json_file(p));
}

adapt::WealthModel<float> load_model(const fs::path& p) {
  return adapt::WealthModel<float>::from_checkpoint(load_checkpoint(p));
}

}  // namespace

// synth ----------------------------------------------------------------------

json run_synth(const json& config, const fs::path& out, const CommandContext& ctx) {
  data::SyntheticWorldConfig cfg = config.is_null() ? data::SyntheticWorldConfig{} : config.get<data::SyntheticWorldConfig>();
  if (ctx.seed_override) cfg.seed = *ctx.seed_override;
  cfg.validate();
  RunManifest manifest("synth", cfg, cfg.seed);
  const auto t0 = std::chrono::steady_clock::now();
  const auto world = data::generate_world(cfg);
  data::write_world(world, out);
  const auto folds = eval::assign_folds(world.surveys, 5, cfg.seed);
  write_json_file(out / "folds.json", eval::to_json(folds));
  for (const char* f : {"world.json", "surveys.csv", "grid.csv", "covariates.csv", "population.json",
                        "population.bin", "folds.json", "tiles", "oracle/truth.csv"})
    manifest.add_output(out / f);
  finish(manifest, out, ctx);
  return {{"out", out.string()},
          {"cells", world.grid.num_cells()},
          {"tiles", world.tiles.size()},
          {"surveys", world.surveys.size()},
          {"degenerate_fold_groups", folds.degenerate},
          {"seconds", seconds_since(t0)}};
}

// pretrain -------------------------------------------------------------------

json run_pretrain(const json& config, const fs::path& data, const fs::path& out, bool hold_out,
                  const CommandContext& ctx) {
  backbone::EncoderConfig enc = backbone::EncoderConfig::toy();
  pretrain::PretrainConfig pc = pretrain::PretrainConfig::toy();
  if (!config.is_null()) {
    if (config.contains("preset")) enc = backbone::EncoderConfig::from_preset(config.at("preset").get<std::string>());
    if (config.contains("encoder")) enc = config.at("encoder").get<backbone::EncoderConfig>();
    if (config.contains("pretrain")) pc = config.at("pretrain").get<pretrain::PretrainConfig>();
  }
  if (ctx.seed_override) pc.seed = *ctx.seed_override;
  enc.validate();
  pc.validate();
  const json resolved{{"encoder", enc}, {"pretrain", pc}, {"hold_out", hold_out}};
  RunManifest manifest("pretrain", resolved, pc.seed);

  const data::World world = data::load_world(data);
  const auto selection = data::build_pairs(world.tiles);
  PairSplit split;
  if (hold_out) {
    split = split_pairs(selection.pairs);
  } else {
    split.train = selection.pairs;
  }
  const auto t0 = std::chrono::steady_clock::now();
  pretrain::Pretrainer<float> trainer(enc, pc, norm_stats_of(world));
  trainer.run(split.train, [&](const pretrain::StepResult& r) { ctx.emit(pretrain::to_json(r)); });
  const double train_seconds = seconds_since(t0);

  Checkpoint ck = pretrained_checkpoint(trainer);
  json summary{{"out", out.string()},
               {"steps", trainer.state().step},
               {"train_pairs", split.train.size()},
               {"held_out_pairs", split.held.size()},
               {"seconds", train_seconds}};
  if (hold_out && split.held.size() >= 2) {
    const auto gap = invariance_gap(trainer.state().teacher.encoder, split.held);
    summary["invariance"] = {{"within", gap.within}, {"cross", gap.cross}, {"gap", gap.gap}, {"pairs", gap.n}};
    ck.manifest["invariance"] = summary["invariance"];
  }
  save_checkpoint(out, ck);
  manifest.add_output(out);
  finish(manifest, manifest_root(out), ctx);
  return summary;
}

// adapt ----------------------------------------------------------------------

json run_adapt(const AdaptArgs& args, const CommandContext& ctx) {
  auto plan = args.plan.get<adapt::AdaptationPlan>();
  if (ctx.seed_override) plan.seed = *ctx.seed_override;
  plan.validate();
  const Checkpoint pretrained = load_checkpoint(args.checkpoint);
  RunManifest manifest("adapt",
                       {{"plan", plan},
                        {"checkpoint", args.checkpoint.string()},
                        {"test_fold", args.test_fold ? json(*args.test_fold) : json()},
                        {"val_fold", args.val_fold ? json(*args.val_fold) : json()}},
                       plan.seed);

  Dataset ds = make_dataset(data::load_world(args.data));
  const bool need_folds = args.test_fold || args.val_fold;
  const auto folds = load_folds(args.data, args.folds, need_folds);
  if (!folds.fold.empty()) eval::apply_folds(ds.world.surveys, folds);
  const auto sel = select_stages(ds.world.surveys, plan, args.test_fold, args.val_fold);

  const adapt::StageData d1{samples_of(ds, sel.train1), samples_of(ds, sel.val1)};
  const adapt::StageData d2{samples_of(ds, sel.train2), samples_of(ds, sel.val2)};
  const auto t0 = std::chrono::steady_clock::now();
  auto res = adapt::finetune<float>(pretrained, plan, d1, plan.stage2 ? &d2 : nullptr);
  for (const auto& e : res.report.epochs)
    ctx.emit({{"stage", e.stage}, {"epoch", e.epoch}, {"lr", e.lr}, {"train_loss", e.train_loss}, {"val_r2", e.val_r2}});

  Checkpoint ck = res.model.to_checkpoint();
  // Every cluster the model saw (training or early stopping), for leakage audits.
  json seen = json::array();
  for (const auto* idx : {&sel.train1, &sel.val1, &sel.train2, &sel.val2})
    for (int i : *idx) seen.push_back(cluster_key(ds.world.surveys[i]));
  ck.manifest["training_clusters"] = seen;
  ck.manifest["plan"] = plan;
  save_checkpoint(args.out, ck);
  manifest.add_output(args.out);
  finish(manifest, manifest_root(args.out), ctx);
  return {{"out", args.out.string()},
          {"report", adapt::to_json(res.report)},
          {"held_out", sel.test.size()},
          {"seconds", seconds_since(t0)}};
}

// evaluate -------------------------------------------------------------------

json run_evaluate(const EvaluateArgs& args, const CommandContext& ctx) {
  if (args.checkpoints.empty()) throw ConfigError("evaluate needs at least one checkpoint");
  const auto& spec = args.spec;
  if (args.checkpoints.size() != 1 && static_cast<int>(args.checkpoints.size()) != spec.k) {
    throw ConfigError("give one checkpoint, or one per fold (k = " + std::to_string(spec.k) + ")");
  }
  json cfg{{"scenario", eval::scenario_name(spec.scenario)}, {"country", spec.country}, {"year", spec.year},
           {"fold", spec.fold}, {"k", spec.k}};
  for (const auto& c : args.checkpoints) cfg["checkpoints"].push_back(c.string());
  RunManifest manifest("evaluate", cfg, spec.seed);

  Dataset ds = make_dataset(data::load_world(args.data));
  eval::apply_folds(ds.world.surveys, load_folds(args.data, args.folds, true));
  const auto& recs = ds.world.surveys;

  std::vector<std::vector<eval::PredictedCluster>> per_fold(spec.k);
  std::vector<eval::PredictedCluster> change_pool;
  std::set<std::pair<std::string, std::string>> in_pool;
  for (std::size_t j = 0; j < args.checkpoints.size(); ++j) {
    eval::ScenarioSpec s = spec;
    if (args.checkpoints.size() > 1) s.fold = static_cast<int>(j);
    const auto split = eval::make_scenario(s, recs);
    const Checkpoint ck = load_checkpoint(args.checkpoints[j]);
    if (ck.manifest.contains("training_clusters")) {
      const auto seen = ck.manifest.at("training_clusters").get<std::set<std::string>>();
      for (int i : split.test)
        if (seen.count(cluster_key(recs[i]))) {
          throw ProtocolError("checkpoint " + args.checkpoints[j].string() + " was trained on test cluster " +
                              cluster_key(recs[i]));
        }
    }
    const auto model = adapt::WealthModel<float>::from_checkpoint(ck);
    auto predict = [&](const data::SurveyRecord& r) {
      const auto p = model.predict(ds.tile_for(r));
      return eval::PredictedCluster{r, p.mean, p.variance};
    };
    // Change pairs: each test cluster plus its other-year observations.
    std::set<std::pair<std::string, std::string>> test_clusters;
    for (int i : split.test) {
      per_fold[s.fold].push_back(predict(recs[i]));
      test_clusters.insert({recs[i].country_code, recs[i].cluster_id});
    }
    for (const auto& r : recs) {
      const std::pair<std::string, std::string> id{r.country_code, r.cluster_id};
      if (!test_clusters.count(id) || !in_pool.insert({id.first + "|" + std::to_string(r.year), id.second}).second)
        continue;
      change_pool.push_back(predict(r));
    }
  }
  const auto report = eval::evaluate(spec, per_fold, &change_pool);
  json j = eval::to_json(report);
  if (args.out) {
    write_json_file(*args.out, j);
    manifest.add_output(*args.out);
    finish(manifest, manifest_root(*args.out), ctx);
  }
  return j;
}

// map ------------------------------------------------------------------------

json run_map(const MapArgs& args, const CommandContext& ctx) {
  if (args.checkpoints.empty()) throw ConfigError("map needs at least one checkpoint");
  mapgen::PipelineConfig pc = args.pipeline;
  pc.acquisition_workers = ctx.thread_cap(pc.acquisition_workers);
  pc.inference_workers = ctx.thread_cap(pc.inference_workers);
  pc.validate();
  json cfg{{"grid", args.grid.string()},
           {"tiles", args.tiles.string()},
           {"year", args.year},
           {"mask_threshold", args.mask_threshold},
           {"workers_acq", pc.acquisition_workers},
           {"workers_inf", pc.inference_workers},
           {"queue", pc.queue_capacity}};
  for (const auto& c : args.checkpoints) cfg["checkpoints"].push_back(c.string());
  RunManifest manifest("map", cfg, 0);

  const auto grid = mapgen::grid_from_json(read_json_file(args.grid));
  std::vector<adapt::WealthModel<float>> models;
  for (const auto& p : args.checkpoints) models.push_back(load_model(p));
  std::vector<const adapt::WealthModel<float>*> ptrs;
  for (const auto& m : models) ptrs.push_back(&m);

  const mapgen::DirectoryTileSource source(args.tiles, args.year);
  mapgen::Telemetry tel;
  auto map = mapgen::run_pipeline(grid, ptrs, source, pc, &tel);
  if (args.population) {
    const auto pop = data::read_raster(raster_stem(*args.population));
    const auto& dens = pop.layer("population_density");
    mapgen::apply_population_mask(map, std::vector<double>(dens.begin(), dens.end()), args.mask_threshold);
  }
  fs::create_directories(args.out);
  std::vector<fs::path> outputs;
  auto emit_map = [&](const mapgen::WealthMap& m, const std::string& name, mapgen::HeatmapMode mode) {
    mapgen::write_map_raster(args.out / name, m);
    mapgen::write_map_csv(args.out / (name + ".csv"), m);
    mapgen::write_ppm(args.out / (name + ".ppm"), mapgen::render_heatmap(m, mode));
    for (const char* ext : {".json", ".bin", ".csv", ".ppm"}) outputs.push_back(args.out / (name + ext));
  };
  emit_map(map, "wealth_map", mapgen::HeatmapMode::level);
  json summary{{"out", args.out.string()}, {"telemetry", mapgen::to_json(tel)}};
  if (args.baseline) {
    const auto before = mapgen::read_map_raster(raster_stem(*args.baseline), grid);
    emit_map(mapgen::diff_maps(before, map), "wealth_change", mapgen::HeatmapMode::change);
    summary["change"] = true;
  }
  write_json_file(args.out / "grid.json", grid);
  write_json_file(args.out / "telemetry.json", mapgen::to_json(tel));
  outputs.push_back(args.out / "grid.json");
  outputs.push_back(args.out / "telemetry.json");

  int ok = 0, masked = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    ok += map.status[i] == mapgen::CellStatus::ok;
    masked += !map.masked.empty() && map.masked[i];
  }
  summary["cells"] = grid.size();
  summary["inferred"] = ok;
  summary["masked"] = masked;
  for (const auto& p : outputs) manifest.add_output(p);
  finish(manifest, args.out, ctx);
  return summary;
}

// analyze --------------------------------------------------------------------

json run_analyze(const AnalyzeArgs& args, const CommandContext& ctx) {
  const fs::path t1 = raster_stem(args.map_t1), t2 = raster_stem(args.map_t2);
  const fs::path grid_path = args.grid ? *args.grid : t1.parent_path() / "grid.json";
  json cfg{{"map_t1", t1.string()},
           {"map_t2", t2.string()},
           {"countries", args.countries.string()},
           {"grid", grid_path.string()},
           {"years_elapsed", args.years_elapsed},
           {"population_weighted", args.population_weighted}};
  if (args.population) cfg["population"] = args.population->string();
  if (args.covariates) cfg["covariates"] = args.covariates->string();
  RunManifest manifest("analyze", cfg, 0);

  const auto grid = mapgen::grid_from_json(read_json_file(grid_path));
  const auto m1 = mapgen::read_map_raster(t1, grid);
  const auto m2 = mapgen::read_map_raster(t2, grid);
  const auto countries = analysis::read_countries(args.countries);
  std::vector<double> density;
  if (args.population) {
    const auto pop = data::read_raster(raster_stem(*args.population));
    if (pop.height != grid.rows || pop.width != grid.cols) throw ShapeError("population raster does not match the grid");
    const auto& d = pop.layer("population_density");
    density.assign(d.begin(), d.end());
  }
  std::optional<analysis::CovariateTable> cov;
  if (args.covariates) cov = analysis::read_covariates(*args.covariates);
  auto build = analysis::build_panel(m1, m2, countries, args.population ? &density : nullptr, cov ? &*cov : nullptr);
  analysis::AnalysisOptions opts;
  opts.years_elapsed = args.years_elapsed;
  opts.population_weighted = args.population_weighted;
  json report = analysis::analyze(std::move(build), opts);
  if (args.out) {
    write_json_file(*args.out, report);
    manifest.add_output(*args.out);
    finish(manifest, manifest_root(*args.out), ctx);
  }
  return report;
}

}  // namespace tempov::cli
