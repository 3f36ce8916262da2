#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <mutex>
#include <thread>

#include "tempov/adapt/finetune.hpp"
#include "tempov/cli/checks.hpp"
#include "tempov/cli/commands.hpp"
#include "tempov/cli/workflow.hpp"
#include "tempov/core/error.hpp"
#include "tempov/data/io.hpp"
#include "tempov/eval/folds.hpp"
#include "tempov/eval/metrics.hpp"

namespace tempov::cli {

using nlohmann::json;

namespace {

// Toy recipe: pretraining budget and the thresholds of the acceptance criteria.
constexpr int kHeldOutPairs = 200;
constexpr double kMinGap = 0.1;
constexpr double kPretrainBudgetSeconds = 20 * 60;
constexpr double kMinModelR2 = 0.6;
constexpr double kMinOracleR2 = 0.85;
constexpr double kMaxInversion = 0.02;
constexpr double kBenchBudgetSeconds = 45 * 60;
// Fine-tuning replicates per few-shot fraction; the first kEnsembleSize
// full-label models form the map ensemble.
constexpr int kSweepSeeds = 10;
constexpr int kEnsembleSize = 5;
constexpr std::array<double, 5> kFractions{0.05, 0.10, 0.25, 0.50, 1.00};
constexpr int kTestFold = 0;
constexpr int kValFold = 1;

adapt::AdaptationPlan toy_plan(const data::SyntheticWorldConfig& wc, std::uint64_t seed) {
  adapt::AdaptationPlan plan;
  plan.direction = adapt::Direction::nowcast;
  plan.stage1.years = {wc.years[0]};
  plan.stage1.epochs = 30;
  plan.stage1.lr = 5e-3;
  plan.stage2 = plan.stage1;
  plan.stage2->years = {wc.years[1]};
  plan.patience = 10;
  plan.seed = seed;
  return plan;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Runs jobs [0, n) on up to `threads` workers.
template <typename F>
void parallel_for(int n, int threads, F&& job) {
  std::atomic<int> next{0};
  std::mutex err_mu;
  std::exception_ptr err;
  auto worker = [&] {
    for (int i; (i = next++) < n;) {
      try {
        job(i);
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (!err) err = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

struct Stage {
  std::string name;
  bool ok = false;
  double seconds = 0;
  json summary;
  std::string error;
};

template <typename F>
Stage run_stage(const std::string& name, const CommandContext& ctx, F&& body) {
  Stage s;
  s.name = name;
  const auto t0 = std::chrono::steady_clock::now();
  ctx.emit({{"stage", name}, {"event", "start"}});
  try {
    s.summary = body();
    s.ok = true;
  } catch (const std::exception& e) {
    s.error = e.what();
  }
  s.seconds = seconds_since(t0);
  ctx.emit({{"stage", name}, {"event", s.ok ? "done" : "failed"}, {"seconds", s.seconds}});
  return s;
}

CheckResult not_run(int id, const std::string& name, const std::string& why) {
  CheckResult r;
  r.id = id;
  r.name = name;
  r.detail = why;
  return r;
}

}  // namespace

json run_bench(const std::string& preset, const fs::path& out, const CommandContext& ctx) {
  if (preset != "toy") throw ConfigError("unknown bench preset '" + preset + "' (available: toy)");
  const auto t_start = std::chrono::steady_clock::now();
  const std::uint64_t seed = ctx.seed_override.value_or(0);
  fs::create_directories(out / "logs");
  std::ofstream stage_log(out / "logs" / "bench.jsonl");
  std::mutex log_mu;
  CommandContext quiet = ctx;
  quiet.log = [&](const json& j) {
    std::lock_guard lock(log_mu);
    stage_log << j.dump() << std::endl;
  };
  RunManifest manifest("bench", {{"preset", preset}, {"seed", seed}}, seed);

  data::SyntheticWorldConfig wc;
  wc.seed = derive_seed(seed, {0x5eed});
  const fs::path world_dir = out / "world";
  const fs::path pretrained = out / "pretrained.ckpt";
  std::vector<Stage> stages;
  std::vector<CheckResult> criteria;

  // synth
  stages.push_back(run_stage("synth", ctx, [&] {
    CommandContext c = quiet;
    c.seed_override = wc.seed;
    return run_synth(wc, world_dir, c);
  }));

  // pretrain
  std::ofstream pre_log;
  stages.push_back(run_stage("pretrain", ctx, [&] {
    if (!stages[0].ok) throw StateError("synth failed");
    pre_log.open(out / "logs" / "pretrain.jsonl");
    CommandContext c = quiet;
    c.seed_override = derive_seed(seed, {0x97e});
    c.log = [&](const json& j) { pre_log << j.dump() << std::endl; };
    return run_pretrain(json{{"preset", "toy"}}, world_dir, pretrained, true, c);
  }));
  {
    const Stage& s = stages.back();
    if (!s.ok || !s.summary.contains("invariance")) {
      criteria.push_back(not_run(5, "seasonal invariance", "pretraining failed: " + s.error));
    } else {
      CheckResult r;
      r.id = 5;
      r.name = "seasonal invariance";
      const auto& inv = s.summary.at("invariance");
      const double gap = inv.at("gap"), secs = s.summary.at("seconds");
      const int pairs = inv.at("pairs");
      r.passed = gap >= kMinGap && secs <= kPretrainBudgetSeconds && pairs == kHeldOutPairs;
      r.measured = {{"within", inv.at("within")}, {"cross", inv.at("cross")}, {"gap", gap},
                    {"held_out_pairs", pairs},    {"steps", s.summary.at("steps")}, {"pretrain_seconds", secs},
                    {"threshold", kMinGap}};
      if (!r.passed) r.detail = gap < kMinGap ? "gap below threshold" : "budget or pair count not met";
      criteria.push_back(r);
    }
  }

  // adapt: one stage 1, then the few-shot sweep of stage 2.
  std::vector<fs::path> ensemble;
  json adapt_summary;
  stages.push_back(run_stage("adapt", ctx, [&]() -> json {
    if (!stages[1].ok) throw StateError("pretraining failed");
    Dataset ds = make_dataset(data::load_world(world_dir));
    ds.world.truth = data::read_truth(world_dir);
    eval::apply_folds(ds.world.surveys, eval::fold_assignment_from_json(read_json_file(world_dir / "folds.json")));
    const auto plan = toy_plan(wc, derive_seed(seed, {0xada}));
    const auto sel = select_stages(ds.world.surveys, plan, kTestFold, kValFold);
    const Checkpoint ck = load_checkpoint(pretrained);
    const adapt::StageData d1{samples_of(ds, sel.train1), {}};
    const adapt::StageData d2{samples_of(ds, sel.train2), samples_of(ds, sel.val2)};
    const auto test = samples_of(ds, sel.test);
    const auto stage1 = adapt::finetune_stage1<float>(ck, plan, d1);
    const double stage1_r2 = model_r2(stage1.model, test);

    json seen = json::array();
    for (const auto* idx : {&sel.train1, &sel.val1, &sel.train2, &sel.val2})
      for (int i : *idx) seen.push_back(cluster_key(ds.world.surveys[i]));

    const int jobs = static_cast<int>(kFractions.size()) * kSweepSeeds;
    std::vector<double> r2(jobs);
    std::vector<std::vector<double>> full_preds(kEnsembleSize);
    fs::create_directories(out / "adapt");
    parallel_for(jobs, quiet.thread_cap(jobs), [&](int j) {
      const int fi = j / kSweepSeeds, s = j % kSweepSeeds;
      auto p = plan;
      p.seed = derive_seed(plan.seed, {static_cast<std::uint64_t>(s)});
      p.stage2->fraction = kFractions[fi];
      auto res = adapt::finetune_stage2<float>(stage1, p, d2);
      r2[j] = model_r2(res.model, test);
      quiet.emit({{"stage", "adapt"}, {"fraction", kFractions[fi]}, {"seed", s}, {"test_r2", r2[j]},
                  {"n_train", res.report.n_train[1]}});
      if (kFractions[fi] == 1.0 && s < kEnsembleSize) {
        for (const auto& t : test) full_preds[s].push_back(res.model.predict(*t.tile).mean);
        Checkpoint out_ck = res.model.to_checkpoint();
        out_ck.manifest["training_clusters"] = seen;
        out_ck.manifest["plan"] = p;
        out_ck.manifest["report"] = adapt::to_json(res.report);
        save_checkpoint(out / "adapt" / ("model_s" + std::to_string(s) + ".ckpt"), out_ck);
      }
    });
    for (int s = 0; s < kEnsembleSize; ++s) ensemble.push_back(out / "adapt" / ("model_s" + std::to_string(s) + ".ckpt"));

    std::vector<double> y, ens(test.size(), 0.0);
    for (const auto& t : test) y.push_back(t.y);
    for (const auto& fp : full_preds)
      for (std::size_t i = 0; i < fp.size(); ++i) ens[i] += fp[i] / kEnsembleSize;

    json sweep = json::array();
    std::vector<double> means;
    for (std::size_t fi = 0; fi < kFractions.size(); ++fi) {
      std::vector<double> v(r2.begin() + fi * kSweepSeeds, r2.begin() + (fi + 1) * kSweepSeeds);
      double m = 0;
      for (double x : v) m += x / kSweepSeeds;
      means.push_back(m);
      sweep.push_back({{"fraction", kFractions[fi]}, {"mean_r2", m}, {"r2", v}});
    }
    adapt_summary = {{"stage1_train", sel.train1.size()},
                     {"stage2_pool", sel.train2.size()},
                     {"val", sel.val2.size()},
                     {"test", sel.test.size()},
                     {"stage1_only_r2", stage1_r2},
                     {"oracle_r2", oracle_r2(ds.world, sel.train2, sel.test)},
                     {"ensemble_r2", eval::r_squared(y, ens)},
                     {"sweep", sweep},
                     {"means", means},
                     {"plan", plan}};
    return adapt_summary;
  }));
  if (!stages.back().ok) {
    criteria.push_back(not_run(6, "planted-wealth recovery", "adaptation failed: " + stages.back().error));
  } else {
    CheckResult r;
    r.id = 6;
    r.name = "planted-wealth recovery";
    const std::vector<double> means = adapt_summary.at("means");
    int inversions = 0;
    double worst = 0;
    for (std::size_t i = 0; i + 1 < means.size(); ++i) {
      const double drop = means[i] - means[i + 1];
      if (drop > 0) {
        ++inversions;
        worst = std::max(worst, drop);
      }
    }
    const double full = means.back(), oracle = adapt_summary.at("oracle_r2");
    const bool mono = inversions == 0 || (inversions == 1 && worst <= kMaxInversion);
    r.passed = full >= kMinModelR2 && oracle >= kMinOracleR2 && mono;
    r.measured = {{"model_r2", full},           {"oracle_r2", oracle},
                  {"ensemble_r2", adapt_summary.at("ensemble_r2")},
                  {"fractions", kFractions},    {"seeds", kSweepSeeds},
                  {"fraction_means", means},    {"inversions", inversions},
                  {"largest_inversion", worst}, {"thresholds", {{"model", kMinModelR2}, {"oracle", kMinOracleR2}}}};
    if (!r.passed) {
      r.detail = full < kMinModelR2 ? "model R² below threshold"
                 : oracle < kMinOracleR2 ? "oracle R² below threshold"
                                         : "few-shot trend not monotone";
    }
    criteria.push_back(r);
  }

  // evaluate: each country's test fold of the target year.
  stages.push_back(run_stage("evaluate", ctx, [&]() -> json {
    if (ensemble.empty()) throw StateError("no adapted model");
    json reports = json::object();
    for (const auto& code : data::load_world(world_dir).grid.country_codes) {
      EvaluateArgs ea;
      ea.checkpoints = {ensemble.front()};
      // In-year scenario with fold i tests on fold (i + 1) mod k.
      ea.spec = {eval::Scenario::all_countries_in_year, code, wc.years[1], (kTestFold + 4) % 5, 5, seed};
      ea.data = world_dir;
      ea.out = out / "eval" / (code + ".json");
      reports[code] = run_evaluate(ea, quiet);
    }
    return reports;
  }));

  // map both epochs with the five-model ensemble, then the change map.
  stages.push_back(run_stage("map", ctx, [&]() -> json {
    if (ensemble.empty()) throw StateError("no adapted model");
    json maps;
    for (int e = 0; e < 2; ++e) {
      MapArgs ma;
      ma.checkpoints = ensemble;
      ma.grid = world_dir / "world.json";
      ma.tiles = world_dir / "tiles";
      ma.year = wc.years[e];
      ma.population = world_dir / "population";
      ma.out = out / ("map_" + std::to_string(wc.years[e]));
      ma.pipeline.acquisition_workers = 2;
      ma.pipeline.inference_workers = 2;
      if (e == 1) ma.baseline = out / ("map_" + std::to_string(wc.years[0])) / "wealth_map";
      maps[std::to_string(wc.years[e])] = run_map(ma, quiet);
    }
    return maps;
  }));

  stages.push_back(run_stage("analyze", ctx, [&]() -> json {
    if (!stages.back().ok) throw StateError("mapping failed");
    AnalyzeArgs aa;
    aa.map_t1 = out / ("map_" + std::to_string(wc.years[0])) / "wealth_map";
    aa.map_t2 = out / ("map_" + std::to_string(wc.years[1])) / "wealth_map";
    aa.population = world_dir / "population";
    aa.countries = world_dir / "grid.csv";
    aa.covariates = world_dir / "covariates.csv";
    aa.years_elapsed = wc.years[1] - wc.years[0];
    aa.out = out / "analysis.json";
    return run_analyze(aa, quiet);
  }));

  // Standalone checks.
  const auto t_checks = std::chrono::steady_clock::now();
  for (auto& c : run_standalone_checks(seed)) criteria.push_back(std::move(c));
  const double checks_seconds = seconds_since(t_checks);
  std::sort(criteria.begin(), criteria.end(), [](const auto& a, const auto& b) { return a.id < b.id; });

  const double runtime = seconds_since(t_start);
  bool stages_ok = true;
  json stage_json = json::object();
  for (const auto& s : stages) {
    stages_ok = stages_ok && s.ok;
    json j{{"ok", s.ok}, {"seconds", s.seconds}, {"summary", s.summary}};
    if (!s.ok) j["error"] = s.error;
    stage_json[s.name] = j;
  }
  bool others = true;
  for (const auto& c : criteria) others = others && c.passed;
  CheckResult e2e;
  e2e.id = 11;
  e2e.name = "end-to-end";
  e2e.passed = stages_ok && others && runtime <= kBenchBudgetSeconds;
  e2e.measured = {{"stages_ok", stages_ok}, {"other_criteria_passed", others}, {"runtime_seconds", runtime},
                  {"budget_seconds", kBenchBudgetSeconds}};
  if (!e2e.passed) {
    e2e.detail = !stages_ok ? "a stage failed" : !others ? "another criterion failed" : "over the runtime budget";
  }
  criteria.push_back(e2e);

  json crit = json::array();
  for (const auto& c : criteria) crit.push_back(to_json(c));
  json report{{"preset", preset},
              {"seed", seed},
              {"code_version", code_version()},
              {"started_at", manifest.started_at()},
              {"runtime_seconds", runtime},
              {"checks_seconds", checks_seconds},
              {"stages", stage_json},
              {"criteria", crit},
              {"passed", e2e.passed}};
  write_json_file(out / "bench_report.json", report);
  manifest.add_output(out / "bench_report.json");
  manifest.add_output(out / "logs");
  if (ctx.write_manifest) manifest.write(out);
  return report;
}

}  // namespace tempov::cli
