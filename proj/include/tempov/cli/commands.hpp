#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tempov/eval/scenario.hpp"
#include "tempov/mapgen/pipeline.hpp"

namespace tempov::cli {

namespace fs = std::filesystem;

struct CommandContext {
  std::optional<std::uint64_t> seed_override;  // TEMPOV_SEED
  int threads = 0;                             // cap on worker pools; 0 = hardware
  // Line-delimited JSON progress records; null discards them.
  std::function<void(const nlohmann::json&)> log;
  bool write_manifest = true;

  int thread_cap(int wanted) const;
  void emit(const nlohmann::json& record) const {
    if (log) log(record);
  }
};

// Each command writes its outputs plus a run manifest and returns a JSON summary.

// World + folds.json (k = 5) under `out`.
nlohmann::json run_synth(const nlohmann::json& config, const fs::path& out, const CommandContext& ctx);

// config: {"encoder": EncoderConfig or "preset": name, "pretrain": PretrainConfig}; both optional.
// With `hold_out`, every third location is kept out of training and the
// seasonal-invariance gap is measured on it.
nlohmann::json run_pretrain(const nlohmann::json& config, const fs::path& data, const fs::path& out, bool hold_out,
                            const CommandContext& ctx);

struct AdaptArgs {
  fs::path checkpoint;
  nlohmann::json plan;
  fs::path data;
  std::optional<fs::path> folds;  // default <data>/folds.json when present
  std::optional<int> test_fold;
  std::optional<int> val_fold;
  fs::path out;
};
nlohmann::json run_adapt(const AdaptArgs& args, const CommandContext& ctx);

struct EvaluateArgs {
  std::vector<fs::path> checkpoints;  // one per fold, or one for spec.fold
  eval::ScenarioSpec spec;
  fs::path data;
  std::optional<fs::path> folds;
  std::optional<fs::path> out;  // report file; the summary is returned either way
};
// The MetricReport, after checking that no test cluster was seen in training.
nlohmann::json run_evaluate(const EvaluateArgs& args, const CommandContext& ctx);

struct MapArgs {
  std::vector<fs::path> checkpoints;
  fs::path grid;   // grid JSON or a world.json
  fs::path tiles;  // <cell_id>_<year>_<season> tiles
  int year = 0;
  std::optional<fs::path> population;  // raster stem
  double mask_threshold = 1.0;
  std::optional<fs::path> baseline;  // earlier wealth_map stem: also emit the change map
  fs::path out;
  mapgen::PipelineConfig pipeline;
};
nlohmann::json run_map(const MapArgs& args, const CommandContext& ctx);

struct AnalyzeArgs {
  fs::path map_t1;
  fs::path map_t2;
  std::optional<fs::path> population;
  fs::path countries;
  std::optional<fs::path> covariates;
  std::optional<fs::path> grid;  // default: grid.json beside map_t1
  double years_elapsed = 10.0;
  bool population_weighted = true;
  std::optional<fs::path> out;
};
nlohmann::json run_analyze(const AnalyzeArgs& args, const CommandContext& ctx);

// End-to-end synthetic benchmark plus every acceptance check. `report.passed`
// is false when any criterion fails.
nlohmann::json run_bench(const std::string& preset, const fs::path& out, const CommandContext& ctx);

// Raster stems may be given with or without the .json/.bin extension.
fs::path raster_stem(const fs::path& p);

nlohmann::json read_json_file(const fs::path& p);
void write_json_file(const fs::path& p, const nlohmann::json& j);

}  // namespace tempov::cli
