#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tempov/adapt/finetune.hpp"
#include "tempov/core/checkpoint.hpp"
#include "tempov/data/world.hpp"
#include "tempov/pretrain/trainer.hpp"

namespace tempov::cli {

// A world plus its per-cell, per-epoch median composites (the inference
// input for survey clusters and map cells).
struct Dataset {
  data::World world;
  std::vector<data::ImageTile> composites;  // cell * 2 + epoch

  const data::ImageTile& composite(int cell, int epoch) const { return composites.at(cell * 2 + epoch); }
  int epoch_of(int year) const;
  const data::ImageTile& tile_for(const data::SurveyRecord& r) const;
};

Dataset make_dataset(data::World world);

// "country|year|cluster_id", the identity used by leakage audits.
std::string cluster_key(const data::SurveyRecord& r);

std::vector<adapt::LabeledSample> samples_of(const Dataset& ds, std::span<const int> idx);

// Pairs of every third location (both years) are held out of pretraining.
struct PairSplit {
  std::vector<data::BitemporalPair> train;
  std::vector<data::BitemporalPair> held;
};
PairSplit split_pairs(const std::vector<data::BitemporalPair>& pairs);

struct InvarianceGap {
  double within = 0.0;
  double cross = 0.0;  // over all pairs (i, j) at different locations
  double gap = 0.0;
  int n = 0;
};
InvarianceGap invariance_gap(const backbone::Encoder<float>& enc, std::span<const data::BitemporalPair> pairs);

data::NormStats norm_stats_of(const data::World& world);

Checkpoint pretrained_checkpoint(const pretrain::Pretrainer<float>& trainer);

// Record indices per stage of an adaptation plan. Records of the final
// stage's countries/years in `test_fold` are held out entirely; with
// `val_fold`, that fold of each stage's records becomes its validation set
// (otherwise finetune() splits off whole blocks).
struct StageSelection {
  std::vector<int> train1, val1, train2, val2, test;
};
StageSelection select_stages(const std::vector<data::SurveyRecord>& recs, const adapt::AdaptationPlan& plan,
                             std::optional<int> test_fold = std::nullopt, std::optional<int> val_fold = std::nullopt);

// OLS of AWI on the pre-jitter built-up fraction fitted on `train`, R² on `test`.
double oracle_r2(const data::World& world, std::span<const int> train, std::span<const int> test);

double model_r2(const adapt::WealthModel<float>& model, const std::vector<adapt::LabeledSample>& samples);

// Run manifest {config_hash, code_version, seed, started_at, finished_at, outputs}
// written to <dir>/runs/<timestamp>_<command>/manifest.json.
class RunManifest {
 public:
  RunManifest(std::string command, nlohmann::json config, std::uint64_t seed);
  void add_output(const std::filesystem::path& p);
  std::filesystem::path write(const std::filesystem::path& out_dir);
  const std::string& started_at() const noexcept { return started_; }

 private:
  std::string command_;
  nlohmann::json config_;
  std::uint64_t seed_;
  std::string started_;
  std::vector<std::string> outputs_;
};

std::string code_version();
std::string utc_timestamp(bool compact = false);
std::string config_hash(const nlohmann::json& config);

}  // namespace tempov::cli
