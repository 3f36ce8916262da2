#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tempov/adapt/lora.hpp"
#include "tempov/backbone/encoder.hpp"
#include "tempov/backbone/heads.hpp"
#include "tempov/core/checkpoint.hpp"
#include "tempov/data/tile.hpp"

namespace tempov::adapt {

// Encoder (with adapters) + Gaussian regression head + target scaling.
template <typename T>
struct WealthModel {
  backbone::Encoder<T> encoder;
  backbone::RegressionHead<T> head;
  double target_mean = 0.0;
  double target_sd = 1.0;

  template <typename F>
  void visit(F&& f) {
    encoder.visit(f);
    head.visit("regression", f);
  }

  // Mean and variance in AWI units.
  backbone::GaussianPrediction predict(const data::ImageTile& tile) const;

  Checkpoint to_checkpoint() const;
  static WealthModel from_checkpoint(const Checkpoint& ck);
};

struct LabeledSample {
  const data::ImageTile* tile = nullptr;
  double y = 0.0;
  std::string country;
  double lon = 0.0;
  double lat = 0.0;
};

struct StageData {
  std::vector<LabeledSample> train;
  std::vector<LabeledSample> val;
};

enum class Direction { nowcast, hindcast, no_census };

struct StageSpec {
  std::vector<std::string> countries;  // empty: all
  std::vector<int> years;
  double fraction = 1.0;
  int epochs = 50;
  double lr = 1e-3;
};

struct AdaptationPlan {
  Direction direction = Direction::nowcast;
  StageSpec stage1;
  std::optional<StageSpec> stage2;  // absent: zero-shot on the target year
  LoraConfig lora;
  int batch_size = 16;
  int patience = 10;
  double weight_decay = 0.0;
  double grad_clip = 5.0;
  double val_fraction = 0.2;  // used when a stage has no explicit validation set
  double block_km = 18.0;     // spatial strata for few-shot draws and validation splits
  bool reinit_adapters = false;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const AdaptationPlan& p);
void from_json(const nlohmann::json& j, AdaptationPlan& p);
std::string direction_name(Direction d);

struct EpochRecord {
  int stage = 1;
  int epoch = 0;  // 0 = before any update
  double lr = 0.0;
  double train_loss = 0.0;
  double val_r2 = 0.0;
};

struct FinetuneReport {
  std::vector<EpochRecord> epochs;
  std::array<int, 2> best_epoch{-1, -1};
  std::array<double, 2> best_val_r2{0.0, 0.0};
  std::array<int, 2> n_train{0, 0};
  std::array<int, 2> n_val{0, 0};
  std::size_t trainable_params = 0;
};

nlohmann::json to_json(const FinetuneReport& r);

// Deterministic draw of round(fraction·n) samples (at least 1), spread across
// spatial blocks: strata are visited in seeded order and one sample is taken
// from each in turn.
std::vector<LabeledSample> few_shot_subsample(const std::vector<LabeledSample>& samples, double fraction,
                                              double block_km, std::uint64_t seed);

// Splits by whole spatial blocks; returns {train, val}.
StageData split_validation(const std::vector<LabeledSample>& samples, double val_fraction, double block_km,
                           std::uint64_t seed);

// Pretrained encoder + fresh adapters + zero-initialized regression head.
template <typename T>
WealthModel<T> prepare_model(const Checkpoint& pretrained, const AdaptationPlan& plan);

// Trains adapters and head on one stage and restores the best-validation
// parameters (the pre-training state counts as epoch 0).
template <typename T>
void run_stage(WealthModel<T>& model, const StageSpec& spec, const AdaptationPlan& plan, const StageData& data,
               int stage, FinetuneReport& report);

template <typename T>
struct FinetuneResult {
  WealthModel<T> model;
  FinetuneReport report;
};

// Stage 1, then stage 2 if the plan has one. Fractions are applied to the
// training sets here. Throws DataError on an empty stage-1 label set.
template <typename T>
FinetuneResult<T> finetune(const Checkpoint& pretrained, const AdaptationPlan& plan, const StageData& stage1,
                           const StageData* stage2 = nullptr);

// The two halves of finetune(), for sweeps that share one stage 1.
template <typename T>
FinetuneResult<T> finetune_stage1(const Checkpoint& pretrained, const AdaptationPlan& plan, const StageData& stage1);
template <typename T>
FinetuneResult<T> finetune_stage2(FinetuneResult<T> after_stage1, const AdaptationPlan& plan, const StageData& stage2);

template <typename T>
std::vector<backbone::GaussianPrediction> predict_all(const WealthModel<T>& model,
                                                      const std::vector<LabeledSample>& samples);

}  // namespace tempov::adapt
