#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tempov/backbone/encoder.hpp"
#include "tempov/backbone/heads.hpp"
#include "tempov/core/optim.hpp"
#include "tempov/pretrain/views.hpp"

namespace tempov::pretrain {

// How teacher and student patch grids are paired for iBOT: by grid index of
// two independent crops, or through a shared (registered) crop window.
enum class IbotAlignment { grid_index, registered };

struct PretrainConfig {
  long total_steps = 2000;
  long warmup_steps = 100;
  double peak_lr = 5e-4;
  double weight_decay = 0.04;
  int batch_size = 16;
  double mask_ratio_min = 0.1;
  double mask_ratio_max = 0.5;
  double w_dino = 1.0;
  double w_ibot = 1.0;
  double w_uniform = 0.1;
  int global_crop_size = 32;
  int local_crop_size = 16;
  double momentum = 0.992;
  double grad_clip = 3.0;
  double uniformity_eps = 1e-8;
  bool symmetrize = false;
  bool random_roles = true;  // draw which season of a pair the teacher sees
  IbotAlignment ibot_alignment = IbotAlignment::grid_index;
  std::uint64_t seed = 0;
  backbone::ProjectionHeadConfig dino_head{};
  backbone::ProjectionHeadConfig ibot_head{backbone::HeadKind::ibot};

  void validate() const;

  static PretrainConfig toy();
  // Published recipe (800k steps, 224/96 crops); kept for reference only.
  static PretrainConfig paper();
};

void to_json(nlohmann::json& j, const PretrainConfig& c);
void from_json(const nlohmann::json& j, PretrainConfig& c);

// Backbone plus both projection heads; the unit that is EMA-averaged.
template <typename T>
struct SslModel {
  backbone::Encoder<T> encoder;
  backbone::ProjectionHead<T> dino;
  backbone::ProjectionHead<T> ibot;

  template <typename F>
  void visit(F&& f) {
    encoder.visit(f);
    dino.visit("dino_head", f);
    ibot.visit("ibot_head", f);
  }

  std::vector<NamedParam<T>> named_params();
};

template <typename T>
struct TeacherStudentState {
  SslModel<T> student;
  SslModel<T> teacher;
  double momentum = 0.992;
  long step = 0;
};

// teacher ← m·teacher + (1−m)·student, step += 1. Throws StateError when the
// two models do not have identical parameter shapes.
template <typename T>
void ema_update(TeacherStudentState<T>& state);

// Views plus the student's epoch-2 mask for one pair.
struct SampleViews {
  ViewSet views;
  std::vector<std::uint8_t> mask;
  std::vector<std::uint8_t> mask_t1;  // symmetrized objective only
  std::uint64_t drop_seed = 0;
};

struct LossBreakdown {
  double total = 0, dino = 0, ibot = 0, uniform = 0;
};

struct StepResult {
  long step = 0;
  double lr = 0;
  LossBreakdown loss;
  double grad_norm = 0;
};

nlohmann::json to_json(const StepResult& r);

// Builds the weighted pretraining loss for a batch on `tape` and returns its
// handle. Teacher targets and centers are constants. `teacher_dino_mean` /
// `teacher_ibot_mean` receive the batch mean teacher logits (for centering).
template <typename T>
struct Objective {
  ad::Var total;
  LossBreakdown values;
  std::vector<double> teacher_dino_mean;
  std::vector<double> teacher_ibot_mean;
};

template <typename T>
Objective<T> build_objective(ad::Tape<T>& tape, SslModel<T>& student, const SslModel<T>& teacher,
                             std::span<const SampleViews> batch, std::span<const T> dino_center,
                             std::span<const T> ibot_center, const PretrainConfig& cfg, bool training);

template <typename T>
class Pretrainer {
 public:
  Pretrainer(const backbone::EncoderConfig& enc, const PretrainConfig& cfg, const data::NormStats& stats);
  // The optimizer holds pointers into the student.
  Pretrainer(const Pretrainer&) = delete;
  Pretrainer& operator=(const Pretrainer&) = delete;

  // Linear warm-up from zero, then constant.
  double learning_rate(long step) const;

  std::vector<SampleViews> assemble(std::span<const data::BitemporalPair> batch, long step) const;

  // One optimizer step on the student plus one EMA update. Throws NumericError
  // carrying a JSON diagnostic snapshot when the loss is not finite.
  StepResult step(std::span<const data::BitemporalPair> batch);
  StepResult step_views(std::span<const SampleViews> views);

  // Runs cfg.total_steps steps over `pairs`, drawing batches with a seeded
  // stream. Batch assembly for step s+1 overlaps step s.
  void run(std::span<const data::BitemporalPair> pairs, const std::function<void(const StepResult&)>& log);

  TeacherStudentState<T>& state() noexcept { return state_; }
  const TeacherStudentState<T>& state() const noexcept { return state_; }
  const PretrainConfig& config() const noexcept { return cfg_; }
  std::span<const T> dino_center() const noexcept { return dino_center_; }
  std::span<const T> ibot_center() const noexcept { return ibot_center_; }

 private:
  PretrainConfig cfg_;
  TeacherStudentState<T> state_;
  AdamW<T> opt_;
  std::vector<T> dino_center_;
  std::vector<T> ibot_center_;
};

}  // namespace tempov::pretrain
