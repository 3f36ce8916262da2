#include "tempov/adapt/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "tempov/autodiff/ops.hpp"
#include "tempov/backbone/serialize.hpp"
#include "tempov/core/error.hpp"
#include "tempov/core/optim.hpp"
#include "tempov/eval/folds.hpp"
#include "tempov/eval/metrics.hpp"

namespace tempov::adapt {

using nlohmann::json;

template <typename T>
backbone::GaussianPrediction WealthModel<T>::predict(const data::ImageTile& tile) const {
  const auto emb = encoder.encode(tile);
  const auto p = backbone::predict_wealth(std::span<const T>(emb.global_embedding), head);
  return {p.mean * target_sd + target_mean, p.variance * target_sd * target_sd};
}

template <typename T>
Checkpoint WealthModel<T>::to_checkpoint() const {
  Checkpoint ck;
  ck.manifest["format"] = "tempov-checkpoint";
  ck.manifest["kind"] = "adapted";
  ck.manifest["target_standardization"] = {{"mean", target_mean}, {"sd", target_sd}};
  backbone::store_encoder(ck, encoder);
  backbone::store_regression_head(ck, head);
  return ck;
}

template <typename T>
WealthModel<T> WealthModel<T>::from_checkpoint(const Checkpoint& ck) {
  if (ck.manifest.value("kind", std::string()) != "adapted") {
    throw IoError("checkpoint is not an adapted wealth model");
  }
  WealthModel<T> m;
  m.encoder = backbone::restore_encoder<T>(ck);
  m.head = backbone::restore_regression_head<T>(ck, m.encoder.config().embed_dim);
  m.target_mean = ck.manifest.at("target_standardization").at("mean").get<double>();
  m.target_sd = ck.manifest.at("target_standardization").at("sd").get<double>();
  return m;
}

std::string direction_name(Direction d) {
  switch (d) {
    case Direction::nowcast: return "nowcast";
    case Direction::hindcast: return "hindcast";
    case Direction::no_census: return "no-census";
  }
  return "nowcast";
}

void AdaptationPlan::validate() const {
  auto check_stage = [](const StageSpec& s, const char* name) {
    if (!(s.fraction > 0 && s.fraction <= 1)) throw ConfigError(std::string(name) + ": fraction must lie in (0, 1]");
    if (s.epochs < 1) throw ConfigError(std::string(name) + ": epochs must be >= 1");
    if (!(s.lr > 0)) throw ConfigError(std::string(name) + ": lr must be > 0");
  };
  check_stage(stage1, "stage1");
  if (stage2) check_stage(*stage2, "stage2");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (!(val_fraction > 0 && val_fraction < 1)) throw ConfigError("val_fraction must lie in (0, 1)");
  if (!(block_km > 0)) throw ConfigError("block_km must be > 0");
  if (lora.rank < 1) throw ConfigError("LoRA rank must be >= 1");
}

namespace {

json stage_json(const StageSpec& s) {
  return {{"countries", s.countries}, {"years", s.years}, {"fraction", s.fraction}, {"epochs", s.epochs}, {"lr", s.lr}};
}

StageSpec stage_from(const json& j) {
  StageSpec s;
  s.countries = j.value("countries", std::vector<std::string>{});
  s.years = j.value("years", std::vector<int>{});
  s.fraction = j.value("fraction", 1.0);
  s.epochs = j.value("epochs", 50);
  s.lr = j.value("lr", 1e-3);
  return s;
}

}  // namespace

void to_json(json& j, const AdaptationPlan& p) {
  j = {{"direction", direction_name(p.direction)},
       {"stage1", stage_json(p.stage1)},
       {"stage2", p.stage2 ? stage_json(*p.stage2) : json(nullptr)},
       {"lora", p.lora},
       {"batch_size", p.batch_size},
       {"patience", p.patience},
       {"weight_decay", p.weight_decay},
       {"grad_clip", p.grad_clip},
       {"val_fraction", p.val_fraction},
       {"block_km", p.block_km},
       {"reinit_adapters", p.reinit_adapters},
       {"seed", p.seed}};
}

void from_json(const json& j, AdaptationPlan& p) {
  const AdaptationPlan d;
  const std::string dir = j.value("direction", std::string("nowcast"));
  if (dir == "nowcast") {
    p.direction = Direction::nowcast;
  } else if (dir == "hindcast") {
    p.direction = Direction::hindcast;
  } else if (dir == "no-census" || dir == "no_census") {
    p.direction = Direction::no_census;
  } else {
    throw ConfigError("unknown adaptation direction '" + dir + "'");
  }
  if (!j.contains("stage1")) throw ConfigError("adaptation plan needs a stage1 selector");
  p.stage1 = stage_from(j.at("stage1"));
  if (j.contains("stage2") && !j.at("stage2").is_null()) {
    p.stage2 = stage_from(j.at("stage2"));
  } else {
    p.stage2.reset();
  }
  p.lora = j.value("lora", d.lora);
  p.batch_size = j.value("batch_size", d.batch_size);
  p.patience = j.value("patience", d.patience);
  p.weight_decay = j.value("weight_decay", d.weight_decay);
  p.grad_clip = j.value("grad_clip", d.grad_clip);
  p.val_fraction = j.value("val_fraction", d.val_fraction);
  p.block_km = j.value("block_km", d.block_km);
  p.reinit_adapters = j.value("reinit_adapters", d.reinit_adapters);
  p.seed = j.value("seed", d.seed);
}

json to_json(const FinetuneReport& r) {
  json epochs = json::array();
  for (const auto& e : r.epochs) {
    epochs.push_back(
        {{"stage", e.stage}, {"epoch", e.epoch}, {"lr", e.lr}, {"train_loss", e.train_loss}, {"val_r2", e.val_r2}});
  }
  return {{"epochs", epochs},          {"best_epoch", r.best_epoch}, {"best_val_r2", r.best_val_r2},
          {"n_train", r.n_train},      {"n_val", r.n_val},           {"trainable_params", r.trainable_params}};
}

namespace {

using Blocks = std::map<std::pair<std::string, std::pair<long, long>>, std::vector<int>>;

Blocks group_blocks(const std::vector<LabeledSample>& samples, double block_km) {
  Blocks b;
  for (int i = 0; i < static_cast<int>(samples.size()); ++i) {
    b[{samples[i].country, eval::block_of(samples[i].lon, samples[i].lat, block_km)}].push_back(i);
  }
  return b;
}

}  // namespace

std::vector<LabeledSample> few_shot_subsample(const std::vector<LabeledSample>& samples, double fraction,
                                              double block_km, std::uint64_t seed) {
  if (!(fraction > 0 && fraction <= 1)) throw ConfigError("few-shot fraction must lie in (0, 1]");
  if (samples.empty()) return {};
  if (fraction == 1.0) return samples;
  const std::size_t n = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(fraction * samples.size())));
  Rng rng = make_rng(seed, {0xfe5});
  std::vector<std::vector<int>> strata;
  for (auto& [key, members] : group_blocks(samples, block_km)) {
    std::shuffle(members.begin(), members.end(), rng);
    strata.push_back(members);
  }
  std::shuffle(strata.begin(), strata.end(), rng);
  std::vector<int> picked;
  for (std::size_t round = 0; picked.size() < n; ++round)
    for (const auto& s : strata) {
      if (round < s.size()) picked.push_back(s[round]);
      if (picked.size() == n) break;
    }
  std::sort(picked.begin(), picked.end());
  std::vector<LabeledSample> out;
  for (int i : picked) out.push_back(samples[i]);
  return out;
}

StageData split_validation(const std::vector<LabeledSample>& samples, double val_fraction, double block_km,
                           std::uint64_t seed) {
  StageData d;
  if (samples.empty()) return d;
  std::vector<std::vector<int>> blocks;
  for (auto& [key, members] : group_blocks(samples, block_km)) blocks.push_back(members);
  Rng rng = make_rng(seed, {0x5a11d});
  std::shuffle(blocks.begin(), blocks.end(), rng);
  const std::size_t target = static_cast<std::size_t>(std::lround(val_fraction * samples.size()));
  std::vector<char> is_val(samples.size(), 0);
  std::size_t taken = 0;
  for (const auto& b : blocks) {
    if (taken >= target || taken + b.size() >= samples.size()) break;
    for (int i : b) is_val[i] = 1;
    taken += b.size();
  }
  for (std::size_t i = 0; i < samples.size(); ++i) (is_val[i] ? d.val : d.train).push_back(samples[i]);
  return d;
}

template <typename T>
WealthModel<T> prepare_model(const Checkpoint& pretrained, const AdaptationPlan& plan) {
  WealthModel<T> m;
  m.encoder = backbone::restore_encoder<T>(pretrained);
  if (!pretrained.manifest.value("lora", json()).is_null()) {
    throw ConfigError("expected a pretrained checkpoint without adapters");
  }
  inject_lora(m.encoder, plan.lora, derive_seed(plan.seed, {0x10ba}));
  m.head = backbone::RegressionHead<T>(m.encoder.config().embed_dim);
  return m;
}

template <typename T>
std::vector<backbone::GaussianPrediction> predict_all(const WealthModel<T>& model,
                                                      const std::vector<LabeledSample>& samples) {
  std::vector<backbone::GaussianPrediction> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(model.predict(*s.tile));
  return out;
}

namespace {

template <typename T>
double score_r2(const WealthModel<T>& model, const std::vector<LabeledSample>& samples) {
  std::vector<double> y, yhat;
  for (const auto& s : samples) {
    y.push_back(s.y);
    yhat.push_back(model.predict(*s.tile).mean);
  }
  try {
    return eval::r_squared(y, yhat);
  } catch (const MetricError&) {
    return -INFINITY;
  }
}

}  // namespace

template <typename T>
void run_stage(WealthModel<T>& model, const StageSpec& spec, const AdaptationPlan& plan, const StageData& data,
               int stage, FinetuneReport& report) {
  if (data.train.empty()) throw DataError("stage " + std::to_string(stage) + " has no training labels");
  std::vector<NamedParam<T>> params;
  model.visit([&](const std::string& name, Param<T>& p) {
    if (p.trainable) params.push_back({name, &p});
  });
  AdamW<T> opt(params);
  const std::vector<LabeledSample>& val = data.val.size() >= 2 ? data.val : data.train;

  auto snapshot = [&] {
    std::vector<Matrix<T>> s;
    for (const auto& p : params) s.push_back(p.param->value);
    return s;
  };
  const int idx = stage - 1;
  report.n_train[idx] = static_cast<int>(data.train.size());
  report.n_val[idx] = static_cast<int>(data.val.size());

  double best = score_r2(model, val);
  auto best_params = snapshot();
  report.best_epoch[idx] = 0;
  report.best_val_r2[idx] = best;
  report.epochs.push_back({stage, 0, 0.0, NAN, best});

  const int n = static_cast<int>(data.train.size());
  const int bs = std::min(plan.batch_size, n);
  const int batches = (n + bs - 1) / bs;
  const long total = static_cast<long>(spec.epochs) * batches;
  const T floor = static_cast<T>(model.head.variance_floor);
  long step = 0;
  int since_best = 0;
  std::vector<int> order(n);
  for (int epoch = 1; epoch <= spec.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng = make_rng(plan.seed, {0xe90c, static_cast<std::uint64_t>(stage), static_cast<std::uint64_t>(epoch)});
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    double lr = spec.lr;
    for (int b = 0; b < batches; ++b) {
      const int lo = b * bs, hi = std::min(n, lo + bs);
      ad::Tape<T> tape(true);
      std::vector<ad::Var> globals;
      std::vector<T> ys;
      for (int i = lo; i < hi; ++i) {
        const auto& s = data.train[order[i]];
        globals.push_back(model.encoder.forward(tape, *s.tile, backbone::EncodeOptions{}).global);
        ys.push_back(static_cast<T>((s.y - model.target_mean) / model.target_sd));
      }
      const ad::Var emb = ad::concat_rows(tape, std::span<const ad::Var>(globals));
      const auto [mean, raw] = model.head.forward(tape, emb);
      const ad::Var loss = ad::gaussian_nll(tape, mean, raw, std::span<const T>(ys), floor);
      const double value = tape.value(loss)[0];
      if (!std::isfinite(value)) {
        throw NumericError("fine-tuning diverged: " +
                           json{{"stage", stage}, {"epoch", epoch}, {"batch", b}, {"loss", value}}.dump());
      }
      opt.zero_grad();
      tape.backward(loss);
      opt.clip_grad_norm(plan.grad_clip);
      lr = spec.lr * 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(step) / static_cast<double>(total)));
      opt.step(lr, plan.weight_decay);
      ++step;
      loss_sum += value * (hi - lo);
    }
    const double r2 = score_r2(model, val);
    report.epochs.push_back({stage, epoch, lr, loss_sum / n, r2});
    if (r2 > best) {
      best = r2;
      best_params = snapshot();
      report.best_epoch[idx] = epoch;
      report.best_val_r2[idx] = r2;
      since_best = 0;
    } else if (++since_best >= plan.patience) {
      break;
    }
  }
  for (std::size_t k = 0; k < params.size(); ++k) params[k].param->value = best_params[k];
}

namespace {

StageData prepare_stage(const StageData& in, const StageSpec& spec, const AdaptationPlan& plan, std::uint64_t tag) {
  StageData d = in.val.empty() ? split_validation(in.train, plan.val_fraction, plan.block_km,
                                                  derive_seed(plan.seed, {tag}))
                               : in;
  d.train = few_shot_subsample(d.train, spec.fraction, plan.block_km, derive_seed(plan.seed, {tag, 1}));
  return d;
}

}  // namespace

template <typename T>
FinetuneResult<T> finetune_stage1(const Checkpoint& pretrained, const AdaptationPlan& plan, const StageData& stage1) {
  plan.validate();
  if (stage1.train.empty()) throw DataError("stage-1 label set is empty");

  FinetuneResult<T> res{prepare_model<T>(pretrained, plan), {}};
  WealthModel<T>& m = res.model;
  const StageData d1 = prepare_stage(stage1, plan.stage1, plan, 1);
  double mean = 0, var = 0;
  for (const auto& s : d1.train) mean += s.y;
  mean /= d1.train.size();
  for (const auto& s : d1.train) var += (s.y - mean) * (s.y - mean);
  var /= d1.train.size();
  m.target_mean = mean;
  m.target_sd = var > 0 ? std::sqrt(var) : 1.0;

  std::size_t trainable = count_trainable(m.encoder);
  m.head.visit("regression", [&](const std::string&, Param<T>& p) { trainable += p.value.size(); });
  const std::size_t expected =
      lora_parameter_count(m.encoder.config(), plan.lora) + 2 * (m.encoder.config().embed_dim + 1);
  if (trainable != expected) {
    throw StateError("trainable parameter count " + std::to_string(trainable) + " differs from " +
                     std::to_string(expected));
  }
  res.report.trainable_params = trainable;
  run_stage(m, plan.stage1, plan, d1, 1, res.report);
  return res;
}

template <typename T>
FinetuneResult<T> finetune_stage2(FinetuneResult<T> after_stage1, const AdaptationPlan& plan, const StageData& stage2) {
  plan.validate();
  if (!plan.stage2) throw ConfigError("plan has no stage 2");
  if (stage2.train.empty()) throw DataError("stage-2 label set is empty");
  auto& m = after_stage1.model;
  if (plan.reinit_adapters) inject_lora(m.encoder, plan.lora, derive_seed(plan.seed, {0x10ba, 2}));
  run_stage(m, *plan.stage2, plan, prepare_stage(stage2, *plan.stage2, plan, 2), 2, after_stage1.report);
  return after_stage1;
}

template <typename T>
FinetuneResult<T> finetune(const Checkpoint& pretrained, const AdaptationPlan& plan, const StageData& stage1,
                           const StageData* stage2) {
  if (plan.stage2 && (!stage2 || stage2->train.empty())) throw DataError("stage-2 label set is empty");
  auto res = finetune_stage1<T>(pretrained, plan, stage1);
  if (plan.stage2) res = finetune_stage2<T>(std::move(res), plan, *stage2);
  return res;
}

#define TEMPOV_INSTANTIATE(T)                                                                                 \
  template struct WealthModel<T>;                                                                             \
  template WealthModel<T> prepare_model<T>(const Checkpoint&, const AdaptationPlan&);                         \
  template void run_stage<T>(WealthModel<T>&, const StageSpec&, const AdaptationPlan&, const StageData&, int, \
                             FinetuneReport&);                                                                \
  template FinetuneResult<T> finetune<T>(const Checkpoint&, const AdaptationPlan&, const StageData&,          \
                                         const StageData*);                                                   \
  template FinetuneResult<T> finetune_stage1<T>(const Checkpoint&, const AdaptationPlan&, const StageData&);  \
  template FinetuneResult<T> finetune_stage2<T>(FinetuneResult<T>, const AdaptationPlan&, const StageData&);  \
  template std::vector<backbone::GaussianPrediction> predict_all<T>(const WealthModel<T>&,                    \
                                                                    const std::vector<LabeledSample>&);

TEMPOV_INSTANTIATE(float)
TEMPOV_INSTANTIATE(double)
#undef TEMPOV_INSTANTIATE

}  // namespace tempov::adapt
