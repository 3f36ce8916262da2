#include "tempov/pretrain/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>

#include "tempov/core/error.hpp"

namespace tempov::pretrain {

void PretrainConfig::validate() const {
  if (total_steps < 0 || warmup_steps < 0 || warmup_steps > total_steps) {
    throw ConfigError("pretrain config: need 0 <= warmup_steps <= total_steps");
  }
  if (w_dino < 0 || w_ibot < 0 || w_uniform < 0) throw ConfigError("pretrain config: loss weights must be >= 0");
  if (batch_size < 1) throw ConfigError("pretrain config: batch_size must be >= 1");
  if (!(momentum > 0 && momentum < 1)) throw ConfigError("pretrain config: momentum must lie in (0,1)");
  if (!(mask_ratio_min >= 0 && mask_ratio_min <= mask_ratio_max && mask_ratio_max <= 1)) {
    throw ConfigError("pretrain config: mask ratio range must satisfy 0 <= min <= max <= 1");
  }
  if (local_crop_size <= 0 || local_crop_size >= global_crop_size) {
    throw ConfigError("pretrain config: need 0 < local_crop_size < global_crop_size");
  }
  dino_head.validate();
  ibot_head.validate();
}

PretrainConfig PretrainConfig::toy() { return PretrainConfig{}; }

PretrainConfig PretrainConfig::paper() {
  PretrainConfig c;
  c.total_steps = 800000;
  c.warmup_steps = 10000;
  c.peak_lr = 5e-5;
  c.weight_decay = 0.04;
  c.batch_size = 64;
  c.global_crop_size = 224;
  c.local_crop_size = 96;
  return c;
}

void to_json(nlohmann::json& j, const PretrainConfig& c) {
  j = nlohmann::json{{"total_steps", c.total_steps},
                     {"warmup_steps", c.warmup_steps},
                     {"peak_lr", c.peak_lr},
                     {"weight_decay", c.weight_decay},
                     {"batch_size", c.batch_size},
                     {"mask_ratio_range", {c.mask_ratio_min, c.mask_ratio_max}},
                     {"loss_weights", {{"w_dino", c.w_dino}, {"w_ibot", c.w_ibot}, {"w_uniform", c.w_uniform}}},
                     {"global_crop_size", c.global_crop_size},
                     {"local_crop_size", c.local_crop_size},
                     {"momentum", c.momentum},
                     {"grad_clip", c.grad_clip},
                     {"uniformity_eps", c.uniformity_eps},
                     {"symmetrize", c.symmetrize},
                     {"random_roles", c.random_roles},
                     {"ibot_alignment", c.ibot_alignment == IbotAlignment::registered ? "registered" : "grid_index"},
                     {"seed", c.seed},
                     {"dino_head", c.dino_head},
                     {"ibot_head", c.ibot_head}};
}

void from_json(const nlohmann::json& j, PretrainConfig& c) {
  PretrainConfig d = j.value("preset", std::string("toy")) == "paper" ? PretrainConfig::paper() : PretrainConfig::toy();
  c = d;
  c.total_steps = j.value("total_steps", d.total_steps);
  c.warmup_steps = j.value("warmup_steps", d.warmup_steps);
  c.peak_lr = j.value("peak_lr", d.peak_lr);
  c.weight_decay = j.value("weight_decay", d.weight_decay);
  c.batch_size = j.value("batch_size", d.batch_size);
  if (j.contains("mask_ratio_range")) {
    c.mask_ratio_min = j.at("mask_ratio_range").at(0).get<double>();
    c.mask_ratio_max = j.at("mask_ratio_range").at(1).get<double>();
  }
  if (j.contains("loss_weights")) {
    const auto& w = j.at("loss_weights");
    c.w_dino = w.value("w_dino", d.w_dino);
    c.w_ibot = w.value("w_ibot", d.w_ibot);
    c.w_uniform = w.value("w_uniform", d.w_uniform);
  }
  c.global_crop_size = j.value("global_crop_size", d.global_crop_size);
  c.local_crop_size = j.value("local_crop_size", d.local_crop_size);
  c.momentum = j.value("momentum", d.momentum);
  c.grad_clip = j.value("grad_clip", d.grad_clip);
  c.uniformity_eps = j.value("uniformity_eps", d.uniformity_eps);
  c.symmetrize = j.value("symmetrize", d.symmetrize);
  c.random_roles = j.value("random_roles", d.random_roles);
  const std::string align = j.value("ibot_alignment", std::string("grid_index"));
  if (align != "grid_index" && align != "registered") throw ConfigError("unknown ibot_alignment '" + align + "'");
  c.ibot_alignment = align == "registered" ? IbotAlignment::registered : IbotAlignment::grid_index;
  c.seed = j.value("seed", d.seed);
  if (j.contains("dino_head")) c.dino_head = j.at("dino_head").get<backbone::ProjectionHeadConfig>();
  if (j.contains("ibot_head")) c.ibot_head = j.at("ibot_head").get<backbone::ProjectionHeadConfig>();
  c.ibot_head.kind = backbone::HeadKind::ibot;
  c.dino_head.kind = backbone::HeadKind::dino;
}

nlohmann::json to_json(const StepResult& r) {
  return nlohmann::json{{"step", r.step},
                        {"lr", r.lr},
                        {"loss_total", r.loss.total},
                        {"loss_dino", r.loss.dino},
                        {"loss_ibot", r.loss.ibot},
                        {"loss_uniform", r.loss.uniform},
                        {"grad_norm", r.grad_norm}};
}

template <typename T>
std::vector<NamedParam<T>> SslModel<T>::named_params() {
  std::vector<NamedParam<T>> out;
  visit([&out](const std::string& name, Param<T>& p) { out.push_back({name, &p}); });
  return out;
}

template <typename T>
void ema_update(TeacherStudentState<T>& state) {
  auto s = state.student.named_params();
  auto t = state.teacher.named_params();
  if (s.size() != t.size()) throw StateError("ema_update: teacher and student parameter lists differ");
  const double m = state.momentum;
  for (std::size_t k = 0; k < s.size(); ++k) {
    Param<T>& ps = *s[k].param;
    Param<T>& pt = *t[k].param;
    if (s[k].name != t[k].name || !ps.value.same_shape(pt.value)) {
      throw StateError("ema_update: shape mismatch at " + s[k].name);
    }
    for (std::size_t i = 0; i < ps.value.size(); ++i) {
      pt.value[i] = static_cast<T>(m * pt.value[i] + (1.0 - m) * ps.value[i]);
    }
  }
  ++state.step;
}

namespace {

template <typename T>
Matrix<T> repeat_row(const Matrix<T>& row, int times) {
  Matrix<T> out(times, row.cols());
  for (int r = 0; r < times; ++r) std::copy(row.row(0), row.row(0) + row.cols(), out.row(r));
  return out;
}

// One direction of the objective: teacher on `teacher_view`, student on the
// masked `student_view` plus the local crops.
template <typename T>
struct Direction {
  const data::ImageTile* teacher_view;
  const data::ImageTile* student_view;
  const std::vector<data::ImageTile>* locals;
  const std::vector<std::uint8_t>* mask;
};

}  // namespace

template <typename T>
Objective<T> build_objective(ad::Tape<T>& tape, SslModel<T>& student, const SslModel<T>& teacher,
                             std::span<const SampleViews> batch, std::span<const T> dino_center,
                             std::span<const T> ibot_center, const PretrainConfig& cfg, bool training) {
  using namespace ad;
  if (batch.empty()) throw InputError("empty pretraining batch");
  const auto& dcfg = cfg.dino_head;
  const auto& icfg = cfg.ibot_head;
  const T inv_ts_dino = static_cast<T>(1.0 / dcfg.student_temperature);
  const T inv_ts_ibot = static_cast<T>(1.0 / icfg.student_temperature);

  Objective<T> obj;
  obj.teacher_dino_mean.assign(dcfg.num_prototypes, 0.0);
  obj.teacher_ibot_mean.assign(icfg.num_prototypes, 0.0);
  int teacher_globals = 0, teacher_patches = 0;

  std::vector<Var> dino_terms, ibot_terms, globals;
  for (const SampleViews& sv : batch) {
    std::vector<Direction<T>> dirs{{&sv.views.global_t1, &sv.views.global_t2, &sv.views.local_t2, &sv.mask}};
    if (cfg.symmetrize) {
      if (sv.views.local_t1.size() != sv.views.local_t2.size() || sv.mask_t1.size() != sv.mask.size()) {
        throw ConfigError("symmetrized objective needs epoch-1 local crops and masks");
      }
      dirs.push_back({&sv.views.global_t2, &sv.views.global_t1, &sv.views.local_t1, &sv.mask_t1});
    }
    Rng drop_rng = make_rng(sv.drop_seed);
    for (const auto& dir : dirs) {
      // Teacher targets: constants from a separate value-only tape.
      Matrix<T> t_dist, t_patch_dist;
      {
        Tape<T> tt(false);
        const auto tv = teacher.encoder.forward(tt, *dir.teacher_view, backbone::EncodeOptions{});
        const Matrix<T>& zg = tt.value(teacher.dino.logits(tt, tv.global));
        const Matrix<T>& zp = tt.value(teacher.ibot.logits(tt, tv.patches));
        for (int j = 0; j < zg.cols(); ++j) obj.teacher_dino_mean[j] += zg[j];
        for (int r = 0; r < zp.rows(); ++r)
          for (int j = 0; j < zp.cols(); ++j) obj.teacher_ibot_mean[j] += zp(r, j);
        ++teacher_globals;
        teacher_patches += zp.rows();
        t_dist = backbone::head_distribution(zg, dcfg, backbone::HeadRole::teacher, dino_center);
        t_patch_dist = backbone::head_distribution(zp, icfg, backbone::HeadRole::teacher, ibot_center);
      }

      backbone::EncodeOptions so;
      so.training = training;
      so.rng = &drop_rng;
      so.mask = dir.mask;
      const auto sg = student.encoder.forward(tape, *dir.student_view, so);
      so.mask = nullptr;
      std::vector<Var> view_globals{sg.global};
      for (const auto& local : *dir.locals) view_globals.push_back(student.encoder.forward(tape, local, so).global);
      globals.push_back(sg.global);

      Var sdl = student.dino.logits(tape, concat_rows(tape, std::span<const Var>(view_globals)));
      const int nv = static_cast<int>(view_globals.size());
      std::vector<T> vw(nv, static_cast<T>(1.0 / nv));
      dino_terms.push_back(soft_cross_entropy(tape, sdl, repeat_row(t_dist, nv), inv_ts_dino, std::span<const T>(vw)));

      const int masked = static_cast<int>(std::count(dir.mask->begin(), dir.mask->end(), 1));
      if (masked > 0) {
        if (t_patch_dist.rows() != static_cast<int>(dir.mask->size())) {
          throw ShapeError("iBOT mask does not match the teacher patch grid");
        }
        std::vector<T> pw(dir.mask->size());
        for (std::size_t i = 0; i < pw.size(); ++i) pw[i] = (*dir.mask)[i] ? static_cast<T>(1.0 / masked) : T{0};
        Var spl = student.ibot.logits(tape, sg.patches);
        ibot_terms.push_back(soft_cross_entropy(tape, spl, t_patch_dist, inv_ts_ibot, std::span<const T>(pw)));
      }
    }
  }

  const T inv_terms = static_cast<T>(1.0 / dino_terms.size());
  auto mean_of = [&](const std::vector<Var>& terms, double& value) -> Var {
    if (terms.empty()) return {};
    Var s = terms[0];
    for (std::size_t i = 1; i < terms.size(); ++i) s = add(tape, s, terms[i]);
    s = scale(tape, s, inv_terms);
    value = tape.value(s)[0];
    return s;
  };
  Var l_dino = mean_of(dino_terms, obj.values.dino);
  Var l_ibot = mean_of(ibot_terms, obj.values.ibot);

  Var total = scale(tape, l_dino, static_cast<T>(cfg.w_dino));
  if (l_ibot.valid()) total = add(tape, total, scale(tape, l_ibot, static_cast<T>(cfg.w_ibot)));
  if (cfg.w_uniform > 0 || globals.size() >= 2) {
    if (globals.size() < 2) throw InputError("uniformity regularization needs a batch of at least 2");
    Var e = l2_normalize_rows(tape, concat_rows(tape, std::span<const Var>(globals)));
    Var lu = nn_uniformity(tape, e, static_cast<T>(cfg.uniformity_eps));
    obj.values.uniform = tape.value(lu)[0];
    total = add(tape, total, scale(tape, lu, static_cast<T>(cfg.w_uniform)));
  }
  obj.total = total;
  obj.values.total = tape.value(total)[0];
  for (auto& v : obj.teacher_dino_mean) v /= teacher_globals;
  for (auto& v : obj.teacher_ibot_mean) v /= std::max(teacher_patches, 1);
  return obj;
}

template <typename T>
Pretrainer<T>::Pretrainer(const backbone::EncoderConfig& enc, const PretrainConfig& cfg, const data::NormStats& stats)
    : cfg_(cfg) {
  cfg_.validate();
  Rng head_rng = make_rng(cfg_.seed, {0x68656164});
  state_.student.encoder = backbone::Encoder<T>(enc, derive_seed(cfg_.seed, {0x626b}));
  state_.student.encoder.set_norm_stats(stats);
  state_.student.dino = backbone::ProjectionHead<T>(cfg_.dino_head, enc.embed_dim, head_rng);
  state_.student.ibot = backbone::ProjectionHead<T>(cfg_.ibot_head, enc.embed_dim, head_rng);
  state_.teacher = state_.student;
  state_.momentum = cfg_.momentum;
  opt_ = AdamW<T>(state_.student.named_params());
  dino_center_.assign(cfg_.dino_head.num_prototypes, T{0});
  ibot_center_.assign(cfg_.ibot_head.num_prototypes, T{0});
}

template <typename T>
double Pretrainer<T>::learning_rate(long step) const {
  if (step < cfg_.warmup_steps) return cfg_.peak_lr * static_cast<double>(step) / cfg_.warmup_steps;
  return cfg_.peak_lr;
}

template <typename T>
std::vector<SampleViews> Pretrainer<T>::assemble(std::span<const data::BitemporalPair> batch, long step) const {
  std::vector<SampleViews> out(batch.size());
  const ViewOptions vo{cfg_.global_crop_size, cfg_.local_crop_size, cfg_.random_roles, cfg_.symmetrize,
                       cfg_.ibot_alignment == IbotAlignment::registered};
  const int k = state_.student.encoder.config().patch_size;
  const int grid = cfg_.global_crop_size / k;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Rng rng = make_rng(cfg_.seed, {static_cast<std::uint64_t>(step), i, 1});
    out[i].views = make_views(batch[i], vo, rng);
    const double ratio = cfg_.mask_ratio_min + uniform01(rng) * (cfg_.mask_ratio_max - cfg_.mask_ratio_min);
    out[i].mask = block_mask(grid, grid, ratio, rng);
    if (cfg_.symmetrize) out[i].mask_t1 = block_mask(grid, grid, ratio, rng);
    out[i].drop_seed = derive_seed(cfg_.seed, {static_cast<std::uint64_t>(step), i, 2});
  }
  return out;
}

template <typename T>
StepResult Pretrainer<T>::step(std::span<const data::BitemporalPair> batch) {
  const auto views = assemble(batch, state_.step);
  return step_views(views);
}

template <typename T>
StepResult Pretrainer<T>::step_views(std::span<const SampleViews> views) {
  StepResult res;
  res.step = state_.step;
  res.lr = learning_rate(state_.step);
  opt_.zero_grad();
  ad::Tape<T> tape(true);
  auto diagnose = [&](const std::string& what) {
    nlohmann::json snap = to_json(res);
    snap["error"] = what;
    throw NumericError("pretraining diverged: " + snap.dump());
  };
  Objective<T> obj;
  try {
    obj = build_objective<T>(tape, state_.student, state_.teacher, views, dino_center_, ibot_center_, cfg_, true);
  } catch (const NumericError& e) {
    diagnose(e.what());
  }
  res.loss = obj.values;
  if (!std::isfinite(obj.values.total)) diagnose("non-finite loss");
  tape.backward(obj.total);
  res.grad_norm = opt_.grad_norm();
  if (!std::isfinite(res.grad_norm)) diagnose("non-finite gradient");
  opt_.clip_grad_norm(cfg_.grad_clip);
  opt_.step(res.lr, cfg_.weight_decay);
  ema_update(state_);
  const double cm_d = cfg_.dino_head.center_momentum;
  const double cm_i = cfg_.ibot_head.center_momentum;
  for (std::size_t j = 0; j < dino_center_.size(); ++j) {
    dino_center_[j] = static_cast<T>(cm_d * dino_center_[j] + (1 - cm_d) * obj.teacher_dino_mean[j]);
  }
  for (std::size_t j = 0; j < ibot_center_.size(); ++j) {
    ibot_center_[j] = static_cast<T>(cm_i * ibot_center_[j] + (1 - cm_i) * obj.teacher_ibot_mean[j]);
  }
  return res;
}

template <typename T>
void Pretrainer<T>::run(std::span<const data::BitemporalPair> pairs,
                        const std::function<void(const StepResult&)>& log) {
  if (pairs.empty()) throw DataError("no bi-temporal pairs to pretrain on");
  const int bs = std::min<int>(cfg_.batch_size, static_cast<int>(pairs.size()));
  auto draw = [&](long step) {
    Rng rng = make_rng(cfg_.seed, {static_cast<std::uint64_t>(step), 0xba7c4});
    std::vector<std::size_t> idx(pairs.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::vector<data::BitemporalPair> batch;
    for (int i = 0; i < bs; ++i) {
      const int j = uniform_int(rng, i, static_cast<int>(idx.size()) - 1);
      std::swap(idx[i], idx[j]);
      batch.push_back(pairs[idx[i]]);
    }
    return assemble(batch, step);
  };
  const long first = state_.step;
  const long last = cfg_.total_steps;
  if (first >= last) return;
  std::future<std::vector<SampleViews>> next = std::async(std::launch::async, draw, first);
  for (long s = first; s < last; ++s) {
    std::vector<SampleViews> views = next.get();
    if (s + 1 < last) next = std::async(std::launch::async, draw, s + 1);
    const StepResult r = step_views(views);
    if (log) log(r);
  }
}

template struct SslModel<float>;
template struct SslModel<double>;
template void ema_update<float>(TeacherStudentState<float>&);
template void ema_update<double>(TeacherStudentState<double>&);
template Objective<float> build_objective<float>(ad::Tape<float>&, SslModel<float>&, const SslModel<float>&,
                                                 std::span<const SampleViews>, std::span<const float>,
                                                 std::span<const float>, const PretrainConfig&, bool);
template Objective<double> build_objective<double>(ad::Tape<double>&, SslModel<double>&, const SslModel<double>&,
                                                   std::span<const SampleViews>, std::span<const double>,
                                                   std::span<const double>, const PretrainConfig&, bool);
template class Pretrainer<float>;
template class Pretrainer<double>;

}  // namespace tempov::pretrain
