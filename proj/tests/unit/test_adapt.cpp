#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "common.hpp"
#include "tempov/adapt/finetune.hpp"
#include "tempov/adapt/lora.hpp"
#include "tempov/adapt/nll.hpp"
#include "tempov/backbone/encoder.hpp"
#include "tempov/cli/workflow.hpp"
#include "tempov/core/checkpoint.hpp"

using namespace tempov;

namespace {

template <typename M>
double max_abs_diff(const M& a, const M& b) {
  double w = 0;
  for (std::size_t i = 0; i < a.size(); ++i) w = std::max(w, std::fabs(a[i] - b[i]));
  return w;
}

backbone::Encoder<double> small_encoder() {
  auto cfg = backbone::EncoderConfig::gradcheck();
  cfg.embed_dim = 32;
  cfg.mlp_dim = 64;
  return backbone::Encoder<double>(cfg, 3);
}

std::vector<adapt::LabeledSample> labeled(const std::vector<data::ImageTile>& tiles) {
  std::vector<adapt::LabeledSample> out;
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    double m = 0;
    for (float p : tiles[i].pixels) m += p;
    m /= tiles[i].pixels.size();
    out.push_back({&tiles[i], 10 * (m - 0.25), "AAA", 30.0 + 0.2 * i, 0.1 * (i % 7)});
  }
  return out;
}

}  // namespace

TEST_CASE("lora with zero B leaves the encoder output unchanged") {
  auto enc = small_encoder();
  Rng rng = make_rng(1);
  const auto tile = testing::random_tile(8, rng, "x");
  const auto before = enc.encode(tile);
  adapt::inject_lora(enc, adapt::LoraConfig{.rank = 4}, 7);
  const auto after = enc.encode(tile);
  CHECK(max_abs_diff(before.global_embedding, after.global_embedding) <= 1e-12);
  CHECK(max_abs_diff(before.patch_embeddings, after.patch_embeddings) <= 1e-12);
}

TEST_CASE("lora trains only the adapters, in the closed-form count") {
  auto enc = small_encoder();
  const adapt::LoraConfig lc{.rank = 4};
  adapt::inject_lora(enc, lc, 7);
  const auto& c = enc.config();
  CHECK(adapt::count_trainable(enc) == adapt::lora_parameter_count(c, lc));
  CHECK(adapt::lora_parameter_count(c, lc) == std::size_t(c.depth * 2 * (4 * c.embed_dim + c.embed_dim * 4)));
}

TEST_CASE("lora rank bounds") {
  auto enc = small_encoder();
  CHECK_THROWS_AS(adapt::inject_lora(enc, adapt::LoraConfig{.rank = 9}, 1), ConfigError);
  CHECK_THROWS_AS(adapt::inject_lora(enc, adapt::LoraConfig{.rank = 0}, 1), ConfigError);
  CHECK_NOTHROW(adapt::inject_lora(enc, adapt::LoraConfig{.rank = 8}, 1));
}

TEST_CASE("merged lora weights reproduce the adapted encoder") {
  auto enc = small_encoder();
  adapt::inject_lora(enc, adapt::LoraConfig{.rank = 4}, 7);
  Rng rng = make_rng(2);
  enc.visit([&](const std::string& name, Param<double>& p) {
    if (name.find("lora_b") != std::string::npos)
      for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] = normal(rng, 0.0, 0.3);
  });
  const auto merged = adapt::merge_lora(enc);
  const auto tile = testing::random_tile(8, rng, "x");
  const auto a = enc.encode(tile), b = merged.encode(tile);
  const double moved = max_abs_diff(a.global_embedding, small_encoder().encode(tile).global_embedding);
  CHECK(moved > 1e-3);
  CHECK(max_abs_diff(a.global_embedding, b.global_embedding) < 1e-10);
}

TEST_CASE("gaussian nll law and attenuation") {
  using adapt::GaussianPrediction;
  CHECK(adapt::gaussian_nll(0.0, GaussianPrediction{0.0, 1.0}) == 0.0);
  CHECK(adapt::gaussian_nll(1.0, GaussianPrediction{0.0, 1.0}) == 1.0);
  const auto g = adapt::nll_gradient(1.0, GaussianPrediction{0.5, 2.0});
  CHECK(g.d_mean == doctest::Approx(2 * (0.5 - 1.0) / 2.0));
  CHECK(g.d_logvar == doctest::Approx(1 - 0.25 / 2.0));

  Rng rng = make_rng(3);
  std::vector<double> y;
  std::vector<GaussianPrediction> pred;
  for (int i = 0; i < 40; ++i) {
    y.push_back(normal(rng));
    pred.push_back({normal(rng), 0.05 + uniform01(rng) * 3});
  }
  const auto rep = adapt::gradient_attenuation_check(y, pred);
  CHECK(rep.passed);
  CHECK(rep.monotone);
  CHECK(rep.max_relative_error < 1e-6);
}

TEST_CASE("few-shot draws are sized, seeded and nested") {
  Rng rng = make_rng(4);
  std::vector<data::ImageTile> tiles;
  for (int i = 0; i < 120; ++i) tiles.push_back(testing::random_tile(8, rng, "c" + std::to_string(i)));
  const auto all = labeled(tiles);
  auto ids = [](const std::vector<adapt::LabeledSample>& v) {
    std::set<const data::ImageTile*> s;
    for (const auto& x : v) s.insert(x.tile);
    return s;
  };
  std::set<const data::ImageTile*> prev;
  for (double f : {0.05, 0.1, 0.25, 0.5, 1.0}) {
    const auto sub = adapt::few_shot_subsample(all, f, 18.0, 11);
    CHECK(sub.size() == std::size_t(std::max(1L, std::lround(f * all.size()))));
    const auto cur = ids(sub);
    CHECK(std::includes(cur.begin(), cur.end(), prev.begin(), prev.end()));
    prev = cur;
  }
  CHECK(ids(adapt::few_shot_subsample(all, 0.25, 18.0, 11)) == ids(adapt::few_shot_subsample(all, 0.25, 18.0, 11)));
  CHECK(ids(adapt::few_shot_subsample(all, 0.25, 18.0, 11)) != ids(adapt::few_shot_subsample(all, 0.25, 18.0, 12)));
  CHECK_THROWS_AS(adapt::few_shot_subsample(all, 0.0, 18.0, 1), ConfigError);
}

TEST_CASE("validation split keeps whole blocks apart") {
  Rng rng = make_rng(5);
  std::vector<data::ImageTile> tiles;
  for (int i = 0; i < 80; ++i) tiles.push_back(testing::random_tile(8, rng, "c" + std::to_string(i)));
  const auto d = adapt::split_validation(labeled(tiles), 0.2, 18.0, 3);
  CHECK(d.train.size() + d.val.size() == 80);
  CHECK_FALSE(d.val.empty());
  std::set<std::pair<long, long>> tb;
  for (const auto& s : d.train) tb.insert({std::lround(s.lon * 1e6), std::lround(s.lat * 1e6)});
  for (const auto& s : d.val) CHECK(tb.count({std::lround(s.lon * 1e6), std::lround(s.lat * 1e6)}) == 0);
}

TEST_CASE("two-stage fine-tuning runs end to end on a tiny model") {
  auto pairs = testing::random_pairs(4, 8, 6);
  auto pcfg = testing::tiny_pretrain();
  pretrain::Pretrainer<float> tr(backbone::EncoderConfig::gradcheck(), pcfg, testing::stats_of(pairs));
  const Checkpoint ck = cli::pretrained_checkpoint(tr);

  Rng rng = make_rng(7);
  std::vector<data::ImageTile> tiles;
  for (int i = 0; i < 60; ++i) tiles.push_back(testing::random_tile(8, rng, "c" + std::to_string(i)));
  const auto all = labeled(tiles);
  const adapt::StageData s1{{all.begin(), all.begin() + 30}, {all.begin() + 30, all.begin() + 40}};
  const adapt::StageData s2{{all.begin() + 40, all.end()}, {all.begin() + 30, all.begin() + 40}};

  adapt::AdaptationPlan plan;
  plan.lora.rank = 2;
  plan.stage1.epochs = 3;
  plan.stage1.lr = 5e-3;
  plan.stage2 = plan.stage1;
  plan.stage2->fraction = 0.5;
  plan.batch_size = 8;

  const auto res = adapt::finetune<float>(ck, plan, s1, &s2);
  CHECK(res.report.n_train[0] == 30);
  CHECK(res.report.n_train[1] == 10);
  CHECK(res.report.n_val[1] == 10);
  CHECK(res.report.trainable_params ==
        adapt::lora_parameter_count(backbone::EncoderConfig::gradcheck(), plan.lora) + 2 * (16 + 1));
  CHECK(res.report.best_epoch[0] >= 0);
  for (const auto& p : adapt::predict_all(res.model, s2.val)) {
    CHECK(std::isfinite(p.mean));
    CHECK(p.variance > 0);
  }

  // A checkpoint round trip predicts the same thing.
  const auto back = adapt::WealthModel<float>::from_checkpoint(res.model.to_checkpoint());
  CHECK(back.predict(tiles[0]).mean == res.model.predict(tiles[0]).mean);

  // Stage 1 then stage 2 equals the combined call.
  const auto split = adapt::finetune_stage2<float>(adapt::finetune_stage1<float>(ck, plan, s1), plan, s2);
  CHECK(split.model.predict(tiles[1]).mean == res.model.predict(tiles[1]).mean);

  plan.stage2.reset();
  CHECK_THROWS_AS(adapt::finetune<float>(ck, plan, adapt::StageData{}), DataError);
}

TEST_CASE("adaptation plans round trip through json") {
  adapt::AdaptationPlan p;
  p.direction = adapt::Direction::hindcast;
  p.stage1.years = {2025};
  p.stage2 = adapt::StageSpec{{"AAA"}, {2015}, 0.25, 7, 1e-2};
  nlohmann::json j = p;
  const auto back = j.get<adapt::AdaptationPlan>();
  CHECK(nlohmann::json(back) == j);
  j["lora"]["rank"] = -1;
  CHECK_THROWS(j.get<adapt::AdaptationPlan>().validate());
}
