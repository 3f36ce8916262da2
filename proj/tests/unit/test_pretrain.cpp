#include <doctest.h>

#include <cmath>

#include "common.hpp"
#include "tempov/backbone/config.hpp"
#include "tempov/pretrain/losses.hpp"

using namespace tempov;

TEST_CASE("a training step moves the teacher only through the EMA") {
  auto pairs = testing::random_pairs(4, 8, 1);
  const auto cfg = testing::tiny_pretrain();
  pretrain::Pretrainer<double> tr(backbone::EncoderConfig::gradcheck(), cfg, testing::stats_of(pairs));
  auto& st = tr.state();
  std::vector<Matrix<double>> before;
  for (auto& np : st.teacher.named_params()) before.push_back(np.param->value);

  tr.step(std::span(pairs).first(2));
  tr.step(std::span(pairs).subspan(2, 2));

  auto tp = st.teacher.named_params();
  auto sp = st.student.named_params();
  REQUIRE(tp.size() == sp.size());
  CHECK(st.step == 2);
  bool student_moved = false;
  for (std::size_t i = 0; i < tp.size(); ++i) {
    for (std::size_t j = 0; j < tp[i].param->grad.size(); ++j) REQUIRE(tp[i].param->grad[j] == 0.0);
    student_moved = student_moved || !(sp[i].param->value == before[i]);
  }
  CHECK(student_moved);
}

TEST_CASE("ema update follows the closed form") {
  auto pairs = testing::random_pairs(2, 8, 2);
  pretrain::Pretrainer<double> tr(backbone::EncoderConfig::gradcheck(), testing::tiny_pretrain(), testing::stats_of(pairs));
  auto& st = tr.state();
  Rng rng = make_rng(3);
  for (auto& np : st.student.named_params())
    for (std::size_t i = 0; i < np.param->value.size(); ++i) np.param->value[i] = normal(rng);
  auto t0 = st.teacher.named_params().front().param->value;
  auto s = st.student.named_params().front().param->value;
  const int n = 50;
  for (int i = 0; i < n; ++i) pretrain::ema_update(st);
  const double mn = std::pow(st.momentum, n);
  const auto& tn = st.teacher.named_params().front().param->value;
  for (std::size_t i = 0; i < tn.size(); ++i) CHECK(tn[i] == doctest::Approx(mn * t0[i] + (1 - mn) * s[i]).epsilon(1e-12));
  CHECK(st.step == n);
}

TEST_CASE("pretraining replays bit-identically from the same seed") {
  auto pairs = testing::random_pairs(6, 8, 4);
  auto cfg = testing::tiny_pretrain(9);
  cfg.total_steps = 4;
  auto run = [&] {
    pretrain::Pretrainer<float> tr(backbone::EncoderConfig::gradcheck(), cfg, testing::stats_of(pairs));
    std::vector<double> losses;
    tr.run(pairs, [&](const pretrain::StepResult& r) { losses.push_back(r.loss.total); });
    std::vector<Matrix<float>> w;
    for (auto& np : tr.state().student.named_params()) w.push_back(np.param->value);
    return std::make_pair(losses, w);
  };
  const auto a = run();
  const auto b = run();
  CHECK(a.first.size() == 4);
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);

  cfg.seed = 10;
  pretrain::Pretrainer<float> other(backbone::EncoderConfig::gradcheck(), cfg, testing::stats_of(pairs));
  std::vector<double> losses;
  other.run(pairs, [&](const pretrain::StepResult& r) { losses.push_back(r.loss.total); });
  CHECK(losses != a.first);
}

TEST_CASE("warm-up is linear from zero then constant") {
  auto pairs = testing::random_pairs(2, 8, 5);
  auto cfg = testing::tiny_pretrain();
  cfg.warmup_steps = 10;
  pretrain::Pretrainer<float> tr(backbone::EncoderConfig::gradcheck(), cfg, testing::stats_of(pairs));
  CHECK(tr.learning_rate(0) == 0.0);
  CHECK(tr.learning_rate(5) == doctest::Approx(cfg.peak_lr / 2));
  CHECK(tr.learning_rate(10) == doctest::Approx(cfg.peak_lr));
  CHECK(tr.learning_rate(1000) == doctest::Approx(cfg.peak_lr));
}

TEST_CASE("cross-entropy is bounded below by the teacher entropy") {
  Rng rng = make_rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const int k = uniform_int(rng, 2, 64);
    std::vector<double> p(k), q(k);
    double sp = 0, sq = 0;
    for (int j = 0; j < k; ++j) {
      sp += (p[j] = std::exp(normal(rng, 0, 2)));
      sq += (q[j] = std::exp(normal(rng, 0, 2)));
    }
    for (int j = 0; j < k; ++j) {
      p[j] /= sp;
      q[j] /= sq;
    }
    CHECK(pretrain::cross_entropy(p, q) >= pretrain::cross_entropy(p, p) - 1e-12);
  }
}

TEST_CASE("ibot loss is zero without masked positions and uniformity grows when points collapse") {
  Matrix<double> t(3, 4, 0.25), s(3, 4, 0.25);
  const std::vector<std::uint8_t> none(3, 0);
  CHECK(pretrain::bi_ibot_loss(t, s, none) == 0.0);

  Rng rng = make_rng(7);
  Matrix<double> e(8, 4);
  for (std::size_t i = 0; i < e.size(); ++i) e[i] = normal(rng);
  Matrix<double> shrunk = e;
  for (std::size_t i = 0; i < shrunk.size(); ++i) shrunk[i] *= 0.1;
  CHECK(pretrain::uniformity_loss(shrunk) > pretrain::uniformity_loss(e));
  CHECK(pretrain::uniformity_loss(shrunk) - pretrain::uniformity_loss(e) == doctest::Approx(std::log(10.0)).epsilon(1e-6));
}

TEST_CASE("pretrain config rejects bad values") {
  auto cfg = pretrain::PretrainConfig::toy();
  CHECK_NOTHROW(cfg.validate());
  cfg.momentum = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = pretrain::PretrainConfig::toy();
  cfg.mask_ratio_min = 0.6;
  cfg.mask_ratio_max = 0.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  nlohmann::json j = pretrain::PretrainConfig::toy();
  auto back = j.get<pretrain::PretrainConfig>();
  CHECK(nlohmann::json(back) == j);
}
