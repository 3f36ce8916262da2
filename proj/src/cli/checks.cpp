#include "tempov/cli/checks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <unistd.h>

#include "tempov/adapt/lora.hpp"
#include "tempov/adapt/nll.hpp"
#include "tempov/analysis/stats.hpp"
#include "tempov/autodiff/ops.hpp"
#include "tempov/core/error.hpp"
#include "tempov/core/rng.hpp"
#include "tempov/data/world.hpp"
#include "tempov/eval/folds.hpp"
#include "tempov/eval/metrics.hpp"
#include "tempov/eval/scenario.hpp"
#include "tempov/mapgen/output.hpp"
#include "tempov/mapgen/pipeline.hpp"
#include "tempov/pretrain/losses.hpp"
#include "tempov/pretrain/trainer.hpp"

namespace tempov::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using ld = long double;

json to_json(const CheckResult& r) {
  json j{{"id", r.id}, {"name", r.name}, {"passed", r.passed}, {"measured", r.measured}};
  if (!r.detail.empty()) j["detail"] = r.detail;
  return j;
}

namespace {

template <typename F>
CheckResult guarded(int id, std::string name, F&& body) {
  CheckResult r;
  r.id = id;
  r.name = std::move(name);
  try {
    body(r);
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("exception: ") + e.what();
  }
  return r;
}

// Records the first failure and keeps going.
struct Failures {
  CheckResult& r;
  void fail(const std::string& what) {
    if (r.detail.empty()) r.detail = what;
    r.passed = false;
  }
  void expect(bool ok, const std::string& what) {
    if (!ok) fail(what);
  }
};

data::ImageTile random_tile(int size, Rng& rng, const std::string& loc) {
  data::ImageTile t(size, size);
  for (auto& p : t.pixels) p = static_cast<float>(0.05 + 0.4 * uniform01(rng));
  t.location_id = loc;
  t.geo = {30.0, 0.0, 0.001};
  return t;
}

Matrix<double> random_matrix(int rows, int cols, double sd, Rng& rng) {
  Matrix<double> m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = normal(rng, 0.0, sd);
  return m;
}

// ---- brute-force oracles (long double, written from the definitions) ----

std::vector<ld> softmax_ld(const double* z, int k, ld inv_temp, const double* center) {
  std::vector<ld> out(k);
  ld mx = -std::numeric_limits<ld>::infinity();
  for (int j = 0; j < k; ++j) {
    out[j] = (static_cast<ld>(z[j]) - (center ? static_cast<ld>(center[j]) : 0.0L)) * inv_temp;
    mx = std::max(mx, out[j]);
  }
  ld s = 0;
  for (auto& v : out) s += (v = std::exp(v - mx));
  for (auto& v : out) v /= s;
  return out;
}

ld ce_ld(const std::vector<ld>& p, const std::vector<ld>& q) {
  ld s = 0;
  for (std::size_t j = 0; j < p.size(); ++j)
    if (p[j] > 0) s -= p[j] * std::log(q[j]);
  return s;
}

double rel_close(double got, ld want) {
  return static_cast<double>(std::fabs(static_cast<ld>(got) - want) / std::max(1.0L, std::fabs(want)));
}

template <typename T>
std::vector<T> as_vec(const Matrix<T>& m) {
  return {m.data(), m.data() + m.size()};
}

}  // namespace

// 1 ---------------------------------------------------------------------------

CheckResult check_gradient_oracle(std::uint64_t seed) {
  return guarded(1, "gradient oracle", [&](CheckResult& r) {
    const auto t0 = std::chrono::steady_clock::now();
    r.passed = true;
    Failures f{r};
    constexpr int kSamples = 200;
    constexpr double kStep = 1e-5;
    constexpr double kTol = 1e-4;
    constexpr double kFloor = 1e-5;  // below this the error is absolute (largest gradients are ~1e2)

    const auto enc = backbone::EncoderConfig::gradcheck();
    pretrain::PretrainConfig cfg;
    cfg.global_crop_size = 8;
    cfg.local_crop_size = 4;
    cfg.batch_size = 2;
    cfg.seed = seed;
    for (auto* h : {&cfg.dino_head, &cfg.ibot_head}) {
      h->hidden_dim = 24;
      h->bottleneck_dim = 8;
      h->num_prototypes = 16;
    }
    Rng rng = make_rng(seed, {0x67c});
    std::vector<data::BitemporalPair> pairs;
    for (int i = 0; i < 3; ++i) {
      const std::string loc = "L" + std::to_string(i);
      pairs.push_back({random_tile(8, rng, loc), random_tile(8, rng, loc)});
    }
    std::vector<const data::ImageTile*> ptrs;
    for (const auto& p : pairs) ptrs.insert(ptrs.end(), {&p.tile_t1, &p.tile_t2});
    pretrain::Pretrainer<double> trainer(enc, cfg, data::compute_norm_stats(ptrs));
    auto& st = trainer.state();
    // A teacher identical to the student gives near-degenerate targets.
    for (auto& np : st.teacher.named_params())
      for (std::size_t i = 0; i < np.param->value.size(); ++i) np.param->value[i] += normal(rng, 0.0, 0.05);
    std::vector<double> dc(16), ic(16);
    for (auto& v : dc) v = normal(rng, 0.0, 0.1);
    for (auto& v : ic) v = normal(rng, 0.0, 0.1);
    const auto views = trainer.assemble(pairs, 0);

    auto student_params = st.student.named_params();
    auto objective = [&](bool record) {
      ad::Tape<double> tape(record);
      auto obj = pretrain::build_objective<double>(tape, st.student, st.teacher, views, dc, ic, cfg, true);
      if (record) tape.backward(obj.total);
      return obj;
    };
    for (auto& np : student_params) np.param->zero_grad();
    const auto base = objective(true);
    f.expect(base.values.ibot > 0 && base.values.uniform != 0, "a loss term is inactive");

    double worst = 0.0;
    std::string worst_at;
    int nonzero = 0;
    for (int s = 0; s < kSamples; ++s) {
      auto& np = student_params[uniform_int(rng, 0, static_cast<int>(student_params.size()) - 1)];
      const int idx = uniform_int(rng, 0, static_cast<int>(np.param->value.size()) - 1);
      double& x = np.param->value[idx];
      const double x0 = x;
      auto central = [&](double h) {
        x = x0 + h;
        const double lp = objective(false).values.total;
        x = x0 - h;
        const double lm = objective(false).values.total;
        x = x0;
        return (lp - lm) / (2 * h);
      };
      // One Richardson step removes the h² term; the low-temperature heads
      // make the loss sharply curved.
      const double numeric = (4 * central(kStep / 2) - central(kStep)) / 3;
      const double analytic = np.param->grad[idx];
      const double err = std::fabs(numeric - analytic) / std::max({std::fabs(numeric), std::fabs(analytic), kFloor});
      nonzero += std::fabs(analytic) > kFloor;
      if (err > worst) {
        worst = err;
        worst_at = np.name + "[" + std::to_string(idx) + "]";
      }
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    f.expect(worst < kTol, "max relative error " + std::to_string(worst) + " at " + worst_at);
    f.expect(secs < 120.0, "runtime over 2 minutes");
    r.measured = {{"samples", kSamples},      {"max_relative_error", worst}, {"worst_param", worst_at},
                  {"nonzero_gradients", nonzero}, {"loss", base.values.total},  {"seconds", secs}};
  });
}

// 2 ---------------------------------------------------------------------------

CheckResult check_loss_oracles(std::uint64_t seed) {
  return guarded(2, "loss oracles", [&](CheckResult& r) {
    r.passed = true;
    Failures f{r};
    constexpr int kCases = 50;
    constexpr double kTol = 1e-9;
    Rng rng = make_rng(seed, {0x1055});
    double worst_dino = 0, worst_ibot = 0, worst_unif = 0;
    backbone::ProjectionHeadConfig hc;

    for (int c = 0; c < kCases; ++c) {
      const int k = std::array{16, 64, 256}[c % 3];
      hc.num_prototypes = k;
      const Matrix<double> zt = random_matrix(1, k, 2.0, rng);
      const Matrix<double> zs = random_matrix(5, k, 2.0, rng);
      const Matrix<double> center = random_matrix(1, k, 0.3, rng);
      const auto pt = softmax_ld(zt.data(), k, 1.0L / hc.teacher_temperature, center.data());
      ld want = 0;
      for (int v = 0; v < 5; ++v) want += ce_ld(pt, softmax_ld(zs.row(v), k, 1.0L / hc.student_temperature, nullptr));
      want /= 5;
      const auto tdist = backbone::head_distribution(zt, hc, backbone::HeadRole::teacher, center.span());
      const auto sdist = backbone::head_distribution(zs, hc, backbone::HeadRole::student);
      const double ref = pretrain::bi_dino_loss(tdist, sdist);
      // Training path: the tape op on raw student logits.
      ad::Tape<double> tape(false);
      Matrix<double> targets(5, k);
      for (int v = 0; v < 5; ++v) std::copy(tdist.row(0), tdist.row(0) + k, targets.row(v));
      const std::vector<double> w(5, 0.2);
      const double op = tape.value(ad::soft_cross_entropy(tape, tape.constant(zs), targets,
                                                          1.0 / hc.student_temperature, std::span<const double>(w)))[0];
      worst_dino = std::max({worst_dino, rel_close(ref, want), rel_close(op, want)});
    }

    for (int c = 0; c < kCases; ++c) {
      const int k = std::array{16, 64, 256}[c % 3];
      const int n = uniform_int(rng, 4, 36);
      hc.num_prototypes = k;
      const Matrix<double> zt = random_matrix(n, k, 2.0, rng);
      const Matrix<double> zs = random_matrix(n, k, 2.0, rng);
      const Matrix<double> center = random_matrix(1, k, 0.3, rng);
      std::vector<std::uint8_t> mask(n);
      const double ratio = c % 10 == 0 ? 0.0 : uniform01(rng);  // some cases with nothing masked
      int masked = 0;
      for (auto& m : mask) masked += (m = uniform01(rng) < ratio);
      ld want = 0;
      for (int i = 0; i < n; ++i) {
        if (!mask[i]) continue;
        want += ce_ld(softmax_ld(zt.row(i), k, 1.0L / hc.teacher_temperature, center.data()),
                      softmax_ld(zs.row(i), k, 1.0L / hc.student_temperature, nullptr));
      }
      want = masked ? want / masked : 0.0L;
      const auto tdist = backbone::head_distribution(zt, hc, backbone::HeadRole::teacher, center.span());
      const auto sdist = backbone::head_distribution(zs, hc, backbone::HeadRole::student);
      const double ref = pretrain::bi_ibot_loss(tdist, sdist, mask);
      double err = rel_close(ref, want);
      if (masked) {
        ad::Tape<double> tape(false);
        std::vector<double> w(n);
        for (int i = 0; i < n; ++i) w[i] = mask[i] ? 1.0 / masked : 0.0;
        const double op = tape.value(ad::soft_cross_entropy(tape, tape.constant(zs), tdist,
                                                            1.0 / hc.student_temperature, std::span<const double>(w)))[0];
        err = std::max(err, rel_close(op, want));
      }
      worst_ibot = std::max(worst_ibot, err);
    }

    for (int c = 0; c < kCases; ++c) {
      const int n = uniform_int(rng, 2, 32), d = std::array{4, 16, 64}[c % 3];
      Matrix<double> e = random_matrix(n, d, 1.0, rng);
      for (int i = 0; i < n; ++i) {
        double s = 0;
        for (int j = 0; j < d; ++j) s += e(i, j) * e(i, j);
        for (int j = 0; j < d; ++j) e(i, j) /= std::sqrt(s);
      }
      const double eps = 1e-8;
      ld want = 0;
      for (int i = 0; i < n; ++i) {
        std::vector<ld> dist;
        for (int j = 0; j < n; ++j) {
          if (j == i) continue;
          ld d2 = 0;
          for (int q = 0; q < d; ++q) d2 += std::pow(static_cast<ld>(e(i, q)) - e(j, q), 2);
          dist.push_back(std::sqrt(d2));
        }
        want -= std::log(*std::min_element(dist.begin(), dist.end()) + eps);
      }
      want /= n;
      ad::Tape<double> tape(false);
      const double op = tape.value(ad::nn_uniformity(tape, tape.constant(e), eps))[0];
      worst_unif = std::max({worst_unif, rel_close(pretrain::uniformity_loss(e, eps), want), rel_close(op, want)});
    }
    f.expect(worst_dino <= kTol, "bi-DINO off by " + std::to_string(worst_dino));
    f.expect(worst_ibot <= kTol, "bi-iBOT off by " + std::to_string(worst_ibot));
    f.expect(worst_unif <= kTol, "uniformity off by " + std::to_string(worst_unif));

    // CE(p, q) >= H(p) = CE(p, p).
    int bound_violations = 0;
    for (int c = 0; c < kCases; ++c) {
      hc.num_prototypes = 256;
      const auto p = backbone::head_distribution(random_matrix(1, 256, 2.0, rng), hc, backbone::HeadRole::teacher);
      const auto q = backbone::head_distribution(random_matrix(1, 256, 2.0, rng), hc, backbone::HeadRole::student);
      bound_violations += pretrain::cross_entropy(p.span(), q.span()) < pretrain::cross_entropy(p.span(), p.span());
    }
    f.expect(bound_violations == 0, "cross-entropy fell below the teacher entropy");

    std::vector<double> onehot(256, 0.0), uniform(256, 1.0 / 256);
    onehot[17] = 1.0;
    const double ce_uniform = pretrain::cross_entropy(onehot, uniform);
    ad::Tape<double> tape(false);
    Matrix<double> target(1, 256);
    target[17] = 1.0;
    const double ce_op = tape.value(ad::soft_cross_entropy(tape, tape.constant(Matrix<double>(1, 256)), target, 10.0))[0];
    f.expect(ce_uniform == std::log(256.0), "one-hot vs uniform is not log 256");
    f.expect(std::fabs(ce_op - std::log(256.0)) <= 1e-12, "tape op one-hot vs uniform is not log 256");

    r.measured = {{"cases", kCases},
                  {"max_error_bi_dino", worst_dino},
                  {"max_error_bi_ibot", worst_ibot},
                  {"max_error_uniformity", worst_unif},
                  {"entropy_bound_violations", bound_violations},
                  {"onehot_vs_uniform", ce_uniform},
                  {"log_256", std::log(256.0)}};
  });
}

// 3 ---------------------------------------------------------------------------

CheckResult check_identities(std::uint64_t seed) {
  return guarded(3, "identity suite", [&](CheckResult& r) {
    r.passed = true;
    Failures f{r};
    Rng rng = make_rng(seed, {0x1d});
    const auto cfg = backbone::EncoderConfig::toy();
    auto max_diff = [](const std::vector<double>& a, const std::vector<double>& b) {
      double m = 0;
      for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
      return m;
    };

    // (a) zero-initialized NIR/SWIR slices, with and without an RGB source.
    const Matrix<double> rgb = random_matrix(cfg.embed_dim, 3 * cfg.patch_size * cfg.patch_size, 0.02, rng);
    double band_diff = 0;
    for (const Matrix<double>* src : {static_cast<const Matrix<double>*>(nullptr), &rgb}) {
      backbone::Encoder<double> enc(cfg, derive_seed(seed, {0xa}), src);
      data::ImageTile tile = random_tile(64, rng, "A");
      const auto before = enc.encode(tile);
      for (int b = data::kNir; b < data::kNumBands; ++b)
        for (int y = 0; y < tile.height; ++y)
          for (int x = 0; x < tile.width; ++x) tile.at(b, y, x) = static_cast<float>(uniform01(rng));
      const auto after = enc.encode(tile);
      band_diff = std::max({band_diff, max_diff(before.global_embedding, after.global_embedding),
                            max_diff(as_vec(before.patch_embeddings), as_vec(after.patch_embeddings))});
    }
    f.expect(band_diff <= 1e-12, "output depends on NIR/SWIR at init");

    // (b) adapters with B = 0.
    backbone::Encoder<double> enc(cfg, derive_seed(seed, {0xb}));
    const data::ImageTile tile = random_tile(64, rng, "B");
    const auto before = enc.encode(tile);
    adapt::inject_lora(enc, adapt::LoraConfig{}, derive_seed(seed, {0xb, 1}));
    const auto after = enc.encode(tile);
    const double lora_diff = std::max(max_diff(before.global_embedding, after.global_embedding),
                                      max_diff(as_vec(before.patch_embeddings), as_vec(after.patch_embeddings)));
    f.expect(lora_diff <= 1e-12, "LoRA injection changed the output");

    // (c) EMA against m^n θ0 + (1 − m^n) θs with a fixed student.
    pretrain::TeacherStudentState<double> st;
    st.momentum = 0.992;
    const auto gc = backbone::EncoderConfig::gradcheck();
    st.student.encoder = backbone::Encoder<double>(gc, derive_seed(seed, {0xc, 1}));
    st.teacher.encoder = backbone::Encoder<double>(gc, derive_seed(seed, {0xc, 2}));
    backbone::ProjectionHeadConfig hc;
    hc.hidden_dim = 16;
    hc.num_prototypes = 16;
    Rng hr = make_rng(seed, {0xc, 3});
    st.student.dino = backbone::ProjectionHead<double>(hc, gc.embed_dim, hr);
    st.student.ibot = backbone::ProjectionHead<double>(hc, gc.embed_dim, hr);
    st.teacher.dino = backbone::ProjectionHead<double>(hc, gc.embed_dim, hr);
    st.teacher.ibot = backbone::ProjectionHead<double>(hc, gc.embed_dim, hr);
    for (auto* m : {&st.student, &st.teacher})
      for (auto& np : m->named_params())
        for (std::size_t i = 0; i < np.param->value.size(); ++i) np.param->value[i] = normal(rng, 0.0, 1.0);
    std::vector<std::vector<double>> theta0, theta_s;
    for (auto& np : st.teacher.named_params()) theta0.push_back(as_vec(np.param->value));
    for (auto& np : st.student.named_params()) theta_s.push_back(as_vec(np.param->value));
    constexpr int kUpdates = 200;
    for (int n = 0; n < kUpdates; ++n) pretrain::ema_update(st);
    const double mn = std::pow(0.992, kUpdates);
    double ema_diff = 0;
    auto tp = st.teacher.named_params();
    for (std::size_t p = 0; p < tp.size(); ++p)
      for (std::size_t i = 0; i < theta0[p].size(); ++i)
        ema_diff = std::max(ema_diff, std::fabs(tp[p].param->value[i] - (mn * theta0[p][i] + (1 - mn) * theta_s[p][i])));
    f.expect(ema_diff <= 1e-10, "EMA deviates from the closed form");
    f.expect(st.step == kUpdates, "EMA step counter is off");

    r.measured = {{"extra_band_max_diff", band_diff},
                  {"lora_b0_max_diff", lora_diff},
                  {"ema_max_diff", ema_diff},
                  {"ema_updates", kUpdates},
                  {"momentum", 0.992}};
  });
}

// 4 ---------------------------------------------------------------------------

CheckResult check_gaussian_nll(std::uint64_t seed) {
  return guarded(4, "Gaussian NLL contract", [&](CheckResult& r) {
    r.passed = true;
    Failures f{r};
    const double l0 = adapt::gaussian_nll(0.0, {0.0, 1.0});
    const double l1 = adapt::gaussian_nll(1.0, {0.0, 1.0});
    f.expect(l0 == 0.0, "loss at y = ŷ, σ² = 1 is not 0");
    f.expect(l1 == 1.0, "loss at |y − ŷ| = 1, σ² = 1 is not 1");

    Rng rng = make_rng(seed, {0x9a});
    std::vector<double> y;
    std::vector<backbone::GaussianPrediction> pred;
    for (int i = 0; i < 200; ++i) {
      y.push_back(normal(rng, 0.0, 1.0));
      pred.push_back({normal(rng, 0.0, 1.0), std::exp(normal(rng, 0.0, 1.0))});
    }
    const auto rep = adapt::gradient_attenuation_check(y, pred, 1e-6);
    f.expect(rep.max_relative_error < 1e-6, "analytic gradient off by " + std::to_string(rep.max_relative_error));
    f.expect(rep.monotone, "|∂L/∂ŷ| not strictly decreasing in σ²");

    // The training op agrees with the scalar form.
    double op_diff = 0;
    {
      const double floor = 1e-6;
      ad::Tape<double> tape(false);
      Matrix<double> mean(8, 1), raw(8, 1);
      std::vector<double> yy(8);
      ld want = 0;
      for (int i = 0; i < 8; ++i) {
        mean[i] = normal(rng, 0.0, 1.0);
        raw[i] = normal(rng, 0.0, 1.0);
        yy[i] = normal(rng, 0.0, 1.0);
        const ld v = floor + std::log1p(std::exp(static_cast<ld>(raw[i])));
        want += std::log(v) + std::pow(yy[i] - static_cast<ld>(mean[i]), 2) / v;
      }
      want /= 8;
      const double got =
          tape.value(ad::gaussian_nll(tape, tape.constant(mean), tape.constant(raw), std::span<const double>(yy), floor))[0];
      op_diff = rel_close(got, want);
    }
    f.expect(op_diff < 1e-12, "tape NLL disagrees with the scalar form");
    r.measured = {{"loss_trivial_zero", l0},
                  {"loss_trivial_one", l1},
                  {"max_gradient_relative_error", rep.max_relative_error},
                  {"attenuation_monotone", rep.monotone},
                  {"tape_vs_scalar", op_diff}};
  });
}

// 7 ---------------------------------------------------------------------------

CheckResult check_protocol(std::uint64_t seed) {
  return guarded(7, "protocol audit", [&](CheckResult& r) {
    r.passed = true;
    Failures f{r};
    constexpr int k = 5;
    data::SyntheticWorldConfig wc;
    wc.tile_size = 8;
    wc.seed = derive_seed(seed, {0x7});
    auto world = data::generate_world(wc);
    auto& recs = world.surveys;
    eval::apply_folds(recs, eval::assign_folds(recs, k, seed));

    int instances = 0, overlaps = 0;
    for (int year : wc.years) {
      const auto rep = eval::audit_all(recs, year, k, seed);
      instances += rep.instances;
      overlaps += rep.overlaps;
      if (!rep.findings.empty()) f.fail(rep.findings.front());
    }
    f.expect(instances == 2 * wc.num_countries * 5 * k, "unexpected number of audited splits");

    std::set<std::string> countries;
    for (const auto& rec : recs) countries.insert(rec.country_code);
    int coverage_errors = 0, rule_errors = 0;
    for (int year : wc.years)
      for (const auto& c : countries)
        for (auto sc : {eval::Scenario::in_country_in_year, eval::Scenario::all_countries_in_year}) {
          std::map<int, int> seen;  // record → times tested
          for (int i = 0; i < k; ++i) {
            const auto s = eval::make_scenario({sc, c, year, i, k, seed}, recs);
            for (int idx : s.test) {
              ++seen[idx];
              rule_errors += recs[idx].fold_id != (i + 1) % k;
            }
            for (int idx : s.val) rule_errors += recs[idx].fold_id != i;
          }
          for (int idx = 0; idx < static_cast<int>(recs.size()); ++idx) {
            const bool target = recs[idx].country_code == c && recs[idx].year == year;
            const int times = seen.count(idx) ? seen[idx] : 0;
            coverage_errors += target ? times != 1 : times != 0;
          }
        }
    f.expect(coverage_errors == 0, "test folds do not cover the target exactly once");
    f.expect(rule_errors == 0, "test fold is not (i+1) mod k");
    r.measured = {{"splits_audited", instances},  {"overlaps", overlaps},
                  {"coverage_errors", coverage_errors}, {"fold_rule_errors", rule_errors},
                  {"countries", countries.size()}, {"k", k}};
  });
}

// 8 ---------------------------------------------------------------------------

CheckResult check_metrics(std::uint64_t seed) {
  return guarded(8, "metric oracles", [&](CheckResult& r) {
    r.passed = true;
    Failures f{r};
    Rng rng = make_rng(seed, {0x8e});
    double worst_r2 = 0, worst_pr2 = 0, worst_affine = 0;
    for (int c = 0; c < 100; ++c) {
      const int n = uniform_int(rng, 3, 300);
      std::vector<double> y(n), yhat(n);
      for (int i = 0; i < n; ++i) {
        y[i] = normal(rng, 0.0, 1.0);
        yhat[i] = 0.7 * y[i] + normal(rng, 0.0, 0.6);
      }
      ld my = 0, mh = 0;
      for (int i = 0; i < n; ++i) my += y[i], mh += yhat[i];
      my /= n;
      mh /= n;
      ld ss_res = 0, ss_tot = 0, sxy = 0, sxx = 0, syy = 0;
      for (int i = 0; i < n; ++i) {
        ss_res += std::pow(y[i] - static_cast<ld>(yhat[i]), 2);
        ss_tot += std::pow(y[i] - my, 2);
        sxy += (y[i] - my) * (yhat[i] - mh);
        syy += (y[i] - my) * (y[i] - my);
        sxx += (yhat[i] - mh) * (yhat[i] - mh);
      }
      const ld r2 = 1 - ss_res / ss_tot, pr2 = sxy * sxy / (sxx * syy);
      worst_r2 = std::max(worst_r2, static_cast<double>(std::fabs(eval::r_squared(y, yhat) - r2)));
      worst_pr2 = std::max(worst_pr2, static_cast<double>(std::fabs(eval::pearson_r2(y, yhat) - pr2)));
      const double a = (uniform01(rng) < 0.5 ? -1 : 1) * std::exp(normal(rng, 0.0, 1.0)), b = normal(rng, 0.0, 5.0);
      std::vector<double> moved(n);
      for (int i = 0; i < n; ++i) moved[i] = a * yhat[i] + b;
      worst_affine = std::max(worst_affine, std::fabs(eval::pearson_r2(y, moved) - eval::pearson_r2(y, yhat)));
    }
    const std::vector<double> y{0, 1, 2}, yhat{0, 1, 1};
    const double half = eval::r_squared(y, yhat);
    f.expect(worst_r2 <= 1e-12, "R² off by " + std::to_string(worst_r2));
    f.expect(worst_pr2 <= 1e-12, "r² off by " + std::to_string(worst_pr2));
    f.expect(worst_affine <= 1e-12, "r² not affine invariant");
    f.expect(std::fabs(half - 0.5) <= 1e-12, "R²([0,1,2], [0,1,1]) != 0.5");
    r.measured = {{"vectors", 100},
                  {"max_error_r2", worst_r2},
                  {"max_error_pearson_r2", worst_pr2},
                  {"max_affine_change", worst_affine},
                  {"r2_half_case", half}};
  });
}

// 9 ---------------------------------------------------------------------------

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string map_bytes(const mapgen::WealthMap& map, const fs::path& dir, const std::string& tag) {
  const fs::path stem = dir / tag;
  mapgen::write_map_raster(stem, map);
  std::string all;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().filename().string().rfind(tag, 0) == 0) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& p : files) all += p.filename().string().substr(tag.size()) + "\n" + slurp(p);
  return all;
}

}  // namespace

CheckResult check_pipeline(std::uint64_t seed) {
  return guarded(9, "pipeline determinism", [&](CheckResult& r) {
    r.passed = true;
    Failures f{r};
    data::SyntheticWorldConfig wc;
    wc.cells_per_side = 4;
    wc.clusters_per_country = 16;
    wc.tile_size = 32;
    wc.seed = derive_seed(seed, {0x9});
    const auto world = data::generate_world(wc);
    const auto grid = mapgen::grid_of_world(world.grid, wc.tile_size);

    std::vector<adapt::WealthModel<float>> models(5);
    Rng rng = make_rng(seed, {0x9, 1});
    const auto enc = backbone::EncoderConfig::toy();
    for (int m = 0; m < 5; ++m) {
      models[m].encoder = backbone::Encoder<float>(enc, derive_seed(seed, {0x9, 2, static_cast<std::uint64_t>(m)}));
      models[m].head = backbone::RegressionHead<float>(enc.embed_dim);
      for (auto* lw : {&models[m].head.mean, &models[m].head.logvar}) {
        for (std::size_t i = 0; i < lw->weight.value.size(); ++i) lw->weight.value[i] = static_cast<float>(normal(rng, 0, 1));
        lw->bias.value[0] = static_cast<float>(normal(rng, 0, 0.5));
      }
      models[m].target_mean = normal(rng, 0, 1);
      models[m].target_sd = 0.5 + uniform01(rng);
    }
    std::vector<const adapt::WealthModel<float>*> ptrs;
    for (const auto& m : models) ptrs.push_back(&m);
    const mapgen::WorldTileSource source(world, 0);

    const fs::path dir = fs::temp_directory_path() / ("tempov_check9_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    struct Run {
      int acq, inf;
      bool shard;
    };
    std::string reference;
    json configs = json::array();
    int n = grid.cells.size(), telemetry_errors = 0, depth_max = 0;
    mapgen::WealthMap first;
    for (const Run run : {Run{1, 1, false}, Run{4, 2, false}, Run{8, 8, false}, Run{3, 2, true}}) {
      mapgen::PipelineConfig pc;
      pc.acquisition_workers = run.acq;
      pc.inference_workers = run.inf;
      pc.shard_by_country = run.shard;
      pc.queue_capacity = 4;
      mapgen::Telemetry tel;
      const auto map = mapgen::run_pipeline(grid, ptrs, source, pc, &tel);
      const std::string tag = "a" + std::to_string(run.acq) + "i" + std::to_string(run.inf) + (run.shard ? "s" : "");
      const std::string bytes = map_bytes(map, dir, tag);
      if (reference.empty()) {
        reference = bytes;
        first = map;
      }
      const bool same = bytes == reference;
      f.expect(same, "map bytes differ for workers " + tag);
      for (const auto* lists : {&tel.acquired, &tel.inferred}) {
        std::vector<int> count(n, 0);
        for (const auto& l : *lists)
          for (int c : l) ++count.at(c);
        telemetry_errors += std::count_if(count.begin(), count.end(), [](int x) { return x != 1; });
      }
      depth_max = std::max(depth_max, tel.max_queue_depth);
      f.expect(tel.max_queue_depth <= pc.queue_capacity, "queue exceeded its capacity");
      configs.push_back({{"acquisition", run.acq}, {"inference", run.inf}, {"shard_by_country", run.shard},
                         {"identical", same}, {"max_queue_depth", tel.max_queue_depth}});
    }
    fs::remove_all(dir);
    f.expect(telemetry_errors == 0, "a cell was not processed exactly once");

    // Serial ensemble average.
    double mean_diff = 0, var_diff = 0;
    for (int c = 0; c < n; ++c) {
      const auto tile = source.fetch(grid.cells[c]);
      double s = 0, s2 = 0, v = 0;
      for (const auto& m : models) {
        const auto p = m.predict(*tile);
        s += p.mean;
        s2 += p.mean * p.mean;
        v += p.variance;
      }
      const double mean = s / 5;
      mean_diff = std::max(mean_diff, std::fabs(first.mean[c] - mean));
      var_diff = std::max(var_diff, std::fabs(first.variance[c] - (v / 5 + s2 / 5 - mean * mean)) /
                                        std::max(1.0, std::fabs(first.variance[c])));
    }
    f.expect(mean_diff <= 1e-7, "ensemble mean differs from the serial average");
    f.expect(var_diff <= 1e-7, "ensemble variance differs from the serial law of total variance");

    // Mask boundary: density at the threshold is masked, the next double up is not.
    std::vector<double> density(n, 50.0);
    density[0] = 1.0;
    density[1] = std::nextafter(1.0, 2.0);
    density[2] = 0.0;
    auto masked_map = first;
    mapgen::apply_population_mask(masked_map, density, 1.0);
    const bool boundary = masked_map.masked[0] == 1 && masked_map.masked[1] == 0 && masked_map.masked[2] == 1 &&
                          masked_map.masked[3] == 0;
    f.expect(boundary, "population mask boundary is wrong");

    r.measured = {{"cells", n},
                  {"models", 5},
                  {"configurations", configs},
                  {"ensemble_mean_max_diff", mean_diff},
                  {"ensemble_variance_max_diff", var_diff},
                  {"telemetry_errors", telemetry_errors},
                  {"max_queue_depth", depth_max},
                  {"mask_boundary_ok", boundary}};
  });
}

// 10 --------------------------------------------------------------------------

CheckResult check_analysis(std::uint64_t seed) {
  return guarded(10, "analysis suite", [&](CheckResult& r) {
    r.passed = true;
    Failures f{r};
    Rng rng = make_rng(seed, {0x10a});

    double worst_add = 0;
    for (int c = 0; c < 100; ++c) {
      const int n = uniform_int(rng, 2, 400), groups = uniform_int(rng, 1, 8);
      std::vector<double> v(n), w(n);
      std::vector<std::string> g(n);
      for (int i = 0; i < n; ++i) {
        v[i] = std::exp(normal(rng, 0.0, 1.0));
        w[i] = uniform01(rng) + 0.01;
        g[i] = "G" + std::to_string(uniform_int(rng, 0, groups - 1));
      }
      const auto t = analysis::theil_decompose(v, g, w);
      worst_add = std::max(worst_add, std::fabs(t.total - t.within - t.between));
    }
    const std::vector<double> v13{1.0, 3.0}, w13{1.0, 1.0};
    const std::vector<std::string> g13{"A", "A"};
    const auto t13 = analysis::theil_decompose(v13, g13, w13);
    f.expect(worst_add <= 1e-12, "Theil additivity off by " + std::to_string(worst_add));
    f.expect(std::fabs(t13.total - 0.1308) < 5e-5, "Theil({1,3}) = " + std::to_string(t13.total));

    // Planted β-convergence; the accepted band is the width of the published CI.
    constexpr double kBeta = -0.021;
    analysis::CellPanel panel;
    for (int i = 0; i < 5000; ++i) {
      analysis::PanelRow row;
      row.cell_id = "c" + std::to_string(i);
      row.country = "K" + std::to_string(i % 20);
      row.wealth_t1 = normal(rng, 0.0, 1.0);
      const double growth = 0.01 + kBeta * row.wealth_t1 + normal(rng, 0.0, 0.06);
      row.wealth_t2 = row.wealth_t1 + 10.0 * growth;
      row.population = 0.5 + uniform01(rng);
      panel.rows.push_back(row);
    }
    const auto fit = analysis::beta_convergence(panel, 10.0);
    f.expect(fit.beta >= -0.024 && fit.beta <= -0.018, "β̂ = " + std::to_string(fit.beta));

    // Planted country share of one third: 200 countries × 25 cells.
    analysis::CellPanel shares;
    std::vector<double> effect(200);
    double em = 0, ev = 0;
    for (auto& e : effect) em += (e = normal(rng, 0.0, 1.0));
    em /= effect.size();
    for (auto& e : effect) ev += (e - em) * (e - em);
    ev /= effect.size();
    for (auto& e : effect) e = (e - em) * std::sqrt((1.0 / 3.0) / ev);
    for (int c = 0; c < 200; ++c)
      for (int i = 0; i < 25; ++i) {
        analysis::PanelRow row;
        row.cell_id = "c" + std::to_string(c) + "_" + std::to_string(i);
        row.country = "K" + std::to_string(c);
        row.wealth_t1 = 0.0;
        row.wealth_t2 = effect[c] + normal(rng, 0.0, std::sqrt(2.0 / 3.0));
        row.population = 1.0;
        shares.rows.push_back(row);
      }
    const auto vs = analysis::variance_decompose(shares);
    f.expect(vs.country_share >= 0.28 && vs.country_share <= 0.38,
             "country share " + std::to_string(vs.country_share));

    r.measured = {{"theil_additivity_max_error", worst_add},
                  {"theil_1_3", t13.total},
                  {"beta_planted", kBeta},
                  {"beta_hat", fit.beta},
                  {"beta_ci", {fit.ci_low, fit.ci_high}},
                  {"country_share_planted", 1.0 / 3.0},
                  {"country_share", vs.country_share}};
  });
}

std::vector<CheckResult> run_standalone_checks(std::uint64_t seed) {
  return {check_gradient_oracle(seed), check_loss_oracles(seed), check_identities(seed), check_gaussian_nll(seed),
          check_protocol(seed),        check_metrics(seed),      check_pipeline(seed),   check_analysis(seed)};
}

}  // namespace tempov::cli
