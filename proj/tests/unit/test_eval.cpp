#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "tempov/cli/workflow.hpp"
#include "tempov/core/rng.hpp"
#include "tempov/data/world.hpp"
#include "tempov/eval/folds.hpp"
#include "tempov/eval/metrics.hpp"
#include "tempov/eval/report.hpp"
#include "tempov/eval/scenario.hpp"

using namespace tempov;

namespace {

std::vector<data::SurveyRecord> world_records(std::uint64_t seed = 7) {
  data::SyntheticWorldConfig cfg;
  cfg.tile_size = 8;
  cfg.seed = seed;
  auto recs = data::generate_world(cfg).surveys;
  eval::apply_folds(recs, eval::assign_folds(recs, 5, seed));
  return recs;
}

}  // namespace

TEST_CASE("r2 and pearson r2 against the direct formulas") {
  Rng rng = make_rng(1);
  for (int t = 0; t < 100; ++t) {
    const int n = uniform_int(rng, 2, 60);
    std::vector<double> y(n), p(n);
    for (int i = 0; i < n; ++i) {
      y[i] = normal(rng);
      p[i] = 0.6 * y[i] + normal(rng, 0, 0.5);
    }
    long double my = 0, mp = 0;
    for (int i = 0; i < n; ++i) {
      my += y[i];
      mp += p[i];
    }
    my /= n;
    mp /= n;
    long double ssr = 0, sst = 0, spp = 0, syp = 0;
    for (int i = 0; i < n; ++i) {
      ssr += (y[i] - p[i]) * (y[i] - p[i]);
      sst += (y[i] - my) * (y[i] - my);
      spp += (p[i] - mp) * (p[i] - mp);
      syp += (y[i] - my) * (p[i] - mp);
    }
    CHECK(std::fabs(eval::r_squared(y, p) - double(1 - ssr / sst)) < 1e-12);
    CHECK(std::fabs(eval::pearson_r2(y, p) - double(syp * syp / (sst * spp))) < 1e-12);

    std::vector<double> q(n);
    for (int i = 0; i < n; ++i) q[i] = -3.5 * p[i] + 11;
    CHECK(std::fabs(eval::pearson_r2(y, q) - eval::pearson_r2(y, p)) < 1e-12);
  }
  const std::vector<double> y{0, 1, 2}, p{0, 1, 1};
  CHECK(eval::r_squared(y, p) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(eval::r_squared(y, y) == 1.0);
  const std::vector<double> c{1, 1, 1};
  CHECK_THROWS_AS(eval::r_squared(c, y), MetricError);
  CHECK_THROWS_AS(eval::pearson_r2(y, c), MetricError);
  CHECK_THROWS_AS(eval::r_squared(std::vector<double>{1}, std::vector<double>{1}), MetricError);
}

TEST_CASE("spatial folds are block-pure, balanced and reproducible") {
  data::SyntheticWorldConfig cfg;
  cfg.tile_size = 8;
  const auto recs = data::generate_world(cfg).surveys;
  const auto fa = eval::assign_folds(recs, 5, 3);
  CHECK(fa.fold.size() == recs.size());
  std::map<std::pair<std::string, int>, std::vector<int>> sizes;
  for (const auto& r : recs) {
    const int f = fa.fold_of(r);
    REQUIRE(f >= 0);
    REQUIRE(f < 5);
    auto& v = sizes[{r.country_code, r.year}];
    v.resize(5);
    ++v[f];
  }
  for (const auto& [cy, v] : sizes)
    for (int f = 0; f < 5; ++f) CHECK(v[f] > 0);

  // Every block is fold-pure.
  std::map<std::tuple<std::string, int, long, long>, std::set<int>> block_folds;
  for (const auto& r : recs) {
    const double km = fa.block_km.at(r.country_code + "|" + std::to_string(r.year));
    const auto [bx, by] = eval::block_of(r.lon, r.lat, km);
    block_folds[{r.country_code, r.year, bx, by}].insert(fa.fold_of(r));
  }
  for (const auto& [b, fs] : block_folds) CHECK(fs.size() == 1);

  const auto again = eval::assign_folds(recs, 5, 3);
  CHECK(again.fold == fa.fold);
  const auto back = eval::fold_assignment_from_json(eval::to_json(fa));
  CHECK(back.fold == fa.fold);
  CHECK(back.k == 5);
}

TEST_CASE("every scenario and fold is leakage-free") {
  const auto recs = world_records();
  for (int year : {2015, 2025}) {
    const auto rep = eval::audit_all(recs, year, 5, 1);
    CHECK(rep.instances == 5 * 5 * 3);
    CHECK(rep.overlaps == 0);
  }
}

TEST_CASE("in-year scenarios test on fold (i+1) mod k and cover each fold once") {
  const auto recs = world_records();
  for (auto sc : {eval::Scenario::in_country_in_year, eval::Scenario::all_countries_in_year}) {
    std::map<std::string, int> seen;
    for (int i = 0; i < 5; ++i) {
      eval::ScenarioSpec spec{sc, "XAA", 2015, i, 5, 0};
      const auto s = eval::make_scenario(spec, recs);
      REQUIRE_FALSE(s.test.empty());
      for (int idx : s.test) {
        CHECK(recs[idx].fold_id == (i + 1) % 5);
        CHECK(recs[idx].country_code == "XAA");
        CHECK(recs[idx].year == 2015);
        ++seen[cli::cluster_key(recs[idx])];
      }
      for (int idx : s.val) CHECK(recs[idx].fold_id == i);
      if (sc == eval::Scenario::in_country_in_year)
        for (int idx : s.train) CHECK(recs[idx].country_code == "XAA");
    }
    int total = 0;
    for (const auto& r : recs) total += r.country_code == "XAA" && r.year == 2015;
    CHECK(int(seen.size()) == total);
    for (const auto& [k, n] : seen) CHECK(n == 1);
  }
}

TEST_CASE("out-of-country and out-of-year scenarios") {
  const auto recs = world_records();
  const auto s1 = eval::make_scenario({eval::Scenario::out_of_country, "XBB", 2015, 0, 5, 4}, recs);
  for (int i : s1.test) CHECK(recs[i].country_code == "XBB");
  for (int i : s1.train) CHECK(recs[i].country_code != "XBB");
  for (int i : s1.val) CHECK(recs[i].country_code != "XBB");
  CHECK(s1.test.size() == 160);

  const auto s2 = eval::make_scenario({eval::Scenario::in_country_out_of_year, "XBB", 2015, 2, 5, 0}, recs);
  for (int i : s2.test) CHECK((recs[i].year == 2015 && recs[i].fold_id == 2));
  for (int i : s2.train) CHECK(recs[i].year == 2025);
  CHECK_THROWS_AS(eval::parse_scenario("sideways"), ConfigError);
  CHECK(eval::parse_scenario("3") == eval::Scenario::in_country_in_year);
  CHECK(eval::parse_scenario(eval::scenario_name(eval::Scenario::out_of_country)) == eval::Scenario::out_of_country);
}

TEST_CASE("stage selection holds the test fold out of both stages") {
  const auto recs = world_records();
  adapt::AdaptationPlan plan;
  plan.stage1.years = {2015};
  plan.stage2 = adapt::StageSpec{{}, {2025}, 1.0, 1, 1e-3};
  const auto s = cli::select_stages(recs, plan, 0, 1);
  CHECK(s.train1.size() == 240);
  CHECK(s.val1.empty());
  std::set<std::string> keys;
  for (const auto* v : {&s.train1, &s.val1, &s.train2, &s.val2, &s.test})
    for (int i : *v) CHECK(keys.insert(cli::cluster_key(recs[i])).second);
  CHECK(keys.size() == recs.size());
  for (int i : s.test) CHECK((recs[i].year == 2025 && recs[i].fold_id == 0));
  for (int i : s.val2) CHECK((recs[i].year == 2025 && recs[i].fold_id == 1));
  for (int i : s.train2) CHECK((recs[i].year == 2025 && recs[i].fold_id > 1));

  plan.stage2.reset();
  const auto z = cli::select_stages(recs, plan, 0, 1);
  for (int i : z.test) CHECK((recs[i].year == 2015 && recs[i].fold_id == 0));
  for (int i : z.val1) CHECK(recs[i].fold_id == 1);

  auto unfolded = recs;
  unfolded[0].fold_id = -1;
  CHECK_THROWS_AS(cli::select_stages(unfolded, plan, 0, std::nullopt), ConfigError);
}

TEST_CASE("metric report aggregates folds and change") {
  Rng rng = make_rng(2);
  eval::ScenarioSpec spec{eval::Scenario::in_country_in_year, "AAA", 2015, 0, 3, 0};
  std::vector<std::vector<eval::PredictedCluster>> per_fold(3);
  std::vector<eval::PredictedCluster> pool;
  for (int f = 0; f < 3; ++f)
    for (int i = 0; i < 20; ++i) {
      data::SurveyRecord r{"c" + std::to_string(f * 20 + i), "AAA", 2015, 0, 0, normal(rng), false, f};
      per_fold[f].push_back({r, r.awi + normal(rng, 0, 0.3), 0.1});
      pool.push_back(per_fold[f].back());
      auto r2 = r;
      r2.year = 2025;
      r2.awi += 0.5 + normal(rng, 0, 0.2);
      pool.push_back({r2, per_fold[f].back().prediction + 0.5, 0.1});
    }
  pool.pop_back();  // one cluster without its second epoch
  const auto rep = eval::evaluate(spec, per_fold, &pool);
  CHECK(rep.folds.size() == 3);
  CHECK(rep.r2.folds == 3);
  double m = 0;
  for (const auto& f : rep.folds) m += *f.r2 / 3;
  CHECK(rep.r2.mean == doctest::Approx(m));
  REQUIRE(rep.change);
  CHECK(rep.change->n == 59);
  CHECK(rep.change->excluded == 1);
  const auto back = eval::metric_report_from_json(eval::to_json(rep));
  CHECK(eval::to_json(back) == eval::to_json(rep));
  CHECK_THROWS_AS(eval::evaluate(spec, std::vector<std::vector<eval::PredictedCluster>>(3)), InputError);
}
