#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include <unistd.h>

#include "common.hpp"
#include "tempov/data/awi.hpp"
#include "tempov/data/geo.hpp"
#include "tempov/data/pairs.hpp"
#include "tempov/data/survey.hpp"
#include "tempov/data/world.hpp"

using namespace tempov;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("tempov_test_" + std::to_string(getpid()) + "_" + name);
  fs::remove_all(p);
  return p;
}

// Leading eigenvector of the correlation matrix by power iteration, long double.
std::vector<long double> power_pc1(const std::vector<std::vector<double>>& cols) {
  const std::size_t k = cols.size(), n = cols[0].size();
  std::vector<std::vector<long double>> z(k, std::vector<long double>(n));
  for (std::size_t j = 0; j < k; ++j) {
    long double mu = 0, ss = 0;
    for (double v : cols[j]) mu += v;
    mu /= n;
    for (double v : cols[j]) ss += (v - mu) * (v - mu);
    const long double sd = std::sqrt(ss / n);
    for (std::size_t i = 0; i < n; ++i) z[j][i] = (cols[j][i] - mu) / sd;
  }
  std::vector<std::vector<long double>> c(k, std::vector<long double>(k));
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < k; ++b)
      for (std::size_t i = 0; i < n; ++i) c[a][b] += z[a][i] * z[b][i] / n;
  std::vector<long double> v(k, 1.0L);
  for (int it = 0; it < 5000; ++it) {
    std::vector<long double> w(k, 0.0L);
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = 0; b < k; ++b) w[a] += c[a][b] * v[b];
    long double norm = 0;
    for (auto x : w) norm += x * x;
    norm = std::sqrt(norm);
    for (std::size_t a = 0; a < k; ++a) v[a] = w[a] / norm;
  }
  return v;
}

data::AssetTable planted_assets(int n, Rng& rng) {
  data::AssetTable t;
  t.columns = {{"radio", data::AssetKind::binary},
               {"tv", data::AssetKind::binary},
               {"fridge", data::AssetKind::binary},
               {"floor", data::AssetKind::ordinal},
               {"water", data::AssetKind::ordinal}};
  t.values = Matrix<double>(n, 5);
  for (int r = 0; r < n; ++r) {
    const double w = normal(rng);
    for (int c = 0; c < 3; ++c) t.values(r, c) = (w + normal(rng, 0, 0.8) > 0.3 * c) ? 1 : 0;
    for (int c = 3; c < 5; ++c) t.values(r, c) = std::clamp(std::round(1 + w + normal(rng, 0, 0.7)), 0.0, 2.0);
    t.cluster_ids.push_back("k" + std::to_string(r % 12));
  }
  return t;
}

}  // namespace

TEST_CASE("asset wealth index matches an independent first-component oracle") {
  Rng rng = make_rng(1);
  auto t = planted_assets(400, rng);
  const auto res = data::compute_awi(t);
  REQUIRE(res.used_columns.size() == 5);
  std::vector<std::vector<double>> cols(5, std::vector<double>(400));
  for (int r = 0; r < 400; ++r)
    for (int c = 0; c < 5; ++c) cols[c][r] = t.values(r, c);
  const auto v = power_pc1(cols);
  long double dot = 0;
  for (int j = 0; j < 5; ++j) dot += v[j] * res.loadings[j];
  CHECK(std::fabs(static_cast<double>(std::fabs(dot)) - 1.0) < 1e-10);
  // Oriented with the asset count: every loading is positive for planted data.
  for (double l : res.loadings) CHECK(l > 0);
  CHECK(res.explained_variance_ratio > 0.2);
  CHECK(res.cluster_awi.size() == 12);
  double mean = std::accumulate(res.household_scores.begin(), res.household_scores.end(), 0.0) / 400;
  CHECK(std::fabs(mean) < 1e-12);
}

TEST_CASE("asset index filtering and errors") {
  Rng rng = make_rng(2);
  auto t = planted_assets(100, rng);
  for (int r = 0; r < 11; ++r) t.values(r, 0) = NAN;  // 11% missing: dropped
  for (int r = 0; r < 100; ++r) t.values(r, 1) = 1;   // constant: dropped
  for (int r = 0; r < 5; ++r) t.values(r, 2) = NAN;   // 5%: imputed
  const auto res = data::compute_awi(t);
  CHECK(res.used_columns == std::vector<std::string>{"fridge", "floor", "water"});

  auto bad = planted_assets(20, rng);
  bad.values(0, 3) = 3;
  CHECK_THROWS_AS(data::compute_awi(bad), InputError);

  CHECK(data::ordinal_level("floor", "finished") == 2);
  CHECK(data::ordinal_level("toilet", "open") == 0);
  CHECK(data::ordinal_level("water", "unimproved") == 1);
  CHECK_THROWS_AS(data::ordinal_level("floor", "marble"), InputError);
  CHECK_THROWS_AS(data::ordinal_level("garage", "big"), InputError);
}

TEST_CASE("jitter stays within the class radius and hides the original") {
  Rng rng = make_rng(3);
  data::SurveyRecord rural{"c1", "AAA", 2015, 31.0, -1.0, 0.3, false};
  data::SurveyRecord urban = rural;
  urban.urban = true;
  double far_rural = 0, far_urban = 0;
  for (int i = 0; i < 2000; ++i) {
    const auto a = data::apply_jitter(rural, rng), b = data::apply_jitter(urban, rng);
    far_rural = std::max(far_rural, data::distance_km(rural.lon, rural.lat, a.lon, a.lat));
    far_urban = std::max(far_urban, data::distance_km(urban.lon, urban.lat, b.lon, b.lat));
    CHECK(a.awi == rural.awi);
  }
  CHECK(far_rural <= data::kRuralJitterKm + 1e-6);
  CHECK(far_urban <= data::kUrbanJitterKm + 1e-6);
  CHECK(far_rural > 0.9 * data::kRuralJitterKm);
  CHECK(far_urban > 0.9 * data::kUrbanJitterKm);
}

TEST_CASE("survey csv round trip is bit-exact") {
  Rng rng = make_rng(4);
  std::vector<data::SurveyRecord> recs;
  for (int i = 0; i < 50; ++i)
    recs.push_back({"c" + std::to_string(i), i % 2 ? "AAA" : "BBB", 2015 + 10 * (i % 2), 30 + uniform01(rng) / 3,
                    uniform01(rng) / 7, normal(rng), i % 3 == 0, i % 5});
  const auto p = scratch("surveys.csv");
  data::write_surveys(p, recs);
  CHECK(data::read_surveys(p) == recs);
  fs::remove(p);
}

TEST_CASE("pair selection takes the two most different seasons") {
  Rng rng = make_rng(5);
  std::vector<data::ImageTile> tiles;
  for (const char* season : {"dry", "long_rains", "short_rains"}) {
    auto t = testing::random_tile(4, rng, "L0");
    t.year = 2015;
    t.season = season;
    tiles.push_back(t);
  }
  // Push the "dry" tile away from the others.
  for (auto& p : tiles[0].pixels) p += 0.5f;
  auto single = testing::random_tile(4, rng, "L1");
  single.year = 2015;
  single.season = "dry";
  tiles.push_back(single);

  const auto sel = data::build_pairs(tiles);
  REQUIRE(sel.pairs.size() == 1);
  CHECK(sel.skipped == 1);
  const auto& pr = sel.pairs[0];
  CHECK(pr.tile_t1.season == "dry");
  const double d1 = data::mean_abs_difference(tiles[0], tiles[1]), d2 = data::mean_abs_difference(tiles[0], tiles[2]);
  CHECK(pr.tile_t2.season == (d1 >= d2 ? "long_rains" : "short_rains"));
  CHECK(pr.tile_t1.season < pr.tile_t2.season);
}

TEST_CASE("median composite") {
  Rng rng = make_rng(6);
  auto a = testing::random_tile(2, rng, "x"), b = a, c = a, d = a;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    a.pixels[i] = 1;
    b.pixels[i] = 5;
    c.pixels[i] = 2;
    d.pixels[i] = 4;
  }
  CHECK(data::median_composite({&a, &b, &c}).pixels[0] == 2.0f);
  CHECK(data::median_composite({&a, &b, &c, &d}).pixels[0] == 3.0f);
}

TEST_CASE("synthetic world is seeded and survives a disk round trip without its oracle") {
  data::SyntheticWorldConfig cfg;
  cfg.cells_per_side = 4;
  cfg.tile_size = 16;
  cfg.clusters_per_country = 8;
  const auto w1 = data::generate_world(cfg);
  const auto w2 = data::generate_world(cfg);
  CHECK(w1.surveys == w2.surveys);
  CHECK(w1.tiles.size() == std::size_t(3 * 16 * 2 * cfg.seasons));
  CHECK(w1.tiles[5].pixels == w2.tiles[5].pixels);
  CHECK(w1.surveys.size() == 3u * 8u * 2u);
  cfg.seed += 1;
  CHECK_FALSE(data::generate_world(cfg).surveys == w1.surveys);

  const auto dir = scratch("world");
  data::write_world(w1, dir);
  CHECK(fs::exists(dir / "oracle" / "truth.csv"));
  const auto back = data::load_world(dir);
  CHECK(back.truth.empty());
  CHECK(back.surveys == w1.surveys);
  CHECK(back.tiles.size() == w1.tiles.size());
  CHECK(back.tiles[7].pixels == w1.tiles[7].pixels);
  // Rasters are stored as f32.
  REQUIRE(back.population.size() == w1.population.size());
  for (std::size_t i = 0; i < w1.population.size(); ++i)
    CHECK(back.population[i] == static_cast<double>(static_cast<float>(w1.population[i])));
  const auto truth = data::read_truth(dir);
  CHECK(truth.size() == w1.truth.size());
  // Published coordinates are jittered away from the truth.
  int moved = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) moved += truth[i].lon != back.surveys[i].lon;
  CHECK(moved > int(truth.size()) / 2);
  fs::remove_all(dir);

  cfg.clusters_per_country = 17;
  CHECK_THROWS_AS(data::generate_world(cfg), ConfigError);
}
