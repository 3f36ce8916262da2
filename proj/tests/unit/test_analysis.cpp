#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "tempov/analysis/stats.hpp"
#include "tempov/core/error.hpp"
#include "tempov/core/rng.hpp"

using namespace tempov;
using analysis::CellPanel;
using analysis::PanelRow;

namespace {

// Long-double Theil-T, straight from the definition.
long double theil_ld(const std::vector<double>& x, const std::vector<double>& w) {
  long double sw = 0, mu = 0, t = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sw += w[i];
    mu += w[i] * x[i];
  }
  mu /= sw;
  for (std::size_t i = 0; i < x.size(); ++i) t += w[i] / sw * (x[i] / mu) * std::log(x[i] / mu);
  return t;
}

CellPanel planted_panel(int n, double beta, double cov_effect, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  CellPanel p;
  p.covariate_names = {"signal", "noise"};
  for (int i = 0; i < n; ++i) {
    PanelRow r;
    r.cell_id = "c" + std::to_string(i);
    r.country = "K" + std::to_string(i % 20);
    r.wealth_t1 = normal(rng);
    const double s = normal(rng), z = normal(rng);
    const double growth = 0.1 + beta * r.wealth_t1 + cov_effect * s + normal(rng, 0, 0.02);
    r.wealth_t2 = r.wealth_t1 + 10 * growth;
    r.population = 0.5 + uniform01(rng);
    r.covariates = {s, z};
    p.rows.push_back(r);
  }
  return p;
}

}  // namespace

TEST_CASE("theil index matches its definition and splits additively") {
  Rng rng = make_rng(1);
  for (int t = 0; t < 100; ++t) {
    const int n = uniform_int(rng, 2, 80);
    std::vector<double> x(n), w(n);
    std::vector<std::string> g(n);
    for (int i = 0; i < n; ++i) {
      x[i] = 0.1 + std::exp(normal(rng));
      w[i] = uniform01(rng) + 0.01;
      g[i] = "g" + std::to_string(uniform_int(rng, 0, 4));
    }
    const auto r = analysis::theil_decompose(x, g, w);
    CHECK(r.shift == 0.0);
    CHECK(std::fabs(r.total - double(theil_ld(x, w))) < 1e-12);
    CHECK(std::fabs(r.within + r.between - r.total) < 1e-12);
    CHECK(r.between >= -1e-15);

    // Scale invariance.
    std::vector<double> y = x;
    for (auto& v : y) v *= 7.5;
    CHECK(analysis::theil_decompose(y, g, w).total == doctest::Approx(r.total).epsilon(1e-12));
  }
  const std::vector<double> v{1, 3}, w{1, 1};
  const std::vector<std::string> g{"a", "a"};
  CHECK(analysis::theil_decompose(v, g, w).total == doctest::Approx(0.1308120).epsilon(1e-6));
  const std::vector<double> eq{2, 2, 2};
  const std::vector<std::string> g3{"a", "b", "c"};
  const std::vector<double> w3{1, 2, 3};
  const auto e = analysis::theil_decompose(eq, g3, w3);
  CHECK(e.total == 0.0);
  CHECK(e.within_share == 0.0);
}

TEST_CASE("theil shifts non-positive values") {
  const std::vector<double> v{-1, 0, 2}, w{1, 1, 1};
  const std::vector<std::string> g{"a", "a", "b"};
  const auto r = analysis::theil_decompose(v, g, w);
  CHECK(r.shift == doctest::Approx(1 + 0.05 * 3));
  CHECK(r.total > 0);
  CHECK_THROWS(analysis::theil_decompose(v, g, w, analysis::ShiftPolicy::never));
}

TEST_CASE("planted convergence slope and covariate effect are recovered") {
  auto p = planted_panel(5000, -0.021, 0.05, 3);
  const auto fit = analysis::beta_convergence(p, 10.0);
  CHECK(fit.n == 5000);
  CHECK(fit.beta == doctest::Approx(-0.021).epsilon(0.002 / 0.021));
  CHECK(fit.ci_low < -0.021);
  CHECK(fit.ci_high > -0.021);
  CHECK(fit.se > 0);

  auto q = p;
  const auto eff = analysis::standardize_covariates(q, 10.0);
  REQUIRE(eff.effects.size() == 2);
  CHECK(eff.effects[0].name == "signal");
  CHECK(std::fabs(eff.effects[0].coefficient - 0.05) < 0.01);
  CHECK(std::fabs(eff.effects[1].coefficient) < 0.01);
}

TEST_CASE("weighted regression invariances") {
  auto p = planted_panel(500, -0.03, 0.0, 4);
  const auto base = analysis::beta_convergence(p, 10.0);

  auto scaled = p;
  for (auto& r : scaled.rows) r.population *= 37.0;
  const auto s = analysis::beta_convergence(scaled, 10.0);
  CHECK(s.beta == doctest::Approx(base.beta).epsilon(1e-10));
  CHECK(s.se == doctest::Approx(base.se).epsilon(1e-10));

  auto shifted = p;
  for (auto& r : shifted.rows) {
    r.wealth_t1 += 4.0;
    r.wealth_t2 += 4.0;
  }
  const auto sh = analysis::beta_convergence(shifted, 10.0);
  CHECK(sh.beta == doctest::Approx(base.beta).epsilon(1e-10));
  CHECK(sh.intercept == doctest::Approx(base.intercept - 4.0 * base.beta).epsilon(1e-10));

  auto reordered = p;
  std::reverse(reordered.rows.begin(), reordered.rows.end());
  CHECK(analysis::beta_convergence(reordered, 10.0).beta == doctest::Approx(base.beta).epsilon(1e-12));

  // Equal weights make the weighted and unweighted fits coincide.
  auto flat = p;
  for (auto& r : flat.rows) r.population = 2.0;
  CHECK(analysis::beta_convergence(flat, 10.0, true).beta ==
        doctest::Approx(analysis::beta_convergence(flat, 10.0, false).beta).epsilon(1e-12));
}

TEST_CASE("variance decomposition recovers a planted country share") {
  Rng rng = make_rng(5);
  CellPanel p;
  for (int c = 0; c < 200; ++c) {
    const double effect = normal(rng, 0, std::sqrt(1.0 / 3));
    for (int i = 0; i < 25; ++i) {
      PanelRow r;
      r.cell_id = std::to_string(c) + "_" + std::to_string(i);
      r.country = "K" + std::to_string(c);
      r.wealth_t1 = normal(rng);
      r.wealth_t2 = r.wealth_t1 + 10 * (effect + normal(rng, 0, std::sqrt(2.0 / 3)));
      r.population = 1.0;
      p.rows.push_back(r);
    }
  }
  const auto v = analysis::variance_decompose(p);
  CHECK(v.country_share + v.local_share == doctest::Approx(1.0));
  CHECK(v.country_share > 0.28);
  CHECK(v.country_share < 0.38);
}

TEST_CASE("covariate standardization drops constant and flags collinear columns") {
  auto p = planted_panel(200, -0.02, 0.0, 6);
  p.covariate_names = {"a", "const", "a_twice"};
  for (auto& r : p.rows) r.covariates = {r.covariates[0], 3.0, 2 * r.covariates[0]};
  const auto eff = analysis::standardize_covariates(p, 10.0);
  CHECK(eff.dropped == std::vector<std::string>{"const"});
  CHECK_FALSE(eff.collinear.empty());

  auto bad = planted_panel(10, -0.02, 0.0, 7);
  bad.rows[0].population = -1;
  CHECK_THROWS_AS(bad.validate(), InputError);
}
