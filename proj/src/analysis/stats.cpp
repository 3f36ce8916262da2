#include "tempov/analysis/stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <Eigen/Dense>

#include "tempov/core/error.hpp"

namespace tempov::analysis {

using nlohmann::json;

void CellPanel::validate() const {
  for (const auto& r : rows) {
    if (!(r.population >= 0)) throw InputError("cell " + r.cell_id + " has a negative population");
    if (!std::isfinite(r.wealth_t1) || !std::isfinite(r.wealth_t2)) {
      throw InputError("cell " + r.cell_id + " has non-finite wealth");
    }
    if (r.covariates.size() != covariate_names.size()) throw InputError("cell " + r.cell_id + " covariate width");
  }
}

TheilResult theil_decompose(std::span<const double> values, std::span<const std::string> groups,
                            std::span<const double> weights, ShiftPolicy policy) {
  const std::size_t n = values.size();
  if (groups.size() != n || weights.size() != n) throw ShapeError("theil_decompose: input lengths differ");
  if (n == 0) throw InputError("theil_decompose: no values");
  double wsum = 0;
  for (double w : weights) {
    if (!(w >= 0)) throw InputError("theil_decompose: weights must be >= 0");
    wsum += w;
  }
  if (!(wsum > 0)) throw InputError("theil_decompose: weights sum to zero");

  TheilResult r;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  if (policy == ShiftPolicy::always || (policy == ShiftPolicy::automatic && *lo <= 0)) {
    r.shift = -*lo + 0.05 * (*hi - *lo);
  }
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = values[i] + r.shift;
    if (!(y[i] > 0)) throw InputError("theil_decompose: non-positive value after shift");
  }

  double mu = 0;
  for (std::size_t i = 0; i < n; ++i) mu += weights[i] / wsum * y[i];
  struct Group {
    double share = 0, mean = 0;
  };
  std::map<std::string, Group> g;
  for (std::size_t i = 0; i < n; ++i) {
    auto& gr = g[groups[i]];
    gr.share += weights[i] / wsum;
    gr.mean += weights[i] / wsum * y[i];
  }
  for (auto& [k, gr] : g)
    if (gr.share > 0) gr.mean /= gr.share;

  for (std::size_t i = 0; i < n; ++i) {
    const double s = weights[i] / wsum;
    if (s == 0) continue;
    r.total += s * (y[i] / mu) * std::log(y[i] / mu);
    const Group& gr = g[groups[i]];
    r.within += s * (y[i] / mu) * std::log(y[i] / gr.mean);
  }
  for (const auto& [k, gr] : g)
    if (gr.share > 0) r.between += gr.share * (gr.mean / mu) * std::log(gr.mean / mu);
  r.within_share = r.total > 0 ? r.within / r.total : 0.0;
  return r;
}

namespace {

struct WlsFit {
  Eigen::VectorXd coef;
  Eigen::VectorXd se;
};

// Weighted least squares with HC1 sandwich errors. Throws DegenerateError on
// a rank-deficient design.
WlsFit wls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
  const Eigen::Index n = X.rows(), k = X.cols();
  if (n <= k) throw DegenerateError("regression needs more rows than coefficients");
  const Eigen::VectorXd sw = w.cwiseSqrt();
  const Eigen::MatrixXd Xw = sw.asDiagonal() * X;
  const Eigen::VectorXd yw = sw.cwiseProduct(y);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xw);
  if (qr.rank() < k) throw DegenerateError("collinear or degenerate regression design");
  WlsFit f;
  f.coef = qr.solve(yw);
  const Eigen::MatrixXd bread = (Xw.transpose() * Xw).inverse();
  const Eigen::VectorXd e = yw - Xw * f.coef;
  const Eigen::MatrixXd meat = Xw.transpose() * e.cwiseAbs2().asDiagonal() * Xw;
  const Eigen::MatrixXd cov = bread * meat * bread * (static_cast<double>(n) / static_cast<double>(n - k));
  f.se = cov.diagonal().cwiseSqrt();
  return f;
}

Eigen::VectorXd weights_of(const CellPanel& p, bool weighted) {
  Eigen::VectorXd w(p.rows.size());
  for (std::size_t i = 0; i < p.rows.size(); ++i) w[i] = weighted ? p.rows[i].population : 1.0;
  if (!(w.sum() > 0)) throw DegenerateError("all regression weights are zero");
  return w / w.sum();
}

}  // namespace

ConvergenceFit beta_convergence(const CellPanel& panel, double years, bool weighted) {
  panel.validate();
  const int n = static_cast<int>(panel.rows.size());
  if (n < 10) throw InputError("beta convergence needs at least 10 cells");
  if (!(years > 0)) throw InputError("years elapsed must be > 0");
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    const auto& r = panel.rows[i];
    X(i, 0) = 1.0;
    X(i, 1) = r.wealth_t1;
    y[i] = (r.wealth_t2 - r.wealth_t1) / years;
  }
  const Eigen::VectorXd w = weights_of(panel, weighted);
  const double m = w.dot(X.col(1));
  if (!(w.dot((X.col(1).array() - m).square().matrix()) > 0)) {
    throw DegenerateError("initial wealth has zero variance");
  }
  const WlsFit f = wls(X, y, w);
  ConvergenceFit c;
  c.intercept = f.coef[0];
  c.beta = f.coef[1];
  c.se = f.se[1];
  c.ci_low = c.beta - 1.959963984540054 * c.se;
  c.ci_high = c.beta + 1.959963984540054 * c.se;
  c.n = n;
  c.weighted = weighted;
  return c;
}

VarianceShares variance_decompose(const CellPanel& panel, bool weighted) {
  panel.validate();
  std::map<std::string, std::vector<int>> by_country;
  for (int i = 0; i < static_cast<int>(panel.rows.size()); ++i) by_country[panel.rows[i].country].push_back(i);
  if (by_country.size() < 2) throw InputError("variance decomposition needs at least 2 countries");
  for (const auto& [c, idx] : by_country)
    if (idx.size() < 2) throw InputError("country " + c + " has fewer than 2 cells");
  const Eigen::VectorXd w = weights_of(panel, weighted);
  std::vector<double> g(panel.rows.size());
  double mean = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    g[i] = panel.rows[i].wealth_t2 - panel.rows[i].wealth_t1;
    mean += w[i] * g[i];
  }
  double total = 0, between = 0;
  for (std::size_t i = 0; i < g.size(); ++i) total += w[i] * (g[i] - mean) * (g[i] - mean);
  for (const auto& [c, idx] : by_country) {
    double share = 0, cm = 0;
    for (int i : idx) {
      share += w[i];
      cm += w[i] * g[i];
    }
    if (share == 0) continue;
    cm /= share;
    between += share * (cm - mean) * (cm - mean);
  }
  if (!(total > 0)) throw DegenerateError("growth has zero variance");
  VarianceShares v;
  v.country_share = std::clamp(between / total, 0.0, 1.0);
  v.local_share = 1.0 - v.country_share;
  return v;
}

CovariateEffects standardize_covariates(CellPanel& panel, double years, bool weighted) {
  panel.validate();
  if (!(years > 0)) throw InputError("years elapsed must be > 0");
  const int n = static_cast<int>(panel.rows.size());
  const Eigen::VectorXd w = weights_of(panel, weighted);
  CovariateEffects out;
  std::vector<int> kept;
  for (std::size_t j = 0; j < panel.covariate_names.size(); ++j) {
    double m = 0, v = 0;
    for (int i = 0; i < n; ++i) m += w[i] * panel.rows[i].covariates[j];
    for (int i = 0; i < n; ++i) v += w[i] * std::pow(panel.rows[i].covariates[j] - m, 2);
    if (!(v > 1e-24)) {
      out.dropped.push_back(panel.covariate_names[j]);
      out.warnings.push_back("covariate '" + panel.covariate_names[j] + "' has zero variance and was dropped");
      continue;
    }
    const double sd = std::sqrt(v);
    for (auto& r : panel.rows) r.covariates[j] = (r.covariates[j] - m) / sd;
    kept.push_back(static_cast<int>(j));
  }
  if (kept.empty()) return out;

  // Greedy rank check in column order: a column that adds no rank is collinear.
  std::vector<int> used;
  Eigen::MatrixXd X(n, 1);
  X.col(0).setOnes();
  for (int j : kept) {
    Eigen::MatrixXd trial(n, X.cols() + 1);
    trial << X, Eigen::VectorXd::NullaryExpr(n, [&](Eigen::Index i) { return panel.rows[i].covariates[j]; });
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(trial);
    qr.setThreshold(1e-10);
    if (qr.rank() < trial.cols()) {
      out.collinear.push_back(panel.covariate_names[j]);
      out.warnings.push_back("covariate '" + panel.covariate_names[j] + "' is collinear with earlier columns");
      continue;
    }
    X = trial;
    used.push_back(j);
  }
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y[i] = (panel.rows[i].wealth_t2 - panel.rows[i].wealth_t1) / years;
  const WlsFit f = wls(X, y, w);
  for (std::size_t k = 0; k < used.size(); ++k) {
    out.effects.push_back({panel.covariate_names[used[k]], f.coef[k + 1], f.se[k + 1]});
  }
  return out;
}

json to_json(const TheilResult& t) {
  return {{"total", t.total}, {"within", t.within}, {"between", t.between}, {"within_share", t.within_share},
          {"shift", t.shift}};
}

json to_json(const ConvergenceFit& f) {
  return {{"beta", f.beta}, {"intercept", f.intercept}, {"se", f.se},     {"ci95", {f.ci_low, f.ci_high}},
          {"n", f.n},       {"weighted", f.weighted}};
}

json to_json(const VarianceShares& v) { return {{"country_share", v.country_share}, {"local_share", v.local_share}}; }

json to_json(const CovariateEffects& c) {
  json effects = json::array();
  for (const auto& e : c.effects) effects.push_back({{"name", e.name}, {"per_sd", e.coefficient}, {"se", e.se}});
  return {{"effects", effects}, {"dropped", c.dropped}, {"collinear", c.collinear}, {"warnings", c.warnings}};
}

}  // namespace tempov::analysis
