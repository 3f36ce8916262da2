#include "tempov/eval/metrics.hpp"

#include <cmath>
#include <string>

#include "tempov/core/error.hpp"

namespace tempov::eval {

namespace {

void check(std::span<const double> y, std::span<const double> yhat) {
  if (y.size() != yhat.size()) throw MetricError("metric inputs differ in length");
  if (y.size() < 2) throw MetricError("metrics need at least 2 samples");
  for (std::size_t i = 0; i < y.size(); ++i)
    if (!std::isfinite(y[i]) || !std::isfinite(yhat[i])) throw MetricError("non-finite metric input");
}

double mean(std::span<const double> v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

double r_squared(std::span<const double> y, std::span<const double> yhat) {
  check(y, yhat);
  const double my = mean(y);
  double ss_res = 0, ss_tot = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    ss_res += (y[i] - yhat[i]) * (y[i] - yhat[i]);
    ss_tot += (y[i] - my) * (y[i] - my);
  }
  if (ss_tot == 0) throw MetricError("R² undefined: labels have zero variance");
  return 1.0 - ss_res / ss_tot;
}

double pearson_r2(std::span<const double> y, std::span<const double> yhat) {
  check(y, yhat);
  const double my = mean(y), mp = mean(yhat);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    sxy += (y[i] - my) * (yhat[i] - mp);
    sxx += (y[i] - my) * (y[i] - my);
    syy += (yhat[i] - mp) * (yhat[i] - mp);
  }
  if (sxx == 0 || syy == 0) throw MetricError("r² undefined: zero variance");
  return (sxy * sxy) / (sxx * syy);
}

}  // namespace tempov::eval
