#include "tempov/adapt/nll.hpp"

#include <cmath>

#include "tempov/core/error.hpp"

namespace tempov::adapt {

double gaussian_nll(double y, const GaussianPrediction& p) {
  if (!std::isfinite(y) || !std::isfinite(p.mean) || !std::isfinite(p.variance)) {
    throw InputError("non-finite input to Gaussian NLL");
  }
  if (!(p.variance > 0)) throw InputError("Gaussian NLL needs a positive variance");
  const double r = y - p.mean;
  return std::log(p.variance) + r * r / p.variance;
}

double gaussian_nll(std::span<const double> y, std::span<const GaussianPrediction> pred) {
  if (y.size() != pred.size() || y.empty()) throw ShapeError("Gaussian NLL: label and prediction counts differ");
  double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) s += gaussian_nll(y[i], pred[i]);
  return s / static_cast<double>(y.size());
}

NllGradient nll_gradient(double y, const GaussianPrediction& p) {
  const double r = y - p.mean;
  return {2.0 * (p.mean - y) / p.variance, 1.0 - r * r / p.variance};
}

namespace {

bool close(double a, double b, double tol) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale < 1e-8 ? std::abs(a - b) <= tol : std::abs(a - b) / scale <= tol;
}

double rel_err(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale < 1e-8 ? std::abs(a - b) : std::abs(a - b) / scale;
}

}  // namespace

AttenuationReport gradient_attenuation_check(std::span<const double> y, std::span<const GaussianPrediction> pred,
                                             double tolerance) {
  if (y.size() != pred.size()) throw ShapeError("attenuation check: label and prediction counts differ");
  AttenuationReport rep;
  bool ok = true;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const auto a = nll_gradient(y[i], pred[i]);
    // Central differences in ŷ and in s = log σ̂².
    const double hm = 1e-5 * std::max(1.0, std::abs(pred[i].mean));
    const double hs = 1e-5;
    auto at = [&](double m, double s) { return gaussian_nll(y[i], {m, std::exp(s)}); };
    const double s0 = std::log(pred[i].variance);
    NllGradient n;
    n.d_mean = (at(pred[i].mean + hm, s0) - at(pred[i].mean - hm, s0)) / (2 * hm);
    n.d_logvar = (at(pred[i].mean, s0 + hs) - at(pred[i].mean, s0 - hs)) / (2 * hs);
    rep.max_relative_error = std::max({rep.max_relative_error, rel_err(a.d_mean, n.d_mean), rel_err(a.d_logvar, n.d_logvar)});
    ok = ok && close(a.d_mean, n.d_mean, tolerance) && close(a.d_logvar, n.d_logvar, tolerance);
    rep.analytic.push_back(a);
    rep.numeric.push_back(n);
  }
  // Attenuation at a unit residual over a variance sweep.
  double prev = INFINITY;
  rep.monotone = true;
  for (double v : {0.25, 0.5, 1.0, 2.0, 4.0, 8.0}) {
    const double g = std::abs(nll_gradient(1.0, {0.0, v}).d_mean);
    rep.monotone = rep.monotone && g < prev;
    prev = g;
  }
  rep.passed = ok && rep.monotone;
  return rep;
}

}  // namespace tempov::adapt
