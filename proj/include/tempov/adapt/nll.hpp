#pragma once

#include <span>
#include <vector>

#include "tempov/backbone/heads.hpp"

namespace tempov::adapt {

using backbone::GaussianPrediction;

// log σ̂² + (y − ŷ)² / σ̂²
double gaussian_nll(double y, const GaussianPrediction& pred);
double gaussian_nll(std::span<const double> y, std::span<const GaussianPrediction> pred);  // batch mean

struct NllGradient {
  double d_mean = 0;    // ∂L/∂ŷ = 2(ŷ − y)/σ̂²
  double d_logvar = 0;  // ∂L/∂log σ̂² = 1 − (y − ŷ)²/σ̂²
};

NllGradient nll_gradient(double y, const GaussianPrediction& pred);

struct AttenuationReport {
  std::vector<NllGradient> analytic;
  std::vector<NllGradient> numeric;  // central differences
  double max_relative_error = 0;
  bool monotone = false;  // |∂L/∂ŷ| strictly decreasing in σ̂² at a fixed residual
  bool passed = false;
};

// Checks the per-sample gradient law against finite differences and the
// attenuation of |∂L/∂ŷ| with growing variance. `tolerance` bounds the
// relative error (absolute for gradients below 1e-8).
AttenuationReport gradient_attenuation_check(std::span<const double> y, std::span<const GaussianPrediction> pred,
                                             double tolerance = 1e-6);

}  // namespace tempov::adapt
