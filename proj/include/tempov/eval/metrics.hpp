#pragma once

#include <span>

namespace tempov::eval {

// 1 − SS_res / SS_tot. Throws MetricError on zero label variance or length < 2.
double r_squared(std::span<const double> y, std::span<const double> yhat);

// Squared Pearson correlation. Throws MetricError if either side is constant.
double pearson_r2(std::span<const double> y, std::span<const double> yhat);

}  // namespace tempov::eval
