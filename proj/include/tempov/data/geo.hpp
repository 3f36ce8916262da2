#pragma once

#include <cmath>

namespace tempov::data {

// Flat local projection. The synthetic world sits near the equator, so a
// constant km-per-degree is accurate to well under a metre there.
inline constexpr double kKmPerDegree = 111.32;

inline double km_to_deg(double km) { return km / kKmPerDegree; }

inline double distance_km(double lon1, double lat1, double lon2, double lat2) {
  const double mean_lat = 0.5 * (lat1 + lat2) * M_PI / 180.0;
  const double dx = (lon2 - lon1) * std::cos(mean_lat);
  const double dy = lat2 - lat1;
  return kKmPerDegree * std::sqrt(dx * dx + dy * dy);
}

}  // namespace tempov::data
