#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "tempov/data/survey.hpp"

namespace tempov::eval {

// A record is one cluster observed in one survey year.
using ClusterKey = std::tuple<std::string, int, std::string>;  // country, year, cluster_id

ClusterKey key_of(const data::SurveyRecord& r);

// Median nearest-neighbour distance between points, in km.
double median_nn_spacing_km(std::span<const double> lon, std::span<const double> lat);

// Grid-hash block of a point for square blocks of side `block_km`.
std::pair<long, long> block_of(double lon, double lat, double block_km);

struct FoldAssignment {
  int k = 5;
  std::uint64_t seed = 0;
  double block_factor = 3.0;  // block side = factor × median spacing of the country-year
  std::map<ClusterKey, int> fold;
  std::map<std::string, double> block_km;  // per "country|year"
  std::vector<std::string> degenerate;     // country-years with fewer blocks than folds

  int fold_of(const data::SurveyRecord& r) const;
};

nlohmann::json to_json(const FoldAssignment& f);
FoldAssignment fold_assignment_from_json(const nlohmann::json& j);

// Spatial blocks dealt into k folds per country-year. Blocks are visited
// largest first (seeded order among equal sizes) and each goes to the
// currently smallest fold, so sizes stay within one block of balance.
FoldAssignment assign_folds(const std::vector<data::SurveyRecord>& records, int k, std::uint64_t seed,
                            double block_factor = 3.0);

// Writes fold ids into the records.
void apply_folds(std::vector<data::SurveyRecord>& records, const FoldAssignment& folds);

}  // namespace tempov::eval
