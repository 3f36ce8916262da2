#pragma once

#include <map>
#include <string>
#include <vector>

#include "tempov/core/matrix.hpp"

namespace tempov::data {

enum class AssetKind { binary, ordinal };

struct AssetColumn {
  std::string name;
  AssetKind kind = AssetKind::binary;
};

// Households × assets. Missing entries are NaN. Ordinal columns hold 0, 1 or 2.
struct AssetTable {
  std::vector<AssetColumn> columns;
  Matrix<double> values;
  std::vector<std::string> cluster_ids;  // one per household row
};

// Dwelling categories → {0,1,2}: natural/rudimentary/finished for floor, wall
// and roof; open/unimproved/improved for toilets; surface/unimproved/improved
// for water. Throws InputError on anything else.
int ordinal_level(const std::string& variable, const std::string& category);

struct AwiResult {
  std::vector<double> household_scores;
  std::map<std::string, double> cluster_awi;
  std::vector<std::string> used_columns;
  std::vector<double> loadings;  // over used_columns, unit norm
  double explained_variance_ratio = 0.0;
};

inline constexpr double kMaxMissingFraction = 0.10;

// First principal component of the standardized, mean-imputed asset columns.
// Oriented to correlate positively with the household asset row-sum.
AwiResult compute_awi(const AssetTable& table);

}  // namespace tempov::data
