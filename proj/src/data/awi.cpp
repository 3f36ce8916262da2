#include "tempov/data/awi.hpp"

#include <array>
#include <cmath>

#include <Eigen/Dense>

#include "tempov/core/error.hpp"

namespace tempov::data {

int ordinal_level(const std::string& variable, const std::string& category) {
  static const std::map<std::string, std::array<const char*, 3>> kLevels = {
      {"floor", {"natural", "rudimentary", "finished"}},
      {"wall", {"natural", "rudimentary", "finished"}},
      {"roof", {"natural", "rudimentary", "finished"}},
      {"toilet", {"open", "unimproved", "improved"}},
      {"water", {"surface", "unimproved", "improved"}},
  };
  auto it = kLevels.find(variable);
  if (it == kLevels.end()) throw InputError("unknown dwelling variable '" + variable + "'");
  for (int i = 0; i < 3; ++i)
    if (category == it->second[i]) return i;
  throw InputError("category '" + category + "' is not a level of " + variable);
}

AwiResult compute_awi(const AssetTable& table) {
  const int n = table.values.rows();
  const int m = table.values.cols();
  if (static_cast<int>(table.columns.size()) != m) throw ShapeError("asset table column metadata mismatch");
  if (static_cast<int>(table.cluster_ids.size()) != n) throw ShapeError("asset table needs one cluster id per row");
  if (n < 3) throw DegenerateError("asset index needs at least 3 households");

  // Missingness filter, mean imputation, then drop constant columns.
  std::vector<int> keep;
  std::vector<std::vector<double>> cols;
  for (int c = 0; c < m; ++c) {
    int missing = 0;
    double sum = 0;
    for (int r = 0; r < n; ++r) {
      const double v = table.values(r, c);
      if (std::isnan(v)) {
        ++missing;
      } else {
        if (table.columns[c].kind == AssetKind::ordinal && v != 0 && v != 1 && v != 2) {
          throw InputError("ordinal column " + table.columns[c].name + " has a value outside {0,1,2}");
        }
        sum += v;
      }
    }
    if (missing > kMaxMissingFraction * n) continue;
    const double mean = sum / (n - missing);
    std::vector<double> col(n);
    for (int r = 0; r < n; ++r) col[r] = std::isnan(table.values(r, c)) ? mean : table.values(r, c);
    double var = 0;
    for (double v : col) var += (v - mean) * (v - mean);
    if (var <= 1e-12 * n) continue;
    keep.push_back(c);
    cols.push_back(std::move(col));
  }
  const int k = static_cast<int>(keep.size());
  if (k < 2) throw DegenerateError("fewer than 2 usable asset columns after filtering");

  Eigen::MatrixXd z(n, k);
  Eigen::VectorXd row_sum = Eigen::VectorXd::Zero(n);
  for (int j = 0; j < k; ++j) {
    Eigen::Map<const Eigen::VectorXd> col(cols[j].data(), n);
    const double mean = col.mean();
    const double sd = std::sqrt((col.array() - mean).square().sum() / n);
    z.col(j) = (col.array() - mean) / sd;
    row_sum += col;
  }
  const Eigen::MatrixXd corr = (z.transpose() * z) / n;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(corr);
  if (es.info() != Eigen::Success) throw DegenerateError("eigen-decomposition of asset correlations failed");
  Eigen::VectorXd v = es.eigenvectors().col(k - 1);
  const double top = es.eigenvalues()(k - 1);
  if (!(top > 1e-12)) throw DegenerateError("asset correlation matrix is degenerate");

  Eigen::VectorXd score = z * v;
  const double rs_mean = row_sum.mean();
  const double orient = (score.array() * (row_sum.array() - rs_mean)).sum();
  Eigen::Index largest = 0;
  v.cwiseAbs().maxCoeff(&largest);
  if (orient < 0 || (orient == 0 && v(largest) < 0)) {
    v = -v;
    score = -score;
  }

  AwiResult res;
  res.household_scores.assign(score.data(), score.data() + n);
  res.loadings.assign(v.data(), v.data() + k);
  for (int c : keep) res.used_columns.push_back(table.columns[c].name);
  res.explained_variance_ratio = top / es.eigenvalues().sum();
  std::map<std::string, std::pair<double, int>> acc;
  for (int r = 0; r < n; ++r) {
    auto& a = acc[table.cluster_ids[r]];
    a.first += score(r);
    ++a.second;
  }
  for (const auto& [id, a] : acc) res.cluster_awi[id] = a.first / a.second;
  return res;
}

}  // namespace tempov::data
