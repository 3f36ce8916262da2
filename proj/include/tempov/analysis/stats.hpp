#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace tempov::analysis {

struct PanelRow {
  std::string cell_id;
  std::string country;
  double wealth_t1 = 0.0;
  double wealth_t2 = 0.0;
  double population = 0.0;
  std::vector<double> covariates;
};

struct CellPanel {
  std::vector<std::string> covariate_names;
  std::vector<PanelRow> rows;

  // Throws InputError on negative populations, non-finite wealth or a
  // covariate row of the wrong width.
  void validate() const;
};

enum class ShiftPolicy { automatic, always, never };

struct TheilResult {
  double total = 0.0;
  double within = 0.0;
  double between = 0.0;
  double within_share = 0.0;  // 0 when total is 0
  double shift = 0.0;         // added to every value before the index
};

// Population-weighted Theil-T with its within/between-group split. The shift
// −min + 0.05·range is applied when asked, or automatically if any value is ≤ 0.
TheilResult theil_decompose(std::span<const double> values, std::span<const std::string> groups,
                            std::span<const double> weights, ShiftPolicy shift = ShiftPolicy::automatic);

struct ConvergenceFit {
  double beta = 0.0;
  double intercept = 0.0;
  double se = 0.0;  // HC1 robust
  double ci_low = 0.0;
  double ci_high = 0.0;
  int n = 0;
  bool weighted = true;
};

// WLS of (w_t2 − w_t1)/years on w_t1 with intercept.
ConvergenceFit beta_convergence(const CellPanel& panel, double years_elapsed, bool weighted = true);

struct VarianceShares {
  double country_share = 0.0;
  double local_share = 0.0;
};

VarianceShares variance_decompose(const CellPanel& panel, bool weighted = true);

struct CovariateEffect {
  std::string name;
  double coefficient = 0.0;  // growth per sd
  double se = 0.0;
};

struct CovariateEffects {
  std::vector<CovariateEffect> effects;
  std::vector<std::string> dropped;  // zero variance
  std::vector<std::string> collinear;
  std::vector<std::string> warnings;
};

// Standardizes the covariate columns in place (weighted mean 0, sd 1) and
// regresses annualized growth on them by WLS.
CovariateEffects standardize_covariates(CellPanel& panel, double years_elapsed, bool weighted = true);

nlohmann::json to_json(const TheilResult& t);
nlohmann::json to_json(const ConvergenceFit& f);
nlohmann::json to_json(const VarianceShares& v);
nlohmann::json to_json(const CovariateEffects& c);

}  // namespace tempov::analysis
