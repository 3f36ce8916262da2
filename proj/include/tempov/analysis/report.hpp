#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tempov/analysis/stats.hpp"
#include "tempov/mapgen/pipeline.hpp"

namespace tempov::analysis {

struct CovariateTable {
  std::vector<std::string> names;
  std::map<std::string, std::vector<double>> by_cell;
};

// cell_id,<name>,<name>,...
CovariateTable read_covariates(const std::filesystem::path& csv);
// cell_id,...,country_code,... (any column order, header required)
std::map<std::string, std::string> read_countries(const std::filesystem::path& csv);

struct PanelBuild {
  CellPanel panel;
  int excluded_masked = 0;
  int excluded_missing = 0;  // no prediction, no country, or no covariates
};

// Keeps cells that are inferred and unmasked on both maps. Population comes
// from `population` when given, else from the t1 map.
PanelBuild build_panel(const mapgen::WealthMap& t1, const mapgen::WealthMap& t2,
                       const std::map<std::string, std::string>& countries,
                       const std::vector<double>* population = nullptr, const CovariateTable* covariates = nullptr);

struct AnalysisOptions {
  double years_elapsed = 10.0;
  bool population_weighted = true;
  ShiftPolicy theil_shift = ShiftPolicy::automatic;
};

// {theil, convergence, variance_decomposition, covariate_effects, panel}
nlohmann::json analyze(PanelBuild build, const AnalysisOptions& opts);

}  // namespace tempov::analysis
