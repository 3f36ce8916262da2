#include "tempov/analysis/report.hpp"

#include <cmath>
#include <fstream>

#include "tempov/core/error.hpp"
#include "tempov/data/io.hpp"

namespace tempov::analysis {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) rows.push_back(data::split_csv_line(line));
  }
  if (rows.empty()) throw DataError(path.string() + " is empty");
  return rows;
}

}  // namespace

CovariateTable read_covariates(const fs::path& csv) {
  const auto rows = read_csv(csv);
  if (rows[0].empty() || rows[0][0] != "cell_id") throw DataError("covariate CSV must start with cell_id");
  CovariateTable t;
  t.names.assign(rows[0].begin() + 1, rows[0].end());
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != rows[0].size()) throw DataError("covariate CSV row " + std::to_string(r) + " width");
    std::vector<double> v;
    for (std::size_t c = 1; c < rows[r].size(); ++c) v.push_back(data::parse_double(rows[r][c]));
    t.by_cell[rows[r][0]] = std::move(v);
  }
  return t;
}

std::map<std::string, std::string> read_countries(const fs::path& csv) {
  const auto rows = read_csv(csv);
  const auto& h = rows[0];
  const auto id = std::find(h.begin(), h.end(), "cell_id");
  auto cc = std::find(h.begin(), h.end(), "country_code");
  if (cc == h.end()) cc = std::find(h.begin(), h.end(), "country");
  if (id == h.end() || cc == h.end()) throw DataError("country CSV needs cell_id and country_code columns");
  const auto i = id - h.begin(), j = cc - h.begin();
  std::map<std::string, std::string> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != h.size()) throw DataError("country CSV row " + std::to_string(r) + " width");
    out[rows[r][i]] = rows[r][j];
  }
  return out;
}

PanelBuild build_panel(const mapgen::WealthMap& t1, const mapgen::WealthMap& t2,
                       const std::map<std::string, std::string>& countries, const std::vector<double>* population,
                       const CovariateTable* covariates) {
  if (!t1.grid.same_geometry(t2.grid)) throw ShapeError("maps are on different grids");
  const std::size_t n = t1.grid.size();
  const std::vector<double>& pop = population ? *population : t1.population;
  if (pop.size() != n) throw ShapeError("population layer is not aligned with the map grid");
  PanelBuild b;
  if (covariates) b.panel.covariate_names = covariates->names;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& cell = t1.grid.cells[i];
    const bool masked = (!t1.masked.empty() && t1.masked[i]) || (!t2.masked.empty() && t2.masked[i]);
    if (masked) {
      ++b.excluded_masked;
      continue;
    }
    const auto country = countries.find(cell.cell_id);
    const bool ok = t1.status[i] == mapgen::CellStatus::ok && t2.status[i] == mapgen::CellStatus::ok &&
                    std::isfinite(t1.mean[i]) && std::isfinite(t2.mean[i]) && country != countries.end();
    std::vector<double> cov;
    if (covariates) {
      const auto it = covariates->by_cell.find(cell.cell_id);
      if (it != covariates->by_cell.end()) cov = it->second;
    }
    if (!ok || (covariates && cov.empty())) {
      ++b.excluded_missing;
      continue;
    }
    b.panel.rows.push_back({cell.cell_id, country->second, t1.mean[i], t2.mean[i], pop[i], std::move(cov)});
  }
  return b;
}

json analyze(PanelBuild build, const AnalysisOptions& opts) {
  CellPanel& p = build.panel;
  p.validate();
  json report;
  std::vector<double> v1, v2, w;
  std::vector<std::string> groups;
  for (const auto& r : p.rows) {
    v1.push_back(r.wealth_t1);
    v2.push_back(r.wealth_t2);
    w.push_back(opts.population_weighted ? r.population : 1.0);
    groups.push_back(r.country);
  }
  report["panel"] = {{"cells", p.rows.size()},
                     {"excluded_masked", build.excluded_masked},
                     {"excluded_missing", build.excluded_missing},
                     {"population_weighted", opts.population_weighted},
                     {"years_elapsed", opts.years_elapsed}};
  report["theil"] = {{"t1", to_json(theil_decompose(v1, groups, w, opts.theil_shift))},
                     {"t2", to_json(theil_decompose(v2, groups, w, opts.theil_shift))}};
  report["convergence"] = to_json(beta_convergence(p, opts.years_elapsed, opts.population_weighted));
  report["variance_decomposition"] = to_json(variance_decompose(p, opts.population_weighted));
  report["covariate_effects"] =
      p.covariate_names.empty() ? json(nullptr)
                                : to_json(standardize_covariates(p, opts.years_elapsed, opts.population_weighted));
  return report;
}

}  // namespace tempov::analysis
