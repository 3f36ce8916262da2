#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tempov/data/survey.hpp"
#include "tempov/data/tile.hpp"

namespace tempov::data {

// Synthetic stand-in for imagery and census labels. Countries are laid out
// side by side along the x axis, each a square block of grid cells; every cell
// is one tile footprint.
struct SyntheticWorldConfig {
  int num_countries = 3;
  int cells_per_side = 10;
  double cell_km = 6.0;
  int tile_size = 64;
  int seasons = 3;
  std::array<int, 2> years{2015, 2025};
  double origin_lon = 30.0;  // north-west corner
  double origin_lat = 0.0;

  // Built-up field.
  int urban_seeds = 3;  // per country
  double seed_radius_min_km = 3.0;
  double seed_radius_max_km = 9.0;
  double correlation_km = 18.0;
  double background_amplitude = 0.12;

  // Reflectance.
  std::array<double, kNumBands> seasonal_amplitude{0.005, 0.02, 0.025, 0.06, 0.01, 0.005};
  double pixel_noise = 0.01;
  // Fine-scale fields and parcels; persistent across seasons and epochs.
  double land_cover_km = 1.2;
  double land_cover_amplitude = 0.3;

  // Wealth link. Epoch 2 uses slope·epoch2_slope_scale and intercept + epoch2_shift.
  double wealth_slope = 3.0;
  double wealth_intercept = -1.0;
  double wealth_noise = 0.12;
  double epoch2_slope_scale = 0.8;
  double epoch2_shift = 0.6;

  // Decadal change applied to the built-up field in epoch 2.
  double change_magnitude = 0.15;
  double change_correlation_km = 30.0;

  int clusters_per_country = 80;  // per epoch
  bool jitter = true;
  std::uint64_t seed = 7;

  void validate() const;
  int grid_cols() const { return num_countries * cells_per_side; }
  int grid_rows() const { return cells_per_side; }
};

void to_json(nlohmann::json& j, const SyntheticWorldConfig& c);
void from_json(const nlohmann::json& j, SyntheticWorldConfig& c);

// Row-major generation grid shared with map generation.
struct WorldGrid {
  double origin_lon = 0.0;
  double origin_lat = 0.0;
  double cell_km = 6.0;
  int rows = 0;
  int cols = 0;
  int cells_per_country = 0;  // columns per country
  std::vector<std::string> country_codes;

  int num_cells() const { return rows * cols; }
  double cell_deg() const;
  double center_lon(int cell) const;
  double center_lat(int cell) const;
  const std::string& country_of(int cell) const;
  std::string cell_name(int cell) const;
  // Cell containing the point, clamped into the grid.
  int locate(double lon, double lat) const;
};

void to_json(nlohmann::json& j, const WorldGrid& g);
void from_json(const nlohmann::json& j, WorldGrid& g);

// Pre-jitter truth; lives in the sealed oracle file only.
struct TruthRecord {
  std::string cluster_id;
  std::string country_code;
  int year = 0;
  double lon = 0.0;
  double lat = 0.0;
  double awi = 0.0;
  double built_mean = 0.0;
  int cell = 0;
};

struct CellCovariates {
  double institutions = 0.0;  // constant within a country
  double distance_to_capital_km = 0.0;
  double conflict_events = 0.0;
  double temperature_trend = 0.0;
};

struct World {
  SyntheticWorldConfig config;
  WorldGrid grid;
  std::vector<ImageTile> tiles;  // cell-major, then epoch, then season
  std::vector<SurveyRecord> surveys;
  std::vector<TruthRecord> truth;
  std::array<std::vector<double>, 2> built_mean;  // per epoch, per cell
  std::array<std::vector<double>, 2> cell_awi;    // noiseless wealth per epoch, per cell
  std::vector<double> population;                 // persons/km², per cell
  std::vector<CellCovariates> covariates;

  const ImageTile& tile(int cell, int epoch, int season) const;
};

World generate_world(const SyntheticWorldConfig& cfg);

// Directory layout: world.json, tiles/<loc>_<year>_<season>.{json,bin},
// surveys.csv, population.{json,bin}, grid.csv, covariates.csv and the sealed
// oracle/truth.csv.
void write_world(const World& world, const std::filesystem::path& dir);

// Loads everything except the oracle file.
World load_world(const std::filesystem::path& dir);
std::vector<TruthRecord> read_truth(const std::filesystem::path& dir);

// Median composite of every season of one cell and epoch.
ImageTile cell_composite(const World& world, int cell, int epoch);

int epoch_of_year(const SyntheticWorldConfig& cfg, int year);

}  // namespace tempov::data
