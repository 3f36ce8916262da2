#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tempov/adapt/finetune.hpp"
#include "tempov/data/world.hpp"
#include "tempov/mapgen/grid.hpp"

namespace tempov::mapgen {

enum class CellStatus : std::uint8_t { ok = 0, missing = 1, failed = 2 };

struct WealthMap {
  MapGrid grid;
  std::vector<double> mean;      // NaN where no tile was inferred
  std::vector<double> variance;  // ensemble predictive variance
  std::vector<int> n_models;
  std::vector<CellStatus> status;
  std::vector<double> population;  // empty until a mask is applied
  std::vector<std::uint8_t> masked;
  double mask_threshold = 0.0;

  static WealthMap empty(const MapGrid& grid);
};

struct PipelineConfig {
  int acquisition_workers = 2;
  int inference_workers = 1;
  int queue_capacity = 8;
  bool shard_by_country = false;

  void validate() const;
};

// Produces the inference tile of one cell. Returns nullopt for a missing tile
// and throws for an undecodable one. Must be safe to call concurrently.
class TileSource {
 public:
  virtual ~TileSource() = default;
  virtual std::optional<data::ImageTile> fetch(const MapCell& cell) const = 0;
};

// Median composite of the season tiles <cell_id>_<year>_*.json in a directory.
class DirectoryTileSource : public TileSource {
 public:
  DirectoryTileSource(std::filesystem::path dir, int year);
  std::optional<data::ImageTile> fetch(const MapCell& cell) const override;

 private:
  std::filesystem::path dir_;
  int year_;
};

// Composite tiles straight from an in-memory world.
class WorldTileSource : public TileSource {
 public:
  WorldTileSource(const data::World& world, int epoch);
  std::optional<data::ImageTile> fetch(const MapCell& cell) const override;

 private:
  const data::World& world_;
  int epoch_;
};

struct Telemetry {
  std::vector<std::vector<int>> acquired;  // cells per acquisition worker
  std::vector<std::vector<int>> inferred;  // cells per inference worker
  int max_queue_depth = 0;
  int queue_capacity = 0;
  double seconds = 0.0;
};

nlohmann::json to_json(const Telemetry& t);

// Models run in the given order on every cell; per-model outputs land in
// pre-allocated slots and the ensemble is reduced after all workers join, so
// the result does not depend on worker counts or scheduling.
WealthMap run_pipeline(const MapGrid& grid, const std::vector<const adapt::WealthModel<float>*>& models,
                       const TileSource& source, const PipelineConfig& cfg, Telemetry* telemetry = nullptr);

// Masks cells whose density is <= threshold; values stay in place.
void apply_population_mask(WealthMap& map, const std::vector<double>& density, double threshold = 1.0);

// t2 − t1 means, summed variances, union of masks.
WealthMap diff_maps(const WealthMap& t1, const WealthMap& t2);

}  // namespace tempov::mapgen
