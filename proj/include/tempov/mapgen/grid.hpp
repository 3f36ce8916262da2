#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tempov/data/tile.hpp"
#include "tempov/data/world.hpp"

namespace tempov::mapgen {

struct CountrySpan {
  std::string code;
  double west_km = 0.0;  // offset of the country's western edge from the region edge
};

// Box anchored at its north-west corner.
struct Region {
  double west = 0.0;
  double north = 0.0;
  double width_km = 0.0;
  double height_km = 0.0;
  std::vector<CountrySpan> countries;
};

struct MapCell {
  int index = 0;
  int row = 0;
  int col = 0;
  double lon = 0.0;  // centroid
  double lat = 0.0;
  std::string country;
  std::string cell_id;
  data::GeoTransform footprint;  // tile the cell is inferred from
};

struct MapGrid {
  Region region;
  double cell_km = 0.0;
  int tile_px = 64;
  int rows = 0;
  int cols = 0;
  std::vector<MapCell> cells;  // row-major

  std::size_t size() const { return cells.size(); }
  bool same_geometry(const MapGrid& other) const;
};

// Row-major enumeration. Throws ConfigError on a degenerate box, a
// non-positive cell size or a box that cell_km does not tile.
MapGrid make_grid(const Region& region, double cell_km, int tile_px = 64);

// Region and cell size of a synthetic world's generation grid.
MapGrid grid_of_world(const data::WorldGrid& g, int tile_px);

void to_json(nlohmann::json& j, const MapGrid& g);
// Accepts a grid document or a world manifest (world.json).
MapGrid grid_from_json(const nlohmann::json& j);

}  // namespace tempov::mapgen
