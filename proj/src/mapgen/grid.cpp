#include "tempov/mapgen/grid.hpp"

#include <cmath>
#include <cstdio>

#include "tempov/core/error.hpp"
#include "tempov/data/geo.hpp"

namespace tempov::mapgen {

using nlohmann::json;

bool MapGrid::same_geometry(const MapGrid& o) const {
  if (rows != o.rows || cols != o.cols || cell_km != o.cell_km) return false;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (cells[i].cell_id != o.cells[i].cell_id || !(cells[i].footprint == o.cells[i].footprint)) return false;
  }
  return true;
}

MapGrid make_grid(const Region& region, double cell_km, int tile_px) {
  if (!(cell_km > 0)) throw ConfigError("cell size must be > 0");
  if (!(region.width_km > 0 && region.height_km > 0)) throw ConfigError("degenerate region box");
  if (tile_px < 1) throw ConfigError("tile_px must be >= 1");
  auto count = [&](double extent) {
    const double n = extent / cell_km;
    const double r = std::round(n);
    if (std::abs(n - r) > 1e-9 * std::max(1.0, n)) throw ConfigError("cell size does not tile the region box");
    return static_cast<int>(r);
  };
  MapGrid g;
  g.region = region;
  g.cell_km = cell_km;
  g.tile_px = tile_px;
  g.rows = count(region.height_km);
  g.cols = count(region.width_km);
  if (region.countries.empty()) throw ConfigError("region has no countries");
  for (std::size_t i = 1; i < region.countries.size(); ++i) {
    if (region.countries[i].west_km <= region.countries[i - 1].west_km) {
      throw ConfigError("country spans must be ordered west to east");
    }
  }
  const double deg = data::km_to_deg(cell_km);
  g.cells.reserve(static_cast<std::size_t>(g.rows) * g.cols);
  for (int r = 0; r < g.rows; ++r)
    for (int c = 0; c < g.cols; ++c) {
      MapCell cell;
      cell.index = r * g.cols + c;
      cell.row = r;
      cell.col = c;
      cell.lon = region.west + (c + 0.5) * deg;
      cell.lat = region.north - (r + 0.5) * deg;
      const double x = (c + 0.5) * cell_km;
      cell.country = region.countries.front().code;
      for (const auto& s : region.countries)
        if (s.west_km <= x) cell.country = s.code;
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%s_r%02d_c%02d", cell.country.c_str(), r, c);
      cell.cell_id = buf;
      cell.footprint = {region.west + c * deg, region.north - r * deg, deg / tile_px};
      g.cells.push_back(std::move(cell));
    }
  return g;
}

MapGrid grid_of_world(const data::WorldGrid& w, int tile_px) {
  Region r;
  r.west = w.origin_lon;
  r.north = w.origin_lat;
  r.width_km = w.cols * w.cell_km;
  r.height_km = w.rows * w.cell_km;
  for (std::size_t k = 0; k < w.country_codes.size(); ++k) {
    r.countries.push_back({w.country_codes[k], static_cast<double>(k) * w.cells_per_country * w.cell_km});
  }
  return make_grid(r, w.cell_km, tile_px);
}

void to_json(json& j, const MapGrid& g) {
  json countries = json::array();
  for (const auto& c : g.region.countries) countries.push_back({{"code", c.code}, {"west_km", c.west_km}});
  j = {{"west", g.region.west},         {"north", g.region.north}, {"width_km", g.region.width_km},
       {"height_km", g.region.height_km}, {"cell_km", g.cell_km},  {"tile_px", g.tile_px},
       {"countries", countries}};
}

MapGrid grid_from_json(const json& j) {
  if (j.contains("grid") && j.contains("config")) {
    const auto w = j.at("grid").get<data::WorldGrid>();
    return grid_of_world(w, j.at("config").value("tile_size", 64));
  }
  Region r;
  r.west = j.at("west").get<double>();
  r.north = j.at("north").get<double>();
  r.width_km = j.at("width_km").get<double>();
  r.height_km = j.at("height_km").get<double>();
  for (const auto& c : j.at("countries")) r.countries.push_back({c.at("code"), c.at("west_km").get<double>()});
  return make_grid(r, j.at("cell_km").get<double>(), j.value("tile_px", 64));
}

}  // namespace tempov::mapgen
