#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tempov/mapgen/pipeline.hpp"

namespace tempov::mapgen {

enum class HeatmapMode { level, change };

struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;
  bool blank = false;  // nothing left to draw once masked cells are greyed out
};

inline constexpr int kPixelsPerCell = 8;
inline constexpr int kLegendHeight = 12;

// Level mode: sequential ramp over the unmasked value range. Change mode:
// diverging ramp centred at zero. Masked cells grey, missing cells dark grey,
// legend strip along the bottom.
Image render_heatmap(const WealthMap& map, HeatmapMode mode);

std::string encode_ppm(const Image& img);
void write_ppm(const std::filesystem::path& path, const Image& img);

// Raster layers mean, variance, n_models, masked, status (and population when
// present) in the tile manifest + raw f32 convention.
void write_map_raster(const std::filesystem::path& stem, const WealthMap& map);
WealthMap read_map_raster(const std::filesystem::path& stem, const MapGrid& grid);

// cell_id,lon,lat,mean,variance,masked
void write_map_csv(const std::filesystem::path& path, const WealthMap& map);

}  // namespace tempov::mapgen
