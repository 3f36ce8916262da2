#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tempov/data/tile.hpp"

namespace tempov::data {

// <stem>.json manifest + <stem>.bin raw f32le, band-major.
void write_tile(const std::filesystem::path& stem, const ImageTile& tile);
ImageTile read_tile(const std::filesystem::path& stem);

// Multi-layer float raster in the same manifest + raw convention; used for
// population density and map outputs.
struct Raster {
  int height = 0;
  int width = 0;
  GeoTransform geo;
  std::vector<std::string> layer_names;
  std::vector<std::vector<float>> layers;  // each height·width, row-major

  const std::vector<float>& layer(const std::string& name) const;
  bool has_layer(const std::string& name) const;

  friend bool operator==(const Raster&, const Raster&) = default;
};

void write_raster(const std::filesystem::path& stem, const Raster& raster);
Raster read_raster(const std::filesystem::path& stem);

// Shortest round-trip decimal text for a double.
std::string format_double(double v);
double parse_double(const std::string& s);

std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace tempov::data
