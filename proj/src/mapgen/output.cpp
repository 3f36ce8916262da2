#include "tempov/mapgen/output.hpp"

#include <array>
#include <cmath>
#include <fstream>

#include "tempov/core/error.hpp"
#include "tempov/data/io.hpp"

namespace tempov::mapgen {

namespace {

using Rgb = std::array<std::uint8_t, 3>;

constexpr Rgb kMaskedGrey{160, 160, 160};
constexpr Rgb kMissingGrey{64, 64, 64};
constexpr Rgb kLegendBackground{255, 255, 255};

// Piecewise-linear ramps.
constexpr std::array<Rgb, 5> kSequential{{{68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}}};
constexpr std::array<Rgb, 3> kDiverging{{{33, 102, 172}, {247, 247, 247}, {178, 24, 43}}};

template <std::size_t N>
Rgb ramp(const std::array<Rgb, N>& stops, double t) {
  t = std::clamp(t, 0.0, 1.0) * (N - 1);
  const std::size_t i = std::min(static_cast<std::size_t>(t), N - 2);
  const double f = t - i;
  Rgb out;
  for (int c = 0; c < 3; ++c) out[c] = static_cast<std::uint8_t>(std::lround(stops[i][c] * (1 - f) + stops[i + 1][c] * f));
  return out;
}

bool visible(const WealthMap& map, std::size_t i) {
  return map.status[i] == CellStatus::ok && (map.masked.empty() || !map.masked[i]) && std::isfinite(map.mean[i]);
}

}  // namespace

Image render_heatmap(const WealthMap& map, HeatmapMode mode) {
  const int rows = map.grid.rows, cols = map.grid.cols;
  Image img;
  img.width = cols * kPixelsPerCell;
  img.height = rows * kPixelsPerCell + kLegendHeight;
  img.rgb.assign(static_cast<std::size_t>(img.width) * img.height * 3, 0);

  double lo = INFINITY, hi = -INFINITY;
  for (std::size_t i = 0; i < map.grid.size(); ++i) {
    if (!visible(map, i)) continue;
    lo = std::min(lo, map.mean[i]);
    hi = std::max(hi, map.mean[i]);
  }
  img.blank = !(lo <= hi);
  auto colour = [&](double v) -> Rgb {
    if (mode == HeatmapMode::change) {
      const double s = std::max(std::abs(lo), std::abs(hi));
      return ramp(kDiverging, s > 0 ? 0.5 + 0.5 * v / s : 0.5);
    }
    return ramp(kSequential, hi > lo ? (v - lo) / (hi - lo) : 0.5);
  };
  auto put = [&](int x, int y, const Rgb& c) {
    const std::size_t o = (static_cast<std::size_t>(y) * img.width + x) * 3;
    img.rgb[o] = c[0];
    img.rgb[o + 1] = c[1];
    img.rgb[o + 2] = c[2];
  };

  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * cols + c;
      Rgb col = kMaskedGrey;
      if (map.status[i] != CellStatus::ok) {
        col = kMissingGrey;
      } else if (visible(map, i)) {
        col = colour(map.mean[i]);
      }
      for (int y = 0; y < kPixelsPerCell; ++y)
        for (int x = 0; x < kPixelsPerCell; ++x) put(c * kPixelsPerCell + x, r * kPixelsPerCell + y, col);
    }

  // Legend: ramp across the width with a white margin row on top.
  const int y0 = rows * kPixelsPerCell;
  for (int x = 0; x < img.width; ++x) {
    const double t = img.width > 1 ? static_cast<double>(x) / (img.width - 1) : 0.5;
    const Rgb c = mode == HeatmapMode::change ? ramp(kDiverging, t) : ramp(kSequential, t);
    put(x, y0, kLegendBackground);
    put(x, y0 + 1, kLegendBackground);
    for (int y = 2; y < kLegendHeight; ++y) put(x, y0 + y, c);
  }
  return img;
}

std::string encode_ppm(const Image& img) {
  std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(img.rgb.data()), img.rgb.size());
  return out;
}

void write_ppm(const std::filesystem::path& path, const Image& img) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  const std::string bytes = encode_ppm(img);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void write_map_raster(const std::filesystem::path& stem, const WealthMap& map) {
  data::Raster r;
  r.height = map.grid.rows;
  r.width = map.grid.cols;
  if (!map.grid.cells.empty()) {
    const auto& f = map.grid.cells.front().footprint;
    r.geo = {f.origin_lon, f.origin_lat, f.cell_size_deg * map.grid.tile_px};
  }
  const std::size_t n = map.grid.size();
  auto layer = [&](const std::string& name, auto get) {
    std::vector<float> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<float>(get(i));
    r.layer_names.push_back(name);
    r.layers.push_back(std::move(v));
  };
  layer("mean", [&](std::size_t i) { return map.mean[i]; });
  layer("variance", [&](std::size_t i) { return map.variance[i]; });
  layer("n_models", [&](std::size_t i) { return map.n_models[i]; });
  layer("masked", [&](std::size_t i) { return map.masked.empty() ? 0 : map.masked[i]; });
  layer("status", [&](std::size_t i) { return static_cast<int>(map.status[i]); });
  if (!map.population.empty()) layer("population_density", [&](std::size_t i) { return map.population[i]; });
  data::write_raster(stem, r);
}

WealthMap read_map_raster(const std::filesystem::path& stem, const MapGrid& grid) {
  const data::Raster r = data::read_raster(stem);
  if (r.height != grid.rows || r.width != grid.cols) throw ShapeError("map raster does not match the grid");
  WealthMap m = WealthMap::empty(grid);
  const auto& mean = r.layer("mean");
  const auto& var = r.layer("variance");
  const auto& nm = r.layer("n_models");
  const auto& masked = r.layer("masked");
  const auto& status = r.layer("status");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    m.mean[i] = mean[i];
    m.variance[i] = var[i];
    m.n_models[i] = static_cast<int>(nm[i]);
    m.masked[i] = masked[i] != 0;
    m.status[i] = static_cast<CellStatus>(static_cast<int>(status[i]));
  }
  if (r.has_layer("population_density")) {
    const auto& p = r.layer("population_density");
    m.population.assign(p.begin(), p.end());
  }
  return m;
}

void write_map_csv(const std::filesystem::path& path, const WealthMap& map) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << "cell_id,lon,lat,mean,variance,masked\n";
  for (std::size_t i = 0; i < map.grid.size(); ++i) {
    const auto& c = map.grid.cells[i];
    f << c.cell_id << ',' << data::format_double(c.lon) << ',' << data::format_double(c.lat) << ','
      << data::format_double(map.mean[i]) << ',' << data::format_double(map.variance[i]) << ','
      << (map.masked.empty() ? 0 : static_cast<int>(map.masked[i])) << '\n';
  }
}

}  // namespace tempov::mapgen
