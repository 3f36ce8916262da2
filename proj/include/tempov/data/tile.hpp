#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace tempov::data {

inline constexpr int kNumBands = 6;

enum Band : int { kBlue = 0, kGreen = 1, kRed = 2, kNir = 3, kSwir1 = 4, kSwir2 = 5 };

inline constexpr std::array<const char*, kNumBands> kBandNames = {"blue", "green", "red",
                                                                   "nir",  "swir1", "swir2"};

struct GeoTransform {
  double origin_lon = 0.0;  // upper-left corner
  double origin_lat = 0.0;
  double cell_size_deg = 0.0;  // pixel size in degrees

  friend bool operator==(const GeoTransform&, const GeoTransform&) = default;
};

// One 6-band reflectance raster, band-major: pixels[(b * height + y) * width + x].
struct ImageTile {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;
  std::string location_id;
  int year = 0;
  std::string season;
  GeoTransform geo;

  ImageTile() = default;
  ImageTile(int h, int w) : height(h), width(w), pixels(static_cast<std::size_t>(kNumBands) * h * w) {}

  float& at(int band, int y, int x) {
    return pixels[(static_cast<std::size_t>(band) * height + y) * width + x];
  }
  float at(int band, int y, int x) const {
    return pixels[(static_cast<std::size_t>(band) * height + y) * width + x];
  }

  // Sub-window copy; geotransform shifted accordingly. Bounds are checked.
  ImageTile crop(int y0, int x0, int h, int w) const;
  ImageTile flipped_horizontally() const;
  ImageTile rotated90() const;  // counter-clockwise

  // Throws InputError on non-finite values or wrong buffer size.
  void validate() const;

  friend bool operator==(const ImageTile&, const ImageTile&) = default;
};

struct BitemporalPair {
  ImageTile tile_t1;
  ImageTile tile_t2;
};

// Per-band standardization statistics, stored alongside checkpoints.
struct NormStats {
  std::array<double, kNumBands> mean{0, 0, 0, 0, 0, 0};
  std::array<double, kNumBands> stddev{1, 1, 1, 1, 1, 1};
};

NormStats compute_norm_stats(const std::vector<const ImageTile*>& tiles);

}  // namespace tempov::data
