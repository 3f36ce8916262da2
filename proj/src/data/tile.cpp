#include "tempov/data/tile.hpp"

#include <cmath>

#include "tempov/core/error.hpp"

namespace tempov::data {

ImageTile ImageTile::crop(int y0, int x0, int h, int w) const {
  if (y0 < 0 || x0 < 0 || h <= 0 || w <= 0 || y0 + h > height || x0 + w > width) {
    throw InputError("crop window " + std::to_string(h) + "x" + std::to_string(w) + " at (" +
                     std::to_string(y0) + "," + std::to_string(x0) + ") outside tile " +
                     std::to_string(height) + "x" + std::to_string(width));
  }
  ImageTile out(h, w);
  out.location_id = location_id;
  out.year = year;
  out.season = season;
  out.geo = geo;
  out.geo.origin_lon += x0 * geo.cell_size_deg;
  out.geo.origin_lat -= y0 * geo.cell_size_deg;
  for (int b = 0; b < kNumBands; ++b)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at(b, y, x) = at(b, y0 + y, x0 + x);
  return out;
}

ImageTile ImageTile::flipped_horizontally() const {
  ImageTile out = *this;
  for (int b = 0; b < kNumBands; ++b)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) out.at(b, y, x) = at(b, y, width - 1 - x);
  return out;
}

ImageTile ImageTile::rotated90() const {
  ImageTile out(width, height);
  out.location_id = location_id;
  out.year = year;
  out.season = season;
  out.geo = geo;
  for (int b = 0; b < kNumBands; ++b)
    for (int y = 0; y < out.height; ++y)
      for (int x = 0; x < out.width; ++x) out.at(b, y, x) = at(b, x, width - 1 - y);
  return out;
}

void ImageTile::validate() const {
  if (height <= 0 || width <= 0) throw InputError("tile has empty dimensions");
  if (pixels.size() != static_cast<std::size_t>(kNumBands) * height * width) {
    throw InputError("tile pixel buffer does not match 6x" + std::to_string(height) + "x" +
                     std::to_string(width));
  }
  for (float v : pixels)
    if (!std::isfinite(v)) throw InputError("tile " + location_id + " contains non-finite values");
}

NormStats compute_norm_stats(const std::vector<const ImageTile*>& tiles) {
  NormStats s;
  std::array<double, kNumBands> sum{}, sum2{};
  std::array<double, kNumBands> count{};
  for (const ImageTile* t : tiles) {
    const std::size_t plane = static_cast<std::size_t>(t->height) * t->width;
    for (int b = 0; b < kNumBands; ++b) {
      for (std::size_t i = 0; i < plane; ++i) {
        const double v = t->pixels[b * plane + i];
        sum[b] += v;
        sum2[b] += v * v;
      }
      count[b] += static_cast<double>(plane);
    }
  }
  for (int b = 0; b < kNumBands; ++b) {
    if (count[b] == 0) continue;
    s.mean[b] = sum[b] / count[b];
    const double var = std::max(sum2[b] / count[b] - s.mean[b] * s.mean[b], 0.0);
    s.stddev[b] = var > 1e-12 ? std::sqrt(var) : 1.0;
  }
  return s;
}

}  // namespace tempov::data
