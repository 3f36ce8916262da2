#pragma once

#include <vector>

#include "tempov/data/tile.hpp"

namespace tempov::data {

struct PairSelection {
  std::vector<BitemporalPair> pairs;
  int skipped = 0;  // location-years with a single season
};

// Mean absolute per-band difference between two tiles of equal shape.
double mean_abs_difference(const ImageTile& a, const ImageTile& b);

// Per location-year, the two seasons with the largest mean absolute
// difference. tile_t1 carries the lexicographically smaller season tag.
PairSelection build_pairs(const std::vector<ImageTile>& tiles);

// Per-pixel, per-band median (mean of the two middle values for even counts).
ImageTile median_composite(const std::vector<const ImageTile*>& tiles);

}  // namespace tempov::data
