#pragma once

#include <cstdint>
#include <vector>

#include "tempov/core/rng.hpp"
#include "tempov/data/tile.hpp"

namespace tempov::pretrain {

struct CropWindow {
  int y0 = 0;
  int x0 = 0;
  int size = 0;
  bool flipped = false;

  friend bool operator==(const CropWindow&, const CropWindow&) = default;
};

inline constexpr int kNumLocalCrops = 4;

// One global crop per epoch and four local crops of the epoch-2 tile.
// Crop windows are kept because iBOT aligns patches by grid index of each crop.
struct ViewSet {
  data::ImageTile global_t1;
  data::ImageTile global_t2;
  std::vector<data::ImageTile> local_t2;
  std::vector<data::ImageTile> local_t1;  // only for the symmetrized objective
  CropWindow window_t1;
  CropWindow window_t2;
  bool swapped = false;  // pair.tile_t2 played the epoch-1 role
  std::vector<CropWindow> local_windows;
};

struct ViewOptions {
  int global = 32;
  int local = 16;
  // Pairs are stored in season-tag order; without a random role draw the
  // teacher would always see the same season of the year.
  bool random_roles = true;
  bool t1_locals = false;  // symmetrized objective only
  // Reuse the epoch-1 window for the epoch-2 global crop so patch i covers
  // the same ground in both.
  bool registered = false;
};

// Throws InputError if the footprints differ or a tile is smaller than the
// global crop, ConfigError if local >= global.
ViewSet make_views(const data::BitemporalPair& pair, const ViewOptions& opts, Rng& rng);

// Block-wise random mask over a grid_h × grid_w patch grid with exactly
// round(ratio · N) masked patches.
std::vector<std::uint8_t> block_mask(int grid_h, int grid_w, double ratio, Rng& rng);

}  // namespace tempov::pretrain
