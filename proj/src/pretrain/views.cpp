#include "tempov/pretrain/views.hpp"

#include <cmath>

#include "tempov/core/error.hpp"

namespace tempov::pretrain {

namespace {

data::ImageTile random_crop(const data::ImageTile& tile, int size, Rng& rng, CropWindow& win) {
  win.size = size;
  win.y0 = uniform_int(rng, 0, tile.height - size);
  win.x0 = uniform_int(rng, 0, tile.width - size);
  win.flipped = uniform01(rng) < 0.5;
  data::ImageTile out = tile.crop(win.y0, win.x0, size, size);
  return win.flipped ? out.flipped_horizontally() : out;
}

}  // namespace

ViewSet make_views(const data::BitemporalPair& pair, const ViewOptions& sizes, Rng& rng) {
  const bool swap = sizes.random_roles && uniform01(rng) < 0.5;
  const auto& a = swap ? pair.tile_t2 : pair.tile_t1;
  const auto& b = swap ? pair.tile_t1 : pair.tile_t2;
  if (sizes.local >= sizes.global || sizes.local <= 0) {
    throw ConfigError("local crop size must be positive and smaller than the global crop size");
  }
  if (a.height != b.height || a.width != b.width || a.location_id != b.location_id || !(a.geo == b.geo)) {
    throw InputError("bi-temporal pair tiles do not share a footprint");
  }
  if (a.height < sizes.global || a.width < sizes.global) {
    throw InputError("tile " + a.location_id + " is smaller than the global crop size");
  }
  ViewSet v;
  v.swapped = swap;
  v.global_t1 = random_crop(a, sizes.global, rng, v.window_t1);
  if (sizes.registered) {
    v.window_t2 = v.window_t1;
    v.global_t2 = b.crop(v.window_t2.y0, v.window_t2.x0, sizes.global, sizes.global);
    if (v.window_t2.flipped) v.global_t2 = v.global_t2.flipped_horizontally();
  } else {
    v.global_t2 = random_crop(b, sizes.global, rng, v.window_t2);
  }
  v.local_windows.resize(kNumLocalCrops);
  for (int j = 0; j < kNumLocalCrops; ++j) v.local_t2.push_back(random_crop(b, sizes.local, rng, v.local_windows[j]));
  if (sizes.t1_locals) {
    CropWindow unused;
    for (int j = 0; j < kNumLocalCrops; ++j) v.local_t1.push_back(random_crop(a, sizes.local, rng, unused));
  }
  return v;
}

std::vector<std::uint8_t> block_mask(int grid_h, int grid_w, double ratio, Rng& rng) {
  const int n = grid_h * grid_w;
  const int target = static_cast<int>(std::lround(ratio * n));
  std::vector<std::uint8_t> mask(n, 0);
  int count = 0;
  const double log_lo = std::log(0.3), log_hi = std::log(1.0 / 0.3);
  for (int attempt = 0; attempt < 40 && count < target; ++attempt) {
    const int remaining = target - count;
    const double area = 1.0 + uniform01(rng) * (remaining - 1);
    const double aspect = std::exp(log_lo + uniform01(rng) * (log_hi - log_lo));
    const int h = std::clamp(static_cast<int>(std::lround(std::sqrt(area * aspect))), 1, grid_h);
    const int w = std::clamp(static_cast<int>(std::lround(std::sqrt(area / aspect))), 1, grid_w);
    const int top = uniform_int(rng, 0, grid_h - h);
    const int left = uniform_int(rng, 0, grid_w - w);
    int added = 0;
    for (int y = top; y < top + h; ++y)
      for (int x = left; x < left + w; ++x) added += mask[y * grid_w + x] == 0;
    if (added == 0 || count + added > target) continue;
    for (int y = top; y < top + h; ++y)
      for (int x = left; x < left + w; ++x) mask[y * grid_w + x] = 1;
    count += added;
  }
  // Top up with single patches so the count is exact.
  while (count < target) {
    const int i = uniform_int(rng, 0, n - 1);
    if (!mask[i]) {
      mask[i] = 1;
      ++count;
    }
  }
  return mask;
}

}  // namespace tempov::pretrain
