#include "tempov/data/pairs.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "tempov/core/error.hpp"

namespace tempov::data {

double mean_abs_difference(const ImageTile& a, const ImageTile& b) {
  if (a.height != b.height || a.width != b.width) throw ShapeError("tiles differ in size");
  double s = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) s += std::abs(static_cast<double>(a.pixels[i]) - b.pixels[i]);
  return s / static_cast<double>(a.pixels.size());
}

PairSelection build_pairs(const std::vector<ImageTile>& tiles) {
  std::map<std::pair<std::string, int>, std::vector<const ImageTile*>> groups;
  for (const auto& t : tiles) groups[{t.location_id, t.year}].push_back(&t);
  PairSelection out;
  for (auto& [key, group] : groups) {
    std::sort(group.begin(), group.end(), [](const ImageTile* a, const ImageTile* b) { return a->season < b->season; });
    if (group.size() < 2) {
      ++out.skipped;
      continue;
    }
    double best = -1;
    std::size_t bi = 0, bj = 1;
    for (std::size_t i = 0; i < group.size(); ++i)
      for (std::size_t j = i + 1; j < group.size(); ++j) {
        if (group[i]->season == group[j]->season) {
          throw DataError("duplicate season '" + group[i]->season + "' for " + key.first);
        }
        const double d = mean_abs_difference(*group[i], *group[j]);
        if (d > best) {
          best = d;
          bi = i;
          bj = j;
        }
      }
    out.pairs.push_back({*group[bi], *group[bj]});
  }
  return out;
}

ImageTile median_composite(const std::vector<const ImageTile*>& tiles) {
  if (tiles.empty()) throw InputError("median composite of zero tiles");
  const ImageTile& first = *tiles.front();
  for (const auto* t : tiles) {
    if (t->height != first.height || t->width != first.width) throw ShapeError("composite inputs differ in size");
  }
  ImageTile out = first;
  out.season = "composite";
  std::vector<float> buf(tiles.size());
  const std::size_t n = tiles.size();
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    for (std::size_t k = 0; k < n; ++k) buf[k] = tiles[k]->pixels[i];
    std::sort(buf.begin(), buf.end());
    out.pixels[i] = n % 2 ? buf[n / 2] : static_cast<float>(0.5 * (static_cast<double>(buf[n / 2 - 1]) + buf[n / 2]));
  }
  return out;
}

}  // namespace tempov::data
