#include "tempov/eval/folds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tempov/core/error.hpp"
#include "tempov/core/rng.hpp"
#include "tempov/data/geo.hpp"

namespace tempov::eval {

ClusterKey key_of(const data::SurveyRecord& r) { return {r.country_code, r.year, r.cluster_id}; }

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ULL;
  return h;
}

std::string group_name(const std::string& country, int year) { return country + "|" + std::to_string(year); }

}  // namespace

double median_nn_spacing_km(std::span<const double> lon, std::span<const double> lat) {
  const std::size_t n = lon.size();
  if (n < 2) return 0.0;
  std::vector<double> nn(n, std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) nn[i] = std::min(nn[i], data::distance_km(lon[i], lat[i], lon[j], lat[j]));
  std::sort(nn.begin(), nn.end());
  return n % 2 ? nn[n / 2] : 0.5 * (nn[n / 2 - 1] + nn[n / 2]);
}

std::pair<long, long> block_of(double lon, double lat, double block_km) {
  const double x = lon * data::kKmPerDegree * std::cos(lat * M_PI / 180.0);
  const double y = lat * data::kKmPerDegree;
  return {static_cast<long>(std::floor(x / block_km)), static_cast<long>(std::floor(y / block_km))};
}

int FoldAssignment::fold_of(const data::SurveyRecord& r) const {
  auto it = fold.find(key_of(r));
  if (it == fold.end()) throw DataError("cluster " + r.cluster_id + " has no fold assignment");
  return it->second;
}

FoldAssignment assign_folds(const std::vector<data::SurveyRecord>& records, int k, std::uint64_t seed,
                            double block_factor) {
  if (k < 2) throw ConfigError("k must be >= 2");
  if (!(block_factor > 0)) throw ConfigError("block factor must be > 0");
  FoldAssignment fa;
  fa.k = k;
  fa.seed = seed;
  fa.block_factor = block_factor;
  std::map<std::pair<std::string, int>, std::vector<int>> groups;
  for (int i = 0; i < static_cast<int>(records.size()); ++i) {
    const auto& r = records[i];
    if (!fa.fold.emplace(key_of(r), -1).second) {
      throw DataError("duplicate cluster " + r.cluster_id + " in " + group_name(r.country_code, r.year));
    }
    groups[{r.country_code, r.year}].push_back(i);
  }
  for (const auto& [g, idx] : groups) {
    std::vector<double> lon, lat;
    for (int i : idx) {
      lon.push_back(records[i].lon);
      lat.push_back(records[i].lat);
    }
    const double spacing = median_nn_spacing_km(lon, lat);
    const double side = std::max(block_factor * spacing, 1e-6);
    fa.block_km[group_name(g.first, g.second)] = side;

    std::map<std::pair<long, long>, std::vector<int>> blocks;
    for (int i : idx) blocks[block_of(records[i].lon, records[i].lat, side)].push_back(i);
    Rng rng = make_rng(seed, {fnv1a(g.first), static_cast<std::uint64_t>(g.second)});

    if (static_cast<int>(blocks.size()) < k) {
      fa.degenerate.push_back(group_name(g.first, g.second));
      std::vector<int> order = idx;
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t j = 0; j < order.size(); ++j) fa.fold[key_of(records[order[j]])] = static_cast<int>(j % k);
      continue;
    }
    std::vector<std::vector<int>> list;
    for (auto& [key, members] : blocks) list.push_back(members);
    std::shuffle(list.begin(), list.end(), rng);
    std::stable_sort(list.begin(), list.end(), [](const auto& a, const auto& b) { return a.size() > b.size(); });
    std::vector<int> load(k, 0);
    for (const auto& members : list) {
      const int f = static_cast<int>(std::min_element(load.begin(), load.end()) - load.begin());
      load[f] += static_cast<int>(members.size());
      for (int i : members) fa.fold[key_of(records[i])] = f;
    }
  }
  return fa;
}

void apply_folds(std::vector<data::SurveyRecord>& records, const FoldAssignment& folds) {
  for (auto& r : records) r.fold_id = folds.fold_of(r);
}

nlohmann::json to_json(const FoldAssignment& f) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& [key, fold] : f.fold) {
    rows.push_back({{"country", std::get<0>(key)}, {"year", std::get<1>(key)}, {"cluster_id", std::get<2>(key)},
                    {"fold", fold}});
  }
  return {{"k", f.k},
          {"seed", f.seed},
          {"block_factor", f.block_factor},
          {"block_km", f.block_km},
          {"degenerate", f.degenerate},
          {"assignments", rows}};
}

FoldAssignment fold_assignment_from_json(const nlohmann::json& j) {
  FoldAssignment f;
  try {
    f.k = j.at("k").get<int>();
    f.seed = j.at("seed").get<std::uint64_t>();
    f.block_factor = j.value("block_factor", 3.0);
    f.block_km = j.value("block_km", std::map<std::string, double>{});
    f.degenerate = j.value("degenerate", std::vector<std::string>{});
    for (const auto& row : j.at("assignments")) {
      const int fold = row.at("fold").get<int>();
      if (fold < 0 || fold >= f.k) throw DataError("fold id out of range in fold file");
      f.fold[{row.at("country").get<std::string>(), row.at("year").get<int>(), row.at("cluster_id").get<std::string>()}] =
          fold;
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed fold file: ") + e.what());
  }
  return f;
}

}  // namespace tempov::eval
