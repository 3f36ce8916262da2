#pragma once

#include <string>
#include <vector>

#include "tempov/core/rng.hpp"
#include "tempov/data/tile.hpp"
#include "tempov/pretrain/trainer.hpp"

namespace testing {

inline tempov::data::ImageTile random_tile(int size, tempov::Rng& rng, const std::string& loc) {
  tempov::data::ImageTile t(size, size);
  for (auto& p : t.pixels) p = static_cast<float>(0.05 + 0.4 * tempov::uniform01(rng));
  t.location_id = loc;
  t.geo = {30.0, 0.0, 0.001};
  return t;
}

inline std::vector<tempov::data::BitemporalPair> random_pairs(int n, int size, std::uint64_t seed) {
  tempov::Rng rng = tempov::make_rng(seed);
  std::vector<tempov::data::BitemporalPair> pairs;
  for (int i = 0; i < n; ++i) {
    const std::string loc = "L" + std::to_string(i);
    pairs.push_back({random_tile(size, rng, loc), random_tile(size, rng, loc)});
  }
  return pairs;
}

inline tempov::data::NormStats stats_of(const std::vector<tempov::data::BitemporalPair>& pairs) {
  std::vector<const tempov::data::ImageTile*> ptrs;
  for (const auto& p : pairs) ptrs.insert(ptrs.end(), {&p.tile_t1, &p.tile_t2});
  return tempov::data::compute_norm_stats(ptrs);
}

// 8×8 tiles, tiny heads: fast enough to take real optimizer steps in tests.
inline tempov::pretrain::PretrainConfig tiny_pretrain(std::uint64_t seed = 0) {
  tempov::pretrain::PretrainConfig cfg;
  cfg.global_crop_size = 8;
  cfg.local_crop_size = 4;
  cfg.batch_size = 2;
  cfg.warmup_steps = 1;
  cfg.seed = seed;
  for (auto* h : {&cfg.dino_head, &cfg.ibot_head}) {
    h->hidden_dim = 24;
    h->bottleneck_dim = 8;
    h->num_prototypes = 16;
  }
  return cfg;
}

}  // namespace testing
