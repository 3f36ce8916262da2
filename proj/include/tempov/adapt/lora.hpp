#pragma once

#include <cstddef>
#include <cstdint>

#include <nlohmann/json.hpp>

#include "tempov/backbone/encoder.hpp"

namespace tempov::adapt {

struct LoraConfig {
  int rank = 8;
  double scale = 0.0;  // 0 → 2 / rank
  bool query = true;
  bool value = true;
  double init_sd = 0.02;  // std of A; B starts at zero

  double effective_scale() const { return scale > 0 ? scale : 2.0 / rank; }
  int num_targets() const { return static_cast<int>(query) + static_cast<int>(value); }
};

void to_json(nlohmann::json& j, const LoraConfig& c);
void from_json(const nlohmann::json& j, LoraConfig& c);

// Adds B·A adapters to the query/value projections of every block and freezes
// everything else in the encoder. Throws ConfigError unless
// 1 <= rank <= min(d, k) / 4.
template <typename T>
void inject_lora(backbone::Encoder<T>& enc, const LoraConfig& cfg, std::uint64_t seed);

// Closed form: depth × targets × (r·k + d·r), d = k = embed_dim.
std::size_t lora_parameter_count(const backbone::EncoderConfig& cfg, const LoraConfig& lora);

template <typename T>
std::size_t count_trainable(backbone::Encoder<T>& enc);

// Dense copy with W₀ + scale·B·A folded into the projections and adapters removed.
template <typename T>
backbone::Encoder<T> merge_lora(const backbone::Encoder<T>& enc);

}  // namespace tempov::adapt
