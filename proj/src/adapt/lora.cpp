#include "tempov/adapt/lora.hpp"

#include <algorithm>

#include "tempov/core/error.hpp"

namespace tempov::adapt {

void to_json(nlohmann::json& j, const LoraConfig& c) {
  j = {{"rank", c.rank}, {"scale", c.effective_scale()}, {"query", c.query}, {"value", c.value}, {"init_sd", c.init_sd}};
}

void from_json(const nlohmann::json& j, LoraConfig& c) {
  const LoraConfig d;
  c.rank = j.value("rank", d.rank);
  c.scale = j.value("scale", d.scale);
  c.query = j.value("query", d.query);
  c.value = j.value("value", d.value);
  c.init_sd = j.value("init_sd", d.init_sd);
}

template <typename T>
void inject_lora(backbone::Encoder<T>& enc, const LoraConfig& cfg, std::uint64_t seed) {
  const int d = enc.config().embed_dim;  // q and v are square projections
  const int k = d;
  if (cfg.rank < 1 || cfg.rank > std::min(d, k) / 4) {
    throw ConfigError("LoRA rank " + std::to_string(cfg.rank) + " violates 1 <= r <= min(d,k)/4 = " +
                      std::to_string(std::min(d, k) / 4));
  }
  if (cfg.num_targets() == 0) throw ConfigError("LoRA needs at least one target projection");
  enc.visit([](const std::string&, Param<T>& p) { p.trainable = false; });
  Rng rng = make_rng(seed, {0x10ba});
  const T scale = static_cast<T>(cfg.effective_scale());
  auto make = [&] {
    backbone::LoraWeights<T> w{Param<T>(cfg.rank, k), Param<T>(d, cfg.rank), scale};
    for (std::size_t i = 0; i < w.a.value.size(); ++i) w.a.value[i] = static_cast<T>(normal(rng, 0.0, cfg.init_sd));
    return w;
  };
  for (auto& blk : enc.weights().blocks) {
    if (cfg.query) blk.lora_q = make();
    if (cfg.value) blk.lora_v = make();
  }
}

std::size_t lora_parameter_count(const backbone::EncoderConfig& cfg, const LoraConfig& lora) {
  const std::size_t d = cfg.embed_dim, k = cfg.embed_dim, r = lora.rank;
  return static_cast<std::size_t>(cfg.depth) * lora.num_targets() * (r * k + d * r);
}

template <typename T>
std::size_t count_trainable(backbone::Encoder<T>& enc) {
  std::size_t n = 0;
  enc.visit([&](const std::string&, Param<T>& p) {
    if (p.trainable) n += p.value.size();
  });
  return n;
}

template <typename T>
backbone::Encoder<T> merge_lora(const backbone::Encoder<T>& enc) {
  backbone::Encoder<T> out = enc;
  auto fold = [](backbone::LinearWeights<T>& lin, std::optional<backbone::LoraWeights<T>>& lora) {
    if (!lora) return;
    Matrix<T>& w = lin.weight.value;  // [out × in]
    const Matrix<T>& a = lora->a.value;  // [r × in]
    const Matrix<T>& b = lora->b.value;  // [out × r]
    for (int o = 0; o < w.rows(); ++o)
      for (int i = 0; i < w.cols(); ++i) {
        double s = 0;
        for (int r = 0; r < a.rows(); ++r) s += static_cast<double>(b(o, r)) * a(r, i);
        w(o, i) = static_cast<T>(w(o, i) + lora->scale * s);
      }
    lora.reset();
  };
  for (auto& blk : out.weights().blocks) {
    fold(blk.q, blk.lora_q);
    fold(blk.v, blk.lora_v);
  }
  return out;
}

#define TEMPOV_INSTANTIATE(T)                                                            \
  template void inject_lora<T>(backbone::Encoder<T>&, const LoraConfig&, std::uint64_t); \
  template std::size_t count_trainable<T>(backbone::Encoder<T>&);                        \
  template backbone::Encoder<T> merge_lora<T>(const backbone::Encoder<T>&);

TEMPOV_INSTANTIATE(float)
TEMPOV_INSTANTIATE(double)
#undef TEMPOV_INSTANTIATE

}  // namespace tempov::adapt
