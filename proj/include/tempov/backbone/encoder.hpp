#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tempov/autodiff/ops.hpp"
#include "tempov/autodiff/tape.hpp"
#include "tempov/backbone/config.hpp"
#include "tempov/core/param.hpp"
#include "tempov/core/rng.hpp"
#include "tempov/data/tile.hpp"

namespace tempov::backbone {

template <typename T>
struct LinearWeights {
  Param<T> weight;  // [out × in]
  Param<T> bias;    // [1 × out]

  LinearWeights() = default;
  LinearWeights(int in, int out) : weight(out, in), bias(1, out) {}

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }
};

// Low-rank additive update: effective weight W₀ + scale · B·A.
template <typename T>
struct LoraWeights {
  Param<T> a;  // [rank × in]
  Param<T> b;  // [out × rank]
  T scale = T{1};

  int rank() const noexcept { return a.rows(); }
};

template <typename T>
struct BlockWeights {
  Param<T> norm1_gain, norm1_bias;
  LinearWeights<T> q, k, v, proj;
  Param<T> ls1;
  Param<T> norm2_gain, norm2_bias;
  LinearWeights<T> fc1, fc2;
  Param<T> ls2;
  std::optional<LoraWeights<T>> lora_q, lora_v;

  template <typename F>
  void visit(const std::string& p, F&& f) {
    f(p + ".norm1.gain", norm1_gain);
    f(p + ".norm1.bias", norm1_bias);
    q.visit(p + ".attn.q", f);
    k.visit(p + ".attn.k", f);
    v.visit(p + ".attn.v", f);
    proj.visit(p + ".attn.proj", f);
    f(p + ".ls1", ls1);
    f(p + ".norm2.gain", norm2_gain);
    f(p + ".norm2.bias", norm2_bias);
    fc1.visit(p + ".mlp.fc1", f);
    fc2.visit(p + ".mlp.fc2", f);
    f(p + ".ls2", ls2);
    if (lora_q) {
      f(p + ".attn.q.lora_a", lora_q->a);
      f(p + ".attn.q.lora_b", lora_q->b);
    }
    if (lora_v) {
      f(p + ".attn.v.lora_a", lora_v->a);
      f(p + ".attn.v.lora_b", lora_v->b);
    }
  }
};

template <typename T>
struct EncoderWeights {
  Param<T> patch_weight;  // [D × 6·K·K], channel-major within each row: c, ky, kx
  Param<T> patch_bias;    // [1 × D]
  Param<T> cls_token;     // [1 × D]
  Param<T> storage_tokens;  // [S × D]
  Param<T> mask_token;    // [1 × D]
  std::vector<BlockWeights<T>> blocks;
  Param<T> norm_gain, norm_bias;

  template <typename F>
  void visit(F&& f) {
    f(std::string("patch_embed.weight"), patch_weight);
    f(std::string("patch_embed.bias"), patch_bias);
    f(std::string("cls_token"), cls_token);
    f(std::string("storage_tokens"), storage_tokens);
    f(std::string("mask_token"), mask_token);
    for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].visit("blocks." + std::to_string(i), f);
    f(std::string("norm.gain"), norm_gain);
    f(std::string("norm.bias"), norm_bias);
  }
};

// Output of one encoder pass (evaluation mode, detached from any tape).
template <typename T>
struct EmbeddingSet {
  std::vector<T> global_embedding;  // normalized class token
  Matrix<T> patch_embeddings;       // [num_patches × D]
  Matrix<T> storage_embeddings;     // [S × D]
  int grid_h = 0;
  int grid_w = 0;
};

// Tape handles of one encoder pass.
struct EncodedVars {
  ad::Var tokens;     // final normalized tokens, [1 + S + N × D]
  ad::Var global;     // [1 × D]
  ad::Var patches;    // [N × D]
  ad::Var block_input;  // token sequence entering block 0
  int grid_h = 0;
  int grid_w = 0;
};

struct EncodeOptions {
  bool training = false;                     // enables drop path
  const std::vector<std::uint8_t>* mask = nullptr;  // per-patch, row-major over the grid
  Rng* rng = nullptr;                        // required when training with drop path
};

template <typename T>
std::shared_ptr<const ad::RopeTable<T>> make_rope_table(int grid_h, int grid_w, int head_dim, double base);

// Zero-initialized NIR/SWIR slices; RGB slices copied from `pretrained_rgb`
// ([D × 3·K·K], layout c, ky, kx) or drawn from the seeded initializer.
template <typename T>
void init_patch_embedding(const EncoderConfig& cfg, Param<T>& weight, Param<T>& bias,
                          const Matrix<T>* pretrained_rgb, Rng& rng);

template <typename T>
class Encoder {
 public:
  Encoder() = default;
  Encoder(const EncoderConfig& cfg, std::uint64_t seed, const Matrix<T>* pretrained_rgb = nullptr);

  const EncoderConfig& config() const noexcept { return cfg_; }
  EncoderWeights<T>& weights() noexcept { return w_; }
  const EncoderWeights<T>& weights() const noexcept { return w_; }
  const data::NormStats& norm_stats() const noexcept { return stats_; }
  void set_norm_stats(const data::NormStats& s) { stats_ = s; }

  // Normalized im2col matrix [N × 6·K·K] of a tile.
  Matrix<T> patchify(const data::ImageTile& tile) const;

  // Gradient-tracking pass (training).
  EncodedVars forward(ad::Tape<T>& tape, const data::ImageTile& tile, const EncodeOptions& opts);
  // Read-only pass; parameters enter the tape as constants.
  EncodedVars forward(ad::Tape<T>& tape, const data::ImageTile& tile, const EncodeOptions& opts) const;

  EmbeddingSet<T> encode(const data::ImageTile& tile) const;
  EmbeddingSet<T> encode_masked(const data::ImageTile& tile, const std::vector<std::uint8_t>& mask) const;

  template <typename F>
  void visit(F&& f) {
    w_.visit(std::forward<F>(f));
  }

  std::size_t num_parameters();

 private:
  template <typename W>
  static EncodedVars forward_impl(const EncoderConfig& cfg, W& w, const Matrix<T>& patches,
                                  int grid_h, int grid_w, ad::Tape<T>& tape, const EncodeOptions& opts);

  EncoderConfig cfg_;
  EncoderWeights<T> w_;
  data::NormStats stats_;
};

template <typename T>
EmbeddingSet<T> to_embedding_set(const ad::Tape<T>& tape, const EncodedVars& v, int num_storage);

}  // namespace tempov::backbone
