#include "tempov/backbone/encoder.hpp"

#include <array>
#include <cmath>
#include <numbers>

#include "tempov/core/error.hpp"

namespace tempov::backbone {

namespace {

template <typename T>
void fill_normal(Param<T>& p, Rng& rng, double sd) {
  // Truncated at two standard deviations.
  for (std::size_t i = 0; i < p.value.size(); ++i) {
    double v;
    do {
      v = normal(rng);
    } while (std::abs(v) > 2.0);
    p.value[i] = static_cast<T>(v * sd);
  }
}

template <typename T>
LinearWeights<T> make_linear(int in, int out, Rng& rng) {
  LinearWeights<T> l(in, out);
  fill_normal(l.weight, rng, 0.02);
  return l;
}

template <typename T>
Param<T> filled(int rows, int cols, T v) {
  Param<T> p(rows, cols);
  p.value.fill(v);
  return p;
}

}  // namespace

template <typename T>
std::shared_ptr<const ad::RopeTable<T>> make_rope_table(int grid_h, int grid_w, int head_dim, double base) {
  auto tab = std::make_shared<ad::RopeTable<T>>();
  const int quarter = head_dim / 4;
  tab->num_patches = grid_h * grid_w;
  tab->half_dim = head_dim / 2;
  tab->cos = Matrix<T>(tab->num_patches, tab->half_dim);
  tab->sin = Matrix<T>(tab->num_patches, tab->half_dim);
  std::vector<double> periods(quarter);
  for (int j = 0; j < quarter; ++j) periods[j] = std::pow(base, 2.0 * j / (head_dim / 2.0));
  for (int r = 0; r < grid_h; ++r) {
    // Each axis is normalized to [-1, 1] on its own.
    const double cy = 2.0 * (r + 0.5) / grid_h - 1.0;
    for (int c = 0; c < grid_w; ++c) {
      const double cx = 2.0 * (c + 0.5) / grid_w - 1.0;
      const int p = r * grid_w + c;
      for (int j = 0; j < quarter; ++j) {
        const double ay = 2.0 * std::numbers::pi * cy / periods[j];
        const double ax = 2.0 * std::numbers::pi * cx / periods[j];
        tab->cos(p, j) = static_cast<T>(std::cos(ay));
        tab->sin(p, j) = static_cast<T>(std::sin(ay));
        tab->cos(p, quarter + j) = static_cast<T>(std::cos(ax));
        tab->sin(p, quarter + j) = static_cast<T>(std::sin(ax));
      }
    }
  }
  return tab;
}

template <typename T>
void init_patch_embedding(const EncoderConfig& cfg, Param<T>& weight, Param<T>& bias,
                          const Matrix<T>* pretrained_rgb, Rng& rng) {
  const int d = cfg.embed_dim;
  const int kk = cfg.patch_size * cfg.patch_size;
  weight = Param<T>(d, cfg.patch_dim());
  bias = Param<T>(1, d);
  if (pretrained_rgb) {
    if (pretrained_rgb->rows() != d || pretrained_rgb->cols() != 3 * kk) {
      throw ConfigError("pretrained RGB patch weights have shape " + pretrained_rgb->shape_str() +
                        ", expected " + std::to_string(d) + "x" + std::to_string(3 * kk));
    }
    for (int o = 0; o < d; ++o)
      for (int i = 0; i < 3 * kk; ++i) weight.value(o, i) = (*pretrained_rgb)(o, i);
  } else {
    const double sd = 1.0 / std::sqrt(3.0 * kk);
    for (int o = 0; o < d; ++o)
      for (int i = 0; i < 3 * kk; ++i) weight.value(o, i) = static_cast<T>(normal(rng) * sd);
  }
  // NIR, SWIR-1, SWIR-2 start at exactly zero; so does the bias.
  for (int o = 0; o < d; ++o)
    for (int i = 3 * kk; i < 6 * kk; ++i) weight.value(o, i) = T{0};
}

template <typename T>
Encoder<T>::Encoder(const EncoderConfig& cfg, std::uint64_t seed, const Matrix<T>* pretrained_rgb)
    : cfg_(cfg) {
  cfg_.validate();
  Rng rng = make_rng(seed, {0x656e63});
  const int d = cfg_.embed_dim;
  init_patch_embedding(cfg_, w_.patch_weight, w_.patch_bias, pretrained_rgb, rng);
  w_.cls_token = Param<T>(1, d);
  fill_normal(w_.cls_token, rng, 0.02);
  w_.storage_tokens = Param<T>(cfg_.num_storage_tokens, d);
  fill_normal(w_.storage_tokens, rng, 0.02);
  w_.mask_token = Param<T>(1, d);
  const T ls = static_cast<T>(cfg_.layerscale_init);
  for (int b = 0; b < cfg_.depth; ++b) {
    BlockWeights<T> blk;
    blk.norm1_gain = filled<T>(1, d, T{1});
    blk.norm1_bias = Param<T>(1, d);
    blk.q = make_linear<T>(d, d, rng);
    blk.k = make_linear<T>(d, d, rng);
    blk.v = make_linear<T>(d, d, rng);
    blk.proj = make_linear<T>(d, d, rng);
    blk.ls1 = filled<T>(1, d, ls);
    blk.norm2_gain = filled<T>(1, d, T{1});
    blk.norm2_bias = Param<T>(1, d);
    blk.fc1 = make_linear<T>(d, cfg_.mlp_dim, rng);
    blk.fc2 = make_linear<T>(cfg_.mlp_dim, d, rng);
    blk.ls2 = filled<T>(1, d, ls);
    w_.blocks.push_back(std::move(blk));
  }
  w_.norm_gain = filled<T>(1, d, T{1});
  w_.norm_bias = Param<T>(1, d);
}

template <typename T>
Matrix<T> Encoder<T>::patchify(const data::ImageTile& tile) const {
  tile.validate();
  cfg_.validate_input(tile.height, tile.width);
  const int k = cfg_.patch_size;
  const int gh = tile.height / k, gw = tile.width / k;
  Matrix<T> out(gh * gw, cfg_.patch_dim());
  for (int gy = 0; gy < gh; ++gy) {
    for (int gx = 0; gx < gw; ++gx) {
      T* row = out.row(gy * gw + gx);
      for (int c = 0; c < data::kNumBands; ++c) {
        const double mean = stats_.mean[c];
        const double inv = 1.0 / stats_.stddev[c];
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx) {
            const double v = tile.at(c, gy * k + ky, gx * k + kx);
            row[(c * k + ky) * k + kx] = static_cast<T>((v - mean) * inv);
          }
      }
    }
  }
  return out;
}

template <typename T>
template <typename W>
EncodedVars Encoder<T>::forward_impl(const EncoderConfig& cfg, W& w, const Matrix<T>& patches,
                                     int grid_h, int grid_w, ad::Tape<T>& tape, const EncodeOptions& opts) {
  using namespace ad;
  const int n = grid_h * grid_w;
  const int prefix = cfg.num_prefix_tokens();
  const int heads = cfg.num_heads;
  auto P = [&tape](auto& p) { return tape.param(p); };

  Var x = linear(tape, tape.constant(patches), P(w.patch_weight), P(w.patch_bias));
  if (opts.mask) {
    if (static_cast<int>(opts.mask->size()) != n) {
      throw ShapeError("mask has " + std::to_string(opts.mask->size()) + " entries, patch grid has " +
                       std::to_string(n));
    }
    x = replace_rows(tape, x, P(w.mask_token), std::span<const std::uint8_t>(*opts.mask));
  }
  std::vector<Var> parts{P(w.cls_token)};
  if (cfg.num_storage_tokens > 0) parts.push_back(P(w.storage_tokens));
  parts.push_back(x);
  Var seq = concat_rows(tape, std::span<const Var>(parts));
  const Var block_input = seq;

  auto rope_tab = make_rope_table<T>(grid_h, grid_w, cfg.head_dim(), cfg.rope_base);
  const double p_drop = opts.training ? cfg.drop_path_rate : 0.0;
  if (p_drop > 0.0 && !opts.rng) throw ConfigError("drop path requires an rng in training mode");
  auto keep_branch = [&]() { return p_drop <= 0.0 || uniform01(*opts.rng) >= p_drop; };
  const T branch_scale = static_cast<T>(1.0 / (1.0 - p_drop));

  auto with_lora = [&](Var h, Var base, auto& lora) {
    if (!lora) return base;
    Var low = linear(tape, linear(tape, h, P(lora->a)), P(lora->b));
    return add(tape, base, scale(tape, low, lora->scale));
  };

  for (auto& blk : w.blocks) {
    if (keep_branch()) {
      Var h = layer_norm(tape, seq, P(blk.norm1_gain), P(blk.norm1_bias));
      Var q = with_lora(h, linear(tape, h, P(blk.q.weight), P(blk.q.bias)), blk.lora_q);
      Var k = linear(tape, h, P(blk.k.weight), P(blk.k.bias));
      Var v = with_lora(h, linear(tape, h, P(blk.v.weight), P(blk.v.bias)), blk.lora_v);
      q = rope(tape, q, rope_tab, prefix, heads);
      k = rope(tape, k, rope_tab, prefix, heads);
      Var a = attention(tape, q, k, v, heads);
      Var branch = mul_cols(tape, linear(tape, a, P(blk.proj.weight), P(blk.proj.bias)), P(blk.ls1));
      if (p_drop > 0.0) branch = scale(tape, branch, branch_scale);
      seq = add(tape, seq, branch);
    }
    if (keep_branch()) {
      Var h = layer_norm(tape, seq, P(blk.norm2_gain), P(blk.norm2_bias));
      Var m = linear(tape, gelu(tape, linear(tape, h, P(blk.fc1.weight), P(blk.fc1.bias))),
                     P(blk.fc2.weight), P(blk.fc2.bias));
      Var branch = mul_cols(tape, m, P(blk.ls2));
      if (p_drop > 0.0) branch = scale(tape, branch, branch_scale);
      seq = add(tape, seq, branch);
    }
  }
  Var out = layer_norm(tape, seq, P(w.norm_gain), P(w.norm_bias));
  EncodedVars ev;
  ev.tokens = out;
  ev.global = slice_rows(tape, out, 0, 1);
  ev.patches = slice_rows(tape, out, prefix, n);
  ev.block_input = block_input;
  ev.grid_h = grid_h;
  ev.grid_w = grid_w;
  return ev;
}

template <typename T>
EncodedVars Encoder<T>::forward(ad::Tape<T>& tape, const data::ImageTile& tile, const EncodeOptions& opts) {
  const Matrix<T> patches = patchify(tile);
  const int k = cfg_.patch_size;
  return forward_impl(cfg_, w_, patches, tile.height / k, tile.width / k, tape, opts);
}

template <typename T>
EncodedVars Encoder<T>::forward(ad::Tape<T>& tape, const data::ImageTile& tile,
                                const EncodeOptions& opts) const {
  const Matrix<T> patches = patchify(tile);
  const int k = cfg_.patch_size;
  return forward_impl(cfg_, w_, patches, tile.height / k, tile.width / k, tape, opts);
}

template <typename T>
EmbeddingSet<T> to_embedding_set(const ad::Tape<T>& tape, const EncodedVars& v, int num_storage) {
  EmbeddingSet<T> out;
  const Matrix<T>& tok = tape.value(v.tokens);
  const int d = tok.cols();
  out.global_embedding.assign(tok.row(0), tok.row(0) + d);
  out.storage_embeddings = Matrix<T>(num_storage, d);
  for (int s = 0; s < num_storage; ++s)
    for (int j = 0; j < d; ++j) out.storage_embeddings(s, j) = tok(1 + s, j);
  out.patch_embeddings = tape.value(v.patches);
  out.grid_h = v.grid_h;
  out.grid_w = v.grid_w;
  return out;
}

template <typename T>
EmbeddingSet<T> Encoder<T>::encode(const data::ImageTile& tile) const {
  ad::Tape<T> tape(false);
  const EncodedVars v = forward(tape, tile, EncodeOptions{});
  return to_embedding_set(tape, v, cfg_.num_storage_tokens);
}

template <typename T>
EmbeddingSet<T> Encoder<T>::encode_masked(const data::ImageTile& tile,
                                          const std::vector<std::uint8_t>& mask) const {
  ad::Tape<T> tape(false);
  EncodeOptions opts;
  opts.mask = &mask;
  const EncodedVars v = forward(tape, tile, opts);
  return to_embedding_set(tape, v, cfg_.num_storage_tokens);
}

template <typename T>
std::size_t Encoder<T>::num_parameters() {
  std::size_t n = 0;
  w_.visit([&n](const std::string&, Param<T>& p) { n += p.value.size(); });
  return n;
}

template class Encoder<float>;
template class Encoder<double>;
template std::shared_ptr<const ad::RopeTable<float>> make_rope_table<float>(int, int, int, double);
template std::shared_ptr<const ad::RopeTable<double>> make_rope_table<double>(int, int, int, double);
template void init_patch_embedding<float>(const EncoderConfig&, Param<float>&, Param<float>&,
                                          const Matrix<float>*, Rng&);
template void init_patch_embedding<double>(const EncoderConfig&, Param<double>&, Param<double>&,
                                           const Matrix<double>*, Rng&);
template EmbeddingSet<float> to_embedding_set<float>(const ad::Tape<float>&, const EncodedVars&, int);
template EmbeddingSet<double> to_embedding_set<double>(const ad::Tape<double>&, const EncodedVars&, int);

}  // namespace tempov::backbone
