#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "tempov/autodiff/tape.hpp"

namespace tempov::ad {

// x·wᵀ (+ b), w is [out × in], b is [1 × out].
template <typename T>
Var linear(Tape<T>& t, Var x, Var w, Var b = {});

template <typename T>
Var add(Tape<T>& t, Var a, Var b);

template <typename T>
Var scale(Tape<T>& t, Var a, T s);

// Column-wise scaling by a 1×C vector (LayerScale).
template <typename T>
Var mul_cols(Tape<T>& t, Var x, Var gamma);

template <typename T>
Var layer_norm(Tape<T>& t, Var x, Var gain, Var bias, T eps = T(1e-6));

template <typename T>
Var gelu(Tape<T>& t, Var x);

// Precomputed rotation angles for 2D rotary encoding of a patch grid.
template <typename T>
struct RopeTable {
  int num_patches = 0;
  int half_dim = 0;  // head_dim / 2
  Matrix<T> cos;     // [num_patches × half_dim]
  Matrix<T> sin;
};

// Rows [prefix, prefix + table.num_patches) are rotated head by head; prefix
// rows (class and storage tokens) pass through unchanged.
template <typename T>
Var rope(Tape<T>& t, Var x, std::shared_ptr<const RopeTable<T>> table, int prefix, int heads);

// Multi-head scaled dot-product attention over q, k, v of shape [T × C].
template <typename T>
Var attention(Tape<T>& t, Var q, Var k, Var v, int heads);

template <typename T>
Var concat_rows(Tape<T>& t, std::span<const Var> parts);

template <typename T>
Var slice_rows(Tape<T>& t, Var x, int start, int count);

// Rows with mask[r] != 0 are replaced by the 1×C token.
template <typename T>
Var replace_rows(Tape<T>& t, Var x, Var token, std::span<const std::uint8_t> mask);

template <typename T>
Var l2_normalize_rows(Tape<T>& t, Var x, T eps = T(1e-12));

// Σ_r w_r · Σ_j −target[r,j] · log softmax(inv_temp · logits[r,:])_j.
// Empty row_weights means all ones. Targets are constants.
template <typename T>
Var soft_cross_entropy(Tape<T>& t, Var logits, const Matrix<T>& targets, T inv_temp,
                       std::span<const T> row_weights = {});

// −(1/n) Σ_i log(‖x_i − x_nn(i)‖ + eps) over the rows of x.
template <typename T>
Var nn_uniformity(Tape<T>& t, Var x, T eps);

// mean_i [ log v_i + (y_i − m_i)² / v_i ], v_i = floor + softplus(raw_i).
template <typename T>
Var gaussian_nll(Tape<T>& t, Var mean, Var raw_logvar, std::span<const T> y, T floor);

template <typename T>
T softplus(T x);

template <typename T>
T sigmoid(T x);

}  // namespace tempov::ad
