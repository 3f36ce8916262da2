#include "tempov/autodiff/ops.hpp"

#include <cmath>
#include <limits>
#include <memory>

#include "tempov/core/error.hpp"
#include "tempov/kernels/kernels.hpp"

namespace tempov::ad {

namespace {

template <typename T>
const kernels::Table<T>& K() {
  return kernels::active<T>();
}

void require(bool ok, const char* what) {
  if (!ok) throw ShapeError(what);
}

template <typename T>
void softmax_row(T* row, int n, T scale) {
  T mx = -std::numeric_limits<T>::infinity();
  for (int j = 0; j < n; ++j) mx = std::max(mx, row[j] * scale);
  T sum = 0;
  for (int j = 0; j < n; ++j) {
    row[j] = std::exp(row[j] * scale - mx);
    sum += row[j];
  }
  const T inv = T{1} / sum;
  for (int j = 0; j < n; ++j) row[j] *= inv;
}

}  // namespace

template <typename T>
T softplus(T x) {
  return x > T{20} ? x : std::log1p(std::exp(x));
}

template <typename T>
T sigmoid(T x) {
  if (x >= 0) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

template <typename T>
Var linear(Tape<T>& t, Var x, Var w, Var b) {
  const Matrix<T>& X = t.value(x);
  const Matrix<T>& W = t.value(w);
  require(X.cols() == W.cols(), "linear: input width does not match weight");
  const int n = X.rows(), in = X.cols(), out = W.rows();
  Matrix<T> Y(n, out);
  K<T>().gemm_nt(n, out, in, X.data(), in, W.data(), in, Y.data(), out, false);
  if (b.valid()) {
    const Matrix<T>& B = t.value(b);
    require(B.rows() == 1 && B.cols() == out, "linear: bias shape");
    for (int r = 0; r < n; ++r) K<T>().axpy(out, T{1}, B.data(), Y.row(r));
  }
  const bool ng = t.needs_grad(x) || t.needs_grad(w) || (b.valid() && t.needs_grad(b));
  return t.push(std::move(Y), ng, [&t, x, w, b, n, in, out](Var y) {
    const Matrix<T>& dY = t.grad(y);
    if (t.needs_grad(x)) {
      K<T>().gemm_nn(n, in, out, dY.data(), out, t.value(w).data(), in, t.grad(x).data(), in);
    }
    if (t.needs_grad(w)) {
      K<T>().gemm_tn(out, in, n, dY.data(), out, t.value(x).data(), in, t.grad(w).data(), in);
    }
    if (b.valid() && t.needs_grad(b)) {
      Matrix<T>& dB = t.grad(b);
      for (int r = 0; r < n; ++r) K<T>().axpy(out, T{1}, dY.row(r), dB.data());
    }
  });
}

template <typename T>
Var add(Tape<T>& t, Var a, Var b) {
  const Matrix<T>& A = t.value(a);
  const Matrix<T>& B = t.value(b);
  require(A.same_shape(B), "add: shape mismatch");
  Matrix<T> Y = A;
  for (std::size_t i = 0; i < Y.size(); ++i) Y[i] += B[i];
  const bool ng = t.needs_grad(a) || t.needs_grad(b);
  return t.push(std::move(Y), ng, [&t, a, b](Var y) {
    const Matrix<T>& dY = t.grad(y);
    for (Var in : {a, b}) {
      if (!t.needs_grad(in)) continue;
      Matrix<T>& g = t.grad(in);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += dY[i];
    }
  });
}

template <typename T>
Var scale(Tape<T>& t, Var a, T s) {
  Matrix<T> Y = t.value(a);
  for (std::size_t i = 0; i < Y.size(); ++i) Y[i] *= s;
  return t.push(std::move(Y), t.needs_grad(a), [&t, a, s](Var y) {
    const Matrix<T>& dY = t.grad(y);
    Matrix<T>& g = t.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * dY[i];
  });
}

template <typename T>
Var mul_cols(Tape<T>& t, Var x, Var gamma) {
  const Matrix<T>& X = t.value(x);
  const Matrix<T>& G = t.value(gamma);
  require(G.rows() == 1 && G.cols() == X.cols(), "mul_cols: gamma shape");
  Matrix<T> Y = X;
  for (int r = 0; r < Y.rows(); ++r)
    for (int c = 0; c < Y.cols(); ++c) Y(r, c) *= G[c];
  const bool ng = t.needs_grad(x) || t.needs_grad(gamma);
  return t.push(std::move(Y), ng, [&t, x, gamma](Var y) {
    const Matrix<T>& dY = t.grad(y);
    const Matrix<T>& X = t.value(x);
    const Matrix<T>& G = t.value(gamma);
    if (t.needs_grad(x)) {
      Matrix<T>& dX = t.grad(x);
      for (int r = 0; r < X.rows(); ++r)
        for (int c = 0; c < X.cols(); ++c) dX(r, c) += dY(r, c) * G[c];
    }
    if (t.needs_grad(gamma)) {
      Matrix<T>& dG = t.grad(gamma);
      for (int r = 0; r < X.rows(); ++r)
        for (int c = 0; c < X.cols(); ++c) dG[c] += dY(r, c) * X(r, c);
    }
  });
}

template <typename T>
Var layer_norm(Tape<T>& t, Var x, Var gain, Var bias, T eps) {
  const Matrix<T>& X = t.value(x);
  const Matrix<T>& G = t.value(gain);
  const Matrix<T>& B = t.value(bias);
  const int n = X.rows(), c = X.cols();
  require(G.cols() == c && B.cols() == c, "layer_norm: affine shape");
  auto xhat = std::make_shared<Matrix<T>>(n, c);
  auto inv_std = std::make_shared<std::vector<T>>(n);
  Matrix<T> Y(n, c);
  for (int r = 0; r < n; ++r) {
    const T* xr = X.row(r);
    T mean = 0;
    for (int j = 0; j < c; ++j) mean += xr[j];
    mean /= c;
    T var = 0;
    for (int j = 0; j < c; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= c;
    const T is = T{1} / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (int j = 0; j < c; ++j) {
      const T h = (xr[j] - mean) * is;
      (*xhat)(r, j) = h;
      Y(r, j) = h * G[j] + B[j];
    }
  }
  const bool ng = t.needs_grad(x) || t.needs_grad(gain) || t.needs_grad(bias);
  return t.push(std::move(Y), ng, [&t, x, gain, bias, xhat, inv_std, n, c](Var y) {
    const Matrix<T>& dY = t.grad(y);
    const Matrix<T>& G = t.value(gain);
    if (t.needs_grad(gain) || t.needs_grad(bias)) {
      Matrix<T>* dG = t.needs_grad(gain) ? &t.grad(gain) : nullptr;
      Matrix<T>* dB = t.needs_grad(bias) ? &t.grad(bias) : nullptr;
      for (int r = 0; r < n; ++r)
        for (int j = 0; j < c; ++j) {
          if (dG) (*dG)[j] += dY(r, j) * (*xhat)(r, j);
          if (dB) (*dB)[j] += dY(r, j);
        }
    }
    if (t.needs_grad(x)) {
      Matrix<T>& dX = t.grad(x);
      std::vector<T> dh(c);
      for (int r = 0; r < n; ++r) {
        T mean_dh = 0, mean_dh_h = 0;
        for (int j = 0; j < c; ++j) {
          dh[j] = dY(r, j) * G[j];
          mean_dh += dh[j];
          mean_dh_h += dh[j] * (*xhat)(r, j);
        }
        mean_dh /= c;
        mean_dh_h /= c;
        const T is = (*inv_std)[r];
        for (int j = 0; j < c; ++j) dX(r, j) += is * (dh[j] - mean_dh - (*xhat)(r, j) * mean_dh_h);
      }
    }
  });
}

template <typename T>
Var gelu(Tape<T>& t, Var x) {
  const T inv_sqrt2 = T(0.70710678118654752440);
  Matrix<T> Y = t.value(x);
  for (std::size_t i = 0; i < Y.size(); ++i) {
    const T v = Y[i];
    Y[i] = T(0.5) * v * (T{1} + std::erf(v * inv_sqrt2));
  }
  return t.push(std::move(Y), t.needs_grad(x), [&t, x, inv_sqrt2](Var y) {
    const T inv_sqrt_2pi = T(0.39894228040143267794);
    const Matrix<T>& X = t.value(x);
    const Matrix<T>& dY = t.grad(y);
    Matrix<T>& dX = t.grad(x);
    for (std::size_t i = 0; i < X.size(); ++i) {
      const T v = X[i];
      const T d = T(0.5) * (T{1} + std::erf(v * inv_sqrt2)) + v * inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
      dX[i] += dY[i] * d;
    }
  });
}

template <typename T>
Var rope(Tape<T>& t, Var x, std::shared_ptr<const RopeTable<T>> tab, int prefix, int heads) {
  const RopeTable<T>& table = *tab;
  const Matrix<T>& X = t.value(x);
  const int c = X.cols();
  require(c % heads == 0, "rope: width not divisible by heads");
  const int hd = c / heads, half = hd / 2;
  require(half == table.half_dim, "rope: table head dimension mismatch");
  require(X.rows() == prefix + table.num_patches, "rope: token count mismatch");
  Matrix<T> Y = X;
  for (int p = 0; p < table.num_patches; ++p) {
    T* row = Y.row(prefix + p);
    const T* cs = table.cos.row(p);
    const T* sn = table.sin.row(p);
    for (int h = 0; h < heads; ++h) {
      T* v = row + h * hd;
      for (int i = 0; i < half; ++i) {
        const T a = v[i], b = v[i + half];
        v[i] = a * cs[i] - b * sn[i];
        v[i + half] = a * sn[i] + b * cs[i];
      }
    }
  }
  return t.push(std::move(Y), t.needs_grad(x), [&t, x, tab, prefix, heads, hd, half](Var y) {
    const Matrix<T>& dY = t.grad(y);
    Matrix<T>& dX = t.grad(x);
    for (int r = 0; r < prefix; ++r)
      for (int j = 0; j < dX.cols(); ++j) dX(r, j) += dY(r, j);
    for (int p = 0; p < tab->num_patches; ++p) {
      const T* g = dY.row(prefix + p);
      T* out = dX.row(prefix + p);
      const T* cs = tab->cos.row(p);
      const T* sn = tab->sin.row(p);
      for (int h = 0; h < heads; ++h) {
        const int o = h * hd;
        for (int i = 0; i < half; ++i) {
          const T ga = g[o + i], gb = g[o + i + half];
          out[o + i] += ga * cs[i] + gb * sn[i];
          out[o + i + half] += -ga * sn[i] + gb * cs[i];
        }
      }
    }
  });
}

template <typename T>
Var attention(Tape<T>& t, Var q, Var k, Var v, int heads) {
  const Matrix<T>& Q = t.value(q);
  const Matrix<T>& Kx = t.value(k);
  const Matrix<T>& V = t.value(v);
  require(Q.same_shape(Kx) && Q.same_shape(V), "attention: q/k/v shape mismatch");
  const int n = Q.rows(), c = Q.cols();
  require(c % heads == 0, "attention: width not divisible by heads");
  const int hd = c / heads;
  const T sc = T{1} / std::sqrt(static_cast<T>(hd));
  const auto& ker = K<T>();
  auto probs = std::make_shared<std::vector<Matrix<T>>>();
  probs->reserve(heads);
  Matrix<T> O(n, c);
  for (int h = 0; h < heads; ++h) {
    Matrix<T> P(n, n);
    ker.gemm_nt(n, n, hd, Q.data() + h * hd, c, Kx.data() + h * hd, c, P.data(), n, false);
    for (int r = 0; r < n; ++r) softmax_row(P.row(r), n, sc);
    ker.gemm_nn(n, hd, n, P.data(), n, V.data() + h * hd, c, O.data() + h * hd, c);
    probs->push_back(std::move(P));
  }
  const bool ng = t.needs_grad(q) || t.needs_grad(k) || t.needs_grad(v);
  return t.push(std::move(O), ng, [&t, q, k, v, heads, n, c, hd, sc, probs](Var y) {
    const auto& ker = K<T>();
    const Matrix<T>& dO = t.grad(y);
    const Matrix<T>& Q = t.value(q);
    const Matrix<T>& Kx = t.value(k);
    const Matrix<T>& V = t.value(v);
    Matrix<T>* dQ = t.needs_grad(q) ? &t.grad(q) : nullptr;
    Matrix<T>* dK = t.needs_grad(k) ? &t.grad(k) : nullptr;
    Matrix<T>* dV = t.needs_grad(v) ? &t.grad(v) : nullptr;
    Matrix<T> dS(n, n);
    for (int h = 0; h < heads; ++h) {
      const Matrix<T>& P = (*probs)[h];
      const int off = h * hd;
      if (dV) ker.gemm_tn(n, hd, n, P.data(), n, dO.data() + off, c, dV->data() + off, c);
      if (!dQ && !dK) continue;
      ker.gemm_nt(n, n, hd, dO.data() + off, c, V.data() + off, c, dS.data(), n, false);
      for (int r = 0; r < n; ++r) {
        T* ds = dS.row(r);
        const T* p = P.row(r);
        const T s = ker.dot(ds, p, n);
        for (int j = 0; j < n; ++j) ds[j] = p[j] * (ds[j] - s) * sc;
      }
      if (dQ) ker.gemm_nn(n, hd, n, dS.data(), n, Kx.data() + off, c, dQ->data() + off, c);
      if (dK) ker.gemm_tn(n, hd, n, dS.data(), n, Q.data() + off, c, dK->data() + off, c);
    }
  });
}

template <typename T>
Var concat_rows(Tape<T>& t, std::span<const Var> parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  const int c = t.value(parts[0]).cols();
  int n = 0;
  bool ng = false;
  for (Var p : parts) {
    require(t.value(p).cols() == c, "concat_rows: width mismatch");
    n += t.value(p).rows();
    ng = ng || t.needs_grad(p);
  }
  Matrix<T> Y(n, c);
  int r0 = 0;
  for (Var p : parts) {
    const Matrix<T>& P = t.value(p);
    std::copy(P.data(), P.data() + P.size(), Y.row(r0));
    r0 += P.rows();
  }
  std::vector<Var> ins(parts.begin(), parts.end());
  return t.push(std::move(Y), ng, [&t, ins](Var y) {
    const Matrix<T>& dY = t.grad(y);
    int r0 = 0;
    for (Var p : ins) {
      const int rows = t.value(p).rows();
      if (t.needs_grad(p)) {
        Matrix<T>& g = t.grad(p);
        const T* src = dY.row(r0);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += src[i];
      }
      r0 += rows;
    }
  });
}

template <typename T>
Var slice_rows(Tape<T>& t, Var x, int start, int count) {
  const Matrix<T>& X = t.value(x);
  require(start >= 0 && count >= 0 && start + count <= X.rows(), "slice_rows: out of range");
  Matrix<T> Y(count, X.cols());
  if (count > 0) std::copy(X.row(start), X.row(start) + Y.size(), Y.data());
  return t.push(std::move(Y), t.needs_grad(x), [&t, x, start](Var y) {
    const Matrix<T>& dY = t.grad(y);
    Matrix<T>& dX = t.grad(x);
    T* dst = dX.row(start);
    for (std::size_t i = 0; i < dY.size(); ++i) dst[i] += dY[i];
  });
}

template <typename T>
Var replace_rows(Tape<T>& t, Var x, Var token, std::span<const std::uint8_t> mask) {
  const Matrix<T>& X = t.value(x);
  const Matrix<T>& Tk = t.value(token);
  require(static_cast<int>(mask.size()) == X.rows(), "replace_rows: mask length");
  require(Tk.rows() == 1 && Tk.cols() == X.cols(), "replace_rows: token shape");
  Matrix<T> Y = X;
  for (int r = 0; r < X.rows(); ++r)
    if (mask[r]) std::copy(Tk.data(), Tk.data() + Tk.cols(), Y.row(r));
  std::vector<std::uint8_t> m(mask.begin(), mask.end());
  const bool ng = t.needs_grad(x) || t.needs_grad(token);
  return t.push(std::move(Y), ng, [&t, x, token, m](Var y) {
    const Matrix<T>& dY = t.grad(y);
    const int c = dY.cols();
    Matrix<T>* dX = t.needs_grad(x) ? &t.grad(x) : nullptr;
    Matrix<T>* dT = t.needs_grad(token) ? &t.grad(token) : nullptr;
    for (int r = 0; r < dY.rows(); ++r) {
      if (m[r]) {
        if (dT) K<T>().axpy(c, T{1}, dY.row(r), dT->data());
      } else if (dX) {
        K<T>().axpy(c, T{1}, dY.row(r), dX->row(r));
      }
    }
  });
}

template <typename T>
Var l2_normalize_rows(Tape<T>& t, Var x, T eps) {
  const Matrix<T>& X = t.value(x);
  const int n = X.rows(), c = X.cols();
  auto norms = std::make_shared<std::vector<T>>(n);
  Matrix<T> Y = X;
  for (int r = 0; r < n; ++r) {
    const T nr = std::max(std::sqrt(K<T>().dot(X.row(r), X.row(r), c)), eps);
    (*norms)[r] = nr;
    for (int j = 0; j < c; ++j) Y(r, j) /= nr;
  }
  return t.push(std::move(Y), t.needs_grad(x), [&t, x, norms, n, c, eps](Var y) {
    const Matrix<T>& dY = t.grad(y);
    const Matrix<T>& Yv = t.value(y);
    Matrix<T>& dX = t.grad(x);
    for (int r = 0; r < n; ++r) {
      const T nr = (*norms)[r];
      if (nr <= eps) {
        for (int j = 0; j < c; ++j) dX(r, j) += dY(r, j) / nr;
        continue;
      }
      const T proj = K<T>().dot(Yv.row(r), dY.row(r), c);
      for (int j = 0; j < c; ++j) dX(r, j) += (dY(r, j) - Yv(r, j) * proj) / nr;
    }
  });
}

template <typename T>
Var soft_cross_entropy(Tape<T>& t, Var logits, const Matrix<T>& targets, T inv_temp,
                       std::span<const T> row_weights) {
  const Matrix<T>& Z = t.value(logits);
  require(Z.same_shape(targets), "soft_cross_entropy: target shape mismatch");
  require(row_weights.empty() || static_cast<int>(row_weights.size()) == Z.rows(),
          "soft_cross_entropy: weight length");
  const int n = Z.rows(), k = Z.cols();
  auto probs = std::make_shared<Matrix<T>>(Z);
  std::vector<T> w(row_weights.begin(), row_weights.end());
  if (w.empty()) w.assign(n, T{1});
  T loss = 0;
  for (int r = 0; r < n; ++r) {
    T* p = probs->row(r);
    T mx = -std::numeric_limits<T>::infinity();
    for (int j = 0; j < k; ++j) mx = std::max(mx, p[j] * inv_temp);
    T sum = 0;
    for (int j = 0; j < k; ++j) sum += std::exp(p[j] * inv_temp - mx);
    const T lse = mx + std::log(sum);
    T ce = 0;
    for (int j = 0; j < k; ++j) {
      const T logq = p[j] * inv_temp - lse;
      ce -= targets(r, j) * logq;
      p[j] = std::exp(logq);
    }
    loss += w[r] * ce;
  }
  if (!std::isfinite(loss)) throw NumericError("soft_cross_entropy: non-finite loss");
  Matrix<T> out(1, 1, loss);
  auto tgt = std::make_shared<Matrix<T>>(targets);
  return t.push(std::move(out), t.needs_grad(logits), [&t, logits, probs, tgt, w, inv_temp, n, k](Var y) {
    const T g = t.grad(y)[0];
    Matrix<T>& dZ = t.grad(logits);
    for (int r = 0; r < n; ++r) {
      T tsum = 0;
      for (int j = 0; j < k; ++j) tsum += (*tgt)(r, j);
      const T f = g * w[r] * inv_temp;
      for (int j = 0; j < k; ++j) dZ(r, j) += f * ((*probs)(r, j) * tsum - (*tgt)(r, j));
    }
  });
}

template <typename T>
Var nn_uniformity(Tape<T>& t, Var x, T eps) {
  const Matrix<T>& X = t.value(x);
  const int n = X.rows(), c = X.cols();
  if (n < 2) throw InputError("uniformity loss needs at least 2 embeddings");
  auto nn = std::make_shared<std::vector<int>>(n, -1);
  auto dist = std::make_shared<std::vector<T>>(n);
  T loss = 0;
  for (int i = 0; i < n; ++i) {
    T best = std::numeric_limits<T>::infinity();
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      T d2 = 0;
      for (int q = 0; q < c; ++q) {
        const T d = X(i, q) - X(j, q);
        d2 += d * d;
      }
      if (d2 < best) {
        best = d2;
        (*nn)[i] = j;
      }
    }
    (*dist)[i] = std::sqrt(best);
    loss -= std::log((*dist)[i] + eps);
  }
  loss /= n;
  return t.push(Matrix<T>(1, 1, loss), t.needs_grad(x), [&t, x, nn, dist, n, c, eps](Var y) {
    const T g = t.grad(y)[0];
    const Matrix<T>& X = t.value(x);
    Matrix<T>& dX = t.grad(x);
    for (int i = 0; i < n; ++i) {
      const T d = (*dist)[i];
      if (d <= T{0}) continue;
      const int j = (*nn)[i];
      const T f = -g / (n * (d + eps) * d);
      for (int q = 0; q < c; ++q) {
        const T diff = X(i, q) - X(j, q);
        dX(i, q) += f * diff;
        dX(j, q) -= f * diff;
      }
    }
  });
}

template <typename T>
Var gaussian_nll(Tape<T>& t, Var mean, Var raw_logvar, std::span<const T> y, T floor) {
  const Matrix<T>& M = t.value(mean);
  const Matrix<T>& R = t.value(raw_logvar);
  require(M.cols() == 1 && R.same_shape(M), "gaussian_nll: prediction shape");
  require(static_cast<int>(y.size()) == M.rows(), "gaussian_nll: label count");
  const int n = M.rows();
  T loss = 0;
  for (int i = 0; i < n; ++i) {
    const T v = floor + softplus(R[i]);
    const T r = y[i] - M[i];
    loss += std::log(v) + r * r / v;
  }
  loss /= n;
  if (!std::isfinite(loss)) throw NumericError("gaussian_nll: non-finite loss");
  std::vector<T> labels(y.begin(), y.end());
  const bool ng = t.needs_grad(mean) || t.needs_grad(raw_logvar);
  return t.push(Matrix<T>(1, 1, loss), ng, [&t, mean, raw_logvar, labels, floor, n](Var out) {
    const T g = t.grad(out)[0] / n;
    const Matrix<T>& M = t.value(mean);
    const Matrix<T>& R = t.value(raw_logvar);
    Matrix<T>* dM = t.needs_grad(mean) ? &t.grad(mean) : nullptr;
    Matrix<T>* dR = t.needs_grad(raw_logvar) ? &t.grad(raw_logvar) : nullptr;
    for (int i = 0; i < n; ++i) {
      const T v = floor + softplus(R[i]);
      const T r = labels[i] - M[i];
      if (dM) (*dM)[i] += g * T{-2} * r / v;
      if (dR) (*dR)[i] += g * (T{1} / v - r * r / (v * v)) * sigmoid(R[i]);
    }
  });
}

#define TEMPOV_INSTANTIATE_OPS(T)                                                              \
  template T softplus<T>(T);                                                                   \
  template T sigmoid<T>(T);                                                                    \
  template Var linear<T>(Tape<T>&, Var, Var, Var);                                             \
  template Var add<T>(Tape<T>&, Var, Var);                                                     \
  template Var scale<T>(Tape<T>&, Var, T);                                                     \
  template Var mul_cols<T>(Tape<T>&, Var, Var);                                                \
  template Var layer_norm<T>(Tape<T>&, Var, Var, Var, T);                                      \
  template Var gelu<T>(Tape<T>&, Var);                                                         \
  template Var rope<T>(Tape<T>&, Var, std::shared_ptr<const RopeTable<T>>, int, int);                          \
  template Var attention<T>(Tape<T>&, Var, Var, Var, int);                                     \
  template Var concat_rows<T>(Tape<T>&, std::span<const Var>);                                 \
  template Var slice_rows<T>(Tape<T>&, Var, int, int);                                         \
  template Var replace_rows<T>(Tape<T>&, Var, Var, std::span<const std::uint8_t>);             \
  template Var l2_normalize_rows<T>(Tape<T>&, Var, T);                                         \
  template Var soft_cross_entropy<T>(Tape<T>&, Var, const Matrix<T>&, T, std::span<const T>);  \
  template Var nn_uniformity<T>(Tape<T>&, Var, T);                                             \
  template Var gaussian_nll<T>(Tape<T>&, Var, Var, std::span<const T>, T);

TEMPOV_INSTANTIATE_OPS(float)
TEMPOV_INSTANTIATE_OPS(double)

}  // namespace tempov::ad
