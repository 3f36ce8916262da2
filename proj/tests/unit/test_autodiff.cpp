#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "tempov/autodiff/ops.hpp"
#include "tempov/backbone/encoder.hpp"
#include "tempov/core/param.hpp"
#include "tempov/core/rng.hpp"

using namespace tempov;
using ad::Tape;
using ad::Var;

namespace {

Param<double> rand_param(int r, int c, Rng& rng, double sd = 1.0) {
  Param<double> p(r, c);
  for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] = normal(rng, 0.0, sd);
  return p;
}

// Every op result is read out through a fixed soft cross-entropy so the
// checked quantity is a scalar that depends on all output entries.
struct Probe {
  Matrix<double> targets;
  Var operator()(Tape<double>& t, Var x) const { return ad::soft_cross_entropy<double>(t, x, targets, 0.7); }
};

Probe make_probe(int rows, int cols, Rng& rng) {
  Probe p{Matrix<double>(rows, cols)};
  for (int r = 0; r < rows; ++r) {
    double s = 0;
    for (int c = 0; c < cols; ++c) s += (p.targets(r, c) = uniform01(rng) + 0.01);
    for (int c = 0; c < cols; ++c) p.targets(r, c) /= s;
  }
  return p;
}

using Build = std::function<Var(Tape<double>&, std::vector<Var>&)>;

double max_grad_error(std::vector<Param<double>*> params, const Build& build) {
  auto eval = [&](bool record) {
    Tape<double> t(record);
    std::vector<Var> vars;
    for (auto* p : params) vars.push_back(t.param(*p));
    Var out = build(t, vars);
    if (record) t.backward(out);
    return t.value(out)[0];
  };
  for (auto* p : params) p->zero_grad();
  eval(true);
  double worst = 0;
  const double h = 1e-6;
  for (auto* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double x0 = p->value[i];
      p->value[i] = x0 + h;
      const double lp = eval(false);
      p->value[i] = x0 - h;
      const double lm = eval(false);
      p->value[i] = x0;
      const double num = (lp - lm) / (2 * h);
      const double err = std::fabs(num - p->grad[i]) / std::max({1e-4, std::fabs(num), std::fabs(p->grad[i])});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("dense ops have correct gradients") {
  Rng rng = make_rng(1);
  auto x = rand_param(4, 6, rng), w = rand_param(5, 6, rng), b = rand_param(1, 5, rng);
  auto probe = make_probe(4, 5, rng);
  CHECK(max_grad_error({&x, &w, &b}, [&](auto& t, auto& v) { return probe(t, ad::linear<double>(t, v[0], v[1], v[2])); }) <
        1e-5);

  auto y = rand_param(4, 6, rng), g = rand_param(1, 6, rng), gb = rand_param(1, 6, rng);
  auto probe6 = make_probe(4, 6, rng);
  CHECK(max_grad_error({&x, &y}, [&](auto& t, auto& v) {
          return probe6(t, ad::add<double>(t, ad::scale<double>(t, v[0], 1.7), v[1]));
        }) < 1e-5);
  CHECK(max_grad_error({&x, &g}, [&](auto& t, auto& v) { return probe6(t, ad::mul_cols<double>(t, v[0], v[1])); }) <
        1e-5);
  CHECK(max_grad_error({&x, &g, &gb},
                       [&](auto& t, auto& v) { return probe6(t, ad::layer_norm<double>(t, v[0], v[1], v[2])); }) < 1e-5);
  CHECK(max_grad_error({&x}, [&](auto& t, auto& v) { return probe6(t, ad::gelu<double>(t, v[0])); }) < 1e-5);
  CHECK(max_grad_error({&x}, [&](auto& t, auto& v) { return probe6(t, ad::l2_normalize_rows<double>(t, v[0])); }) < 1e-5);
}

TEST_CASE("attention and rope have correct gradients") {
  Rng rng = make_rng(2);
  // 1 prefix token + a 2×2 patch grid, 2 heads of width 4.
  auto q = rand_param(5, 8, rng), k = rand_param(5, 8, rng), v = rand_param(5, 8, rng);
  auto probe = make_probe(5, 8, rng);
  CHECK(max_grad_error({&q, &k, &v}, [&](auto& t, auto& vs) { return probe(t, ad::attention<double>(t, vs[0], vs[1], vs[2], 2)); }) <
        1e-5);
  auto table = backbone::make_rope_table<double>(2, 2, 4, 100.0);
  CHECK(max_grad_error({&q}, [&](auto& t, auto& vs) { return probe(t, ad::rope<double>(t, vs[0], table, 1, 2)); }) < 1e-5);
}

TEST_CASE("rope preserves per-head norms and leaves prefix rows alone") {
  Rng rng = make_rng(3);
  auto q = rand_param(5, 8, rng);
  auto table = backbone::make_rope_table<double>(2, 2, 4, 100.0);
  Tape<double> t(false);
  const auto& out = t.value(ad::rope<double>(t, t.constant(q.value), table, 1, 2));
  for (int c = 0; c < 8; ++c) CHECK(out(0, c) == q.value(0, c));
  for (int r = 1; r < 5; ++r)
    for (int h = 0; h < 2; ++h) {
      double a = 0, b = 0;
      for (int c = 4 * h; c < 4 * h + 4; ++c) {
        a += q.value(r, c) * q.value(r, c);
        b += out(r, c) * out(r, c);
      }
      CHECK(b == doctest::Approx(a).epsilon(1e-12));
    }
}

TEST_CASE("row plumbing ops have correct gradients") {
  Rng rng = make_rng(4);
  auto a = rand_param(2, 3, rng), b = rand_param(3, 3, rng), tok = rand_param(1, 3, rng);
  auto probe = make_probe(3, 3, rng);
  const std::vector<std::uint8_t> mask{1, 0, 1};
  CHECK(max_grad_error({&a, &b, &tok}, [&](auto& t, auto& v) {
          Var parts[] = {v[0], v[1]};
          Var cat = ad::concat_rows<double>(t, parts);
          Var mid = ad::slice_rows<double>(t, cat, 1, 3);
          return probe(t, ad::replace_rows<double>(t, mid, v[2], mask));
        }) < 1e-5);
}

TEST_CASE("loss ops have correct gradients") {
  Rng rng = make_rng(5);
  auto x = rand_param(6, 4, rng);
  CHECK(max_grad_error({&x}, [&](auto& t, auto& v) { return ad::nn_uniformity<double>(t, v[0], 1e-8); }) < 1e-5);

  auto logits = rand_param(3, 7, rng);
  auto probe = make_probe(3, 7, rng);
  const std::vector<double> rw{0.2, 0.5, 0.3};
  CHECK(max_grad_error({&logits}, [&](auto& t, auto& v) {
          return ad::soft_cross_entropy<double>(t, v[0], probe.targets, 10.0, rw);
        }) < 1e-5);

  auto mean = rand_param(5, 1, rng), raw = rand_param(5, 1, rng);
  const std::vector<double> y{0.1, -0.4, 1.2, 0.0, 0.7};
  CHECK(max_grad_error({&mean, &raw}, [&](auto& t, auto& v) { return ad::gaussian_nll<double>(t, v[0], v[1], y, 1e-6); }) <
        1e-5);
}

TEST_CASE("constants receive no gradient and value-only tapes record nothing") {
  Rng rng = make_rng(6);
  auto w = rand_param(3, 3, rng);
  auto probe = make_probe(2, 3, rng);
  Tape<double> t(true);
  Var x = t.constant(Matrix<double>(2, 3, 0.5));
  Var out = probe(t, ad::linear<double>(t, x, t.param(w)));
  CHECK_FALSE(t.needs_grad(x));
  t.backward(out);
  double norm = 0;
  for (std::size_t i = 0; i < w.grad.size(); ++i) norm += std::fabs(w.grad[i]);
  CHECK(norm > 0);

  Tape<double> off(false);
  Var y = off.param(w);
  CHECK_FALSE(off.needs_grad(y));
}
