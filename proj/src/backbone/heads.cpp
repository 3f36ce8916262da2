#include "tempov/backbone/heads.hpp"

#include <cmath>
#include <limits>

#include "tempov/core/error.hpp"

namespace tempov::backbone {

namespace {

template <typename T>
void init_linear(LinearWeights<T>& l, int in, int out, Rng& rng, double sd) {
  l = LinearWeights<T>(in, out);
  for (std::size_t i = 0; i < l.weight.value.size(); ++i) l.weight.value[i] = static_cast<T>(normal(rng) * sd);
}

}  // namespace

template <typename T>
ProjectionHead<T>::ProjectionHead(const ProjectionHeadConfig& c, int in_dim, Rng& rng) : cfg(c) {
  cfg.validate();
  init_linear(fc1, in_dim, cfg.hidden_dim, rng, 1.0 / std::sqrt(in_dim));
  init_linear(fc2, cfg.hidden_dim, cfg.hidden_dim, rng, 1.0 / std::sqrt(cfg.hidden_dim));
  init_linear(fc3, cfg.hidden_dim, cfg.bottleneck_dim, rng, 1.0 / std::sqrt(cfg.hidden_dim));
  prototypes = Param<T>(cfg.num_prototypes, cfg.bottleneck_dim);
  for (std::size_t i = 0; i < prototypes.value.size(); ++i) prototypes.value[i] = static_cast<T>(normal(rng));
}

template <typename T>
template <typename H>
ad::Var ProjectionHead<T>::logits_impl(H& h, ad::Tape<T>& tape, ad::Var x) {
  using namespace ad;
  auto P = [&tape](auto& p) { return tape.param(p); };
  Var z = gelu(tape, linear(tape, x, P(h.fc1.weight), P(h.fc1.bias)));
  z = gelu(tape, linear(tape, z, P(h.fc2.weight), P(h.fc2.bias)));
  z = linear(tape, z, P(h.fc3.weight), P(h.fc3.bias));
  z = l2_normalize_rows(tape, z);
  Var protos = l2_normalize_rows(tape, P(h.prototypes));
  return linear(tape, z, protos);
}

template <typename T>
ad::Var ProjectionHead<T>::logits(ad::Tape<T>& tape, ad::Var x) {
  return logits_impl(*this, tape, x);
}

template <typename T>
ad::Var ProjectionHead<T>::logits(ad::Tape<T>& tape, ad::Var x) const {
  return logits_impl(*this, tape, x);
}

template <typename T>
Matrix<T> head_distribution(const Matrix<T>& logits, const ProjectionHeadConfig& cfg, HeadRole role,
                            std::span<const T> center) {
  const bool teacher = role == HeadRole::teacher;
  if (teacher && !center.empty() && static_cast<int>(center.size()) != logits.cols()) {
    throw ShapeError("teacher center length does not match prototype count");
  }
  const T inv_temp = static_cast<T>(1.0 / (teacher ? cfg.teacher_temperature : cfg.student_temperature));
  Matrix<T> out(logits.rows(), logits.cols());
  for (int r = 0; r < logits.rows(); ++r) {
    const T* z = logits.row(r);
    T* p = out.row(r);
    T mx = -std::numeric_limits<T>::infinity();
    for (int j = 0; j < logits.cols(); ++j) {
      if (!std::isfinite(z[j])) throw NumericError("head_distribution: non-finite logit");
      p[j] = (z[j] - (teacher && !center.empty() ? center[j] : T{0})) * inv_temp;
      mx = std::max(mx, p[j]);
    }
    T sum = 0;
    for (int j = 0; j < logits.cols(); ++j) {
      p[j] = std::exp(p[j] - mx);
      sum += p[j];
    }
    for (int j = 0; j < logits.cols(); ++j) p[j] /= sum;
  }
  return out;
}

template <typename T>
std::pair<ad::Var, ad::Var> RegressionHead<T>::forward(ad::Tape<T>& tape, ad::Var e) {
  return {ad::linear(tape, e, tape.param(mean.weight), tape.param(mean.bias)),
          ad::linear(tape, e, tape.param(logvar.weight), tape.param(logvar.bias))};
}

template <typename T>
std::pair<ad::Var, ad::Var> RegressionHead<T>::forward(ad::Tape<T>& tape, ad::Var e) const {
  return {ad::linear(tape, e, tape.param(mean.weight), tape.param(mean.bias)),
          ad::linear(tape, e, tape.param(logvar.weight), tape.param(logvar.bias))};
}

template <typename T>
GaussianPrediction predict_wealth(std::span<const T> e, const RegressionHead<T>& head) {
  const int d = head.mean.weight.cols();
  if (static_cast<int>(e.size()) != d) throw ShapeError("embedding width does not match regression head");
  double m = head.mean.bias.value[0];
  double raw = head.logvar.bias.value[0];
  for (int j = 0; j < d; ++j) {
    if (!std::isfinite(static_cast<double>(e[j]))) throw InputError("non-finite embedding");
    m += static_cast<double>(head.mean.weight.value[j]) * e[j];
    raw += static_cast<double>(head.logvar.weight.value[j]) * e[j];
  }
  return {m, head.variance_floor + ad::softplus(raw)};
}

template struct ProjectionHead<float>;
template struct ProjectionHead<double>;
template struct RegressionHead<float>;
template struct RegressionHead<double>;
template Matrix<float> head_distribution<float>(const Matrix<float>&, const ProjectionHeadConfig&, HeadRole,
                                                std::span<const float>);
template Matrix<double> head_distribution<double>(const Matrix<double>&, const ProjectionHeadConfig&, HeadRole,
                                                  std::span<const double>);
template GaussianPrediction predict_wealth<float>(std::span<const float>, const RegressionHead<float>&);
template GaussianPrediction predict_wealth<double>(std::span<const double>, const RegressionHead<double>&);

}  // namespace tempov::backbone
