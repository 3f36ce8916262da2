#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "tempov/core/error.hpp"
#include "tempov/core/param.hpp"

namespace tempov {

// Decoupled weight decay applies to projection weights and prototypes only;
// biases, norms, LayerScale, tokens and adapters are left alone.
inline bool decays(const std::string& name) {
  auto ends_with = [&](const std::string& s) {
    return name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0;
  };
  return ends_with(".weight") || ends_with(".prototypes");
}

template <typename T>
struct NamedParam {
  std::string name;
  Param<T>* param;
};

template <typename T>
class AdamW {
 public:
  AdamW() = default;
  explicit AdamW(std::vector<NamedParam<T>> params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (auto& p : params_) {
      m_.emplace_back(p.param->rows(), p.param->cols());
      v_.emplace_back(p.param->rows(), p.param->cols());
      decay_.push_back(decays(p.name));
    }
  }

  // Global ℓ2 norm of the trainable gradients.
  double grad_norm() const {
    double s = 0;
    for (const auto& p : params_) {
      if (!p.param->trainable) continue;
      for (std::size_t i = 0; i < p.param->grad.size(); ++i) {
        const double g = p.param->grad[i];
        s += g * g;
      }
    }
    return std::sqrt(s);
  }

  void clip_grad_norm(double max_norm) {
    const double n = grad_norm();
    if (max_norm <= 0 || n <= max_norm) return;
    const T f = static_cast<T>(max_norm / (n + 1e-12));
    for (auto& p : params_)
      for (std::size_t i = 0; i < p.param->grad.size(); ++i) p.param->grad[i] *= f;
  }

  void step(double lr, double weight_decay) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Param<T>& p = *params_[k].param;
      if (!p.trainable) continue;
      Matrix<T>& m = m_[k];
      Matrix<T>& v = v_[k];
      const double wd = decay_[k] ? weight_decay : 0.0;
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double g = p.grad[i];
        m[i] = static_cast<T>(beta1_ * m[i] + (1 - beta1_) * g);
        v[i] = static_cast<T>(beta2_ * v[i] + (1 - beta2_) * g * g);
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        double w = p.value[i];
        w -= lr * wd * w;
        w -= lr * mhat / (std::sqrt(vhat) + eps_);
        p.value[i] = static_cast<T>(w);
      }
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.param->zero_grad();
  }

  const std::vector<NamedParam<T>>& params() const noexcept { return params_; }
  long steps() const noexcept { return t_; }

 private:
  std::vector<NamedParam<T>> params_;
  std::vector<Matrix<T>> m_, v_;
  std::vector<bool> decay_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
};

}  // namespace tempov
