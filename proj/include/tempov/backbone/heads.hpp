#pragma once

#include <span>
#include <string>
#include <vector>

#include "tempov/backbone/config.hpp"
#include "tempov/backbone/encoder.hpp"

namespace tempov::backbone {

enum class HeadRole { student, teacher };

// DINO/iBOT projection head: 3-layer GELU MLP, ℓ2-normalized bottleneck and a
// weight-normalized prototype layer. Produces prototype logits (cosines); the
// role-specific temperature and centering are applied by head_distribution.
template <typename T>
struct ProjectionHead {
  ProjectionHeadConfig cfg;
  LinearWeights<T> fc1, fc2, fc3;
  Param<T> prototypes;  // [num_prototypes × bottleneck]

  ProjectionHead() = default;
  ProjectionHead(const ProjectionHeadConfig& cfg, int in_dim, Rng& rng);

  ad::Var logits(ad::Tape<T>& tape, ad::Var x);
  ad::Var logits(ad::Tape<T>& tape, ad::Var x) const;

  template <typename F>
  void visit(const std::string& p, F&& f) {
    fc1.visit(p + ".fc1", f);
    fc2.visit(p + ".fc2", f);
    fc3.visit(p + ".fc3", f);
    f(p + ".prototypes", prototypes);
  }

 private:
  template <typename H>
  static ad::Var logits_impl(H& h, ad::Tape<T>& tape, ad::Var x);
};

// Probability vectors over prototypes, one per row of `logits`.
// Student: softmax(z / τ_s). Teacher: softmax((z − center) / τ_t).
// Throws NumericError on non-finite logits.
template <typename T>
Matrix<T> head_distribution(const Matrix<T>& logits, const ProjectionHeadConfig& cfg, HeadRole role,
                            std::span<const T> center = {});

struct GaussianPrediction {
  double mean = 0.0;
  double variance = 1.0;
};

// Linear mean and log-variance heads on the global embedding.
// variance = floor + softplus(raw), so it never drops below the floor.
template <typename T>
struct RegressionHead {
  LinearWeights<T> mean;    // [1 × D]
  LinearWeights<T> logvar;  // [1 × D]
  double variance_floor = 1e-6;

  RegressionHead() = default;
  explicit RegressionHead(int in_dim) : mean(in_dim, 1), logvar(in_dim, 1) {}

  // Returns {mean, raw_logvar} tape handles, each [n × 1].
  std::pair<ad::Var, ad::Var> forward(ad::Tape<T>& tape, ad::Var embedding);
  std::pair<ad::Var, ad::Var> forward(ad::Tape<T>& tape, ad::Var embedding) const;

  template <typename F>
  void visit(const std::string& p, F&& f) {
    mean.visit(p + ".mean", f);
    logvar.visit(p + ".logvar", f);
  }
};

template <typename T>
GaussianPrediction predict_wealth(std::span<const T> global_embedding, const RegressionHead<T>& head);

}  // namespace tempov::backbone
