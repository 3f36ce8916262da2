#pragma once

#include <cstdint>
#include <span>

#include "tempov/core/matrix.hpp"

namespace tempov::pretrain {

// Cross-entropy −Σ p log q between two distributions of equal length.
double cross_entropy(std::span<const double> p, std::span<const double> q);

// Image-level bi-temporal DINO loss: mean over student views of
// CE(teacher distribution on the epoch-1 global crop, student distribution).
// teacher is [1 × K]; students is [V × K] (V = 5 in training).
double bi_dino_loss(const Matrix<double>& teacher, const Matrix<double>& students);

// Patch-level bi-temporal iBOT loss: mean over masked grid positions of
// CE(teacher patch distribution, student patch distribution). No masked
// positions gives 0.
double bi_ibot_loss(const Matrix<double>& teacher_patches, const Matrix<double>& student_patches,
                    std::span<const std::uint8_t> mask);

// Nearest-neighbour spreading penalty −(1/n) Σ log(‖e_i − nn(e_i)‖ + eps).
double uniformity_loss(const Matrix<double>& embeddings, double eps = 1e-8);

}  // namespace tempov::pretrain
