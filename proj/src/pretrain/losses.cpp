#include "tempov/pretrain/losses.hpp"

#include <cmath>
#include <limits>

#include "tempov/core/error.hpp"

namespace tempov::pretrain {

double cross_entropy(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ShapeError("cross_entropy: prototype counts differ");
  double ce = 0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    if (p[j] == 0.0) continue;
    ce -= p[j] * std::log(q[j]);
  }
  return ce;
}

double bi_dino_loss(const Matrix<double>& teacher, const Matrix<double>& students) {
  if (teacher.rows() != 1) throw ShapeError("bi_dino_loss: teacher must be a single distribution");
  if (students.rows() == 0) throw ShapeError("bi_dino_loss: no student views");
  if (students.cols() != teacher.cols()) throw ShapeError("bi_dino_loss: prototype counts differ");
  const std::span<const double> p(teacher.row(0), teacher.cols());
  double total = 0;
  for (int v = 0; v < students.rows(); ++v) {
    total += cross_entropy(p, std::span<const double>(students.row(v), students.cols()));
  }
  return total / students.rows();
}

double bi_ibot_loss(const Matrix<double>& teacher_patches, const Matrix<double>& student_patches,
                    std::span<const std::uint8_t> mask) {
  if (!teacher_patches.same_shape(student_patches)) throw ShapeError("bi_ibot_loss: patch grids differ");
  if (static_cast<int>(mask.size()) != teacher_patches.rows()) throw ShapeError("bi_ibot_loss: mask shape");
  double total = 0;
  int masked = 0;
  const int k = teacher_patches.cols();
  for (int i = 0; i < teacher_patches.rows(); ++i) {
    if (!mask[i]) continue;
    total += cross_entropy(std::span<const double>(teacher_patches.row(i), k),
                           std::span<const double>(student_patches.row(i), k));
    ++masked;
  }
  return masked == 0 ? 0.0 : total / masked;
}

double uniformity_loss(const Matrix<double>& e, double eps) {
  const int n = e.rows();
  if (n < 2) throw InputError("uniformity loss needs at least 2 embeddings");
  double loss = 0;
  for (int i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      double d2 = 0;
      for (int c = 0; c < e.cols(); ++c) d2 += (e(i, c) - e(j, c)) * (e(i, c) - e(j, c));
      best = std::min(best, d2);
    }
    loss -= std::log(std::sqrt(best) + eps);
  }
  return loss / n;
}

}  // namespace tempov::pretrain
