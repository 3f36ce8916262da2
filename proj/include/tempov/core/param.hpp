#pragma once

#include "tempov/core/matrix.hpp"

namespace tempov {

// A trainable tensor: value plus an accumulated gradient of the same shape.
template <typename T>
struct Param {
  Matrix<T> value;
  Matrix<T> grad;
  bool trainable = true;

  Param() = default;
  Param(int rows, int cols) : value(rows, cols), grad(rows, cols) {}

  void zero_grad() { grad.fill(T{0}); }
  int rows() const noexcept { return value.rows(); }
  int cols() const noexcept { return value.cols(); }
};

}  // namespace tempov
