#include "maes/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace maes {

Tensor Tensor::zeros(std::size_t n) {
  return Tensor(1, n, 1, std::vector<double>(n, 0.0));
}

Tensor Tensor::zeros(std::size_t rows, std::size_t cols) {
  return Tensor(2, rows, cols, std::vector<double>(rows * cols, 0.0));
}

Tensor Tensor::scalar(double x) { return Tensor(1, 1, 1, {x}); }

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor(1, n, 1, std::move(values));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return vector(std::vector<double>(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  if (values.size() != rows * cols) {
    throw std::invalid_argument("Tensor::matrix: " + std::to_string(values.size()) +
                                " values for shape " + std::to_string(rows) + "x" +
                                std::to_string(cols));
  }
  return Tensor(2, rows, cols, std::move(values));
}

Tensor Tensor::one_hot(std::size_t n, std::size_t index) {
  if (index >= n) throw std::invalid_argument("Tensor::one_hot: index out of range");
  Tensor t = zeros(n);
  t[index] = 1.0;
  return t;
}

Tensor Tensor::full(std::size_t n, double value) {
  return Tensor(1, n, 1, std::vector<double>(n, value));
}

std::string Tensor::shape_str() const {
  if (rank_ == 0) return "[]";
  if (rank_ == 1) return "[" + std::to_string(rows_) + "]";
  return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
}

bool Tensor::all_finite() const {
  for (double x : v_) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

void Tensor::fill(double x) {
  for (double& v : v_) v = x;
}

}  // namespace maes
