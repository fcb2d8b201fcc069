#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace maes {

/// Dense row-major tensor of doubles, rank 1 or 2. Rank 1 with size 1 is
/// used as a scalar. All model state (weights, memory, attention, logits)
/// lives in these.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::size_t n);
  static Tensor zeros(std::size_t rows, std::size_t cols);
  static Tensor scalar(double x);
  static Tensor vector(std::vector<double> values);
  static Tensor vector(std::initializer_list<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  static Tensor one_hot(std::size_t n, std::size_t index);
  static Tensor full(std::size_t n, double value);

  std::size_t rank() const { return rank_; }
  std::size_t size() const { return v_.size(); }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool is_scalar() const { return rank_ == 1 && v_.size() == 1; }
  bool empty() const { return v_.empty(); }

  double& operator[](std::size_t i) { return v_[i]; }
  double operator[](std::size_t i) const { return v_[i]; }
  double& at(std::size_t i, std::size_t j) { return v_[i * cols_ + j]; }
  double at(std::size_t i, std::size_t j) const { return v_[i * cols_ + j]; }

  std::span<double> data() { return v_; }
  std::span<const double> data() const { return v_; }

  bool same_shape(const Tensor& o) const {
    return rank_ == o.rank_ && rows_ == o.rows_ && cols_ == o.cols_;
  }
  std::string shape_str() const;

  bool all_finite() const;
  void fill(double x);

 private:
  Tensor(std::size_t rank, std::size_t rows, std::size_t cols, std::vector<double> v)
      : rank_(rank), rows_(rows), cols_(cols), v_(std::move(v)) {}

  std::size_t rank_ = 0;
  std::size_t rows_ = 0;  // rank 1: rows_ == size, cols_ == 1
  std::size_t cols_ = 0;
  std::vector<double> v_;
};

}  // namespace maes
