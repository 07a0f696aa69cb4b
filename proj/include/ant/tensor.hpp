#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ant {

/// Dense row-major matrix of doubles. Rank is at most 2; row and column
/// vectors are 1xC / Rx1 tensors and scalars are 1x1.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int rows, int cols) : rows_(rows), cols_(cols), v_(static_cast<size_t>(rows) * cols, 0.0) {}

  static Tensor zeros(int rows, int cols) { return Tensor(rows, cols); }
  static Tensor full(int rows, int cols, double value);
  static Tensor scalar(double value);
  static Tensor row_vector(const std::vector<double>& values);
  static Tensor from_rows(int rows, int cols, const std::vector<double>& values);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  size_t size() const { return v_.size(); }
  bool empty() const { return v_.empty(); }
  bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  std::string shape_str() const;

  double& at(int r, int c) { return v_[static_cast<size_t>(r) * cols_ + c]; }
  double at(int r, int c) const { return v_[static_cast<size_t>(r) * cols_ + c]; }
  double& operator[](size_t i) { return v_[i]; }
  double operator[](size_t i) const { return v_[i]; }

  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }
  double* row_ptr(int r) { return v_.data() + static_cast<size_t>(r) * cols_; }
  const double* row_ptr(int r) const { return v_.data() + static_cast<size_t>(r) * cols_; }

  bool all_finite() const;
  void fill(double value);
  double item() const;  // requires 1x1

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> v_;
};

// C += A * B with optional transpose of B. Shapes must already agree.
void matmul_acc(const Tensor& a, const Tensor& b, bool transpose_b, Tensor& out);

// C += A^T * B.
void matmul_tn_acc(const Tensor& a, const Tensor& b, Tensor& out);

}  // namespace ant
