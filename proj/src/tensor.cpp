#include "ant/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace ant {

Tensor Tensor::full(int rows, int cols, double value) {
  Tensor t(rows, cols);
  t.fill(value);
  return t;
}

Tensor Tensor::scalar(double value) {
  Tensor t(1, 1);
  t[0] = value;
  return t;
}

Tensor Tensor::row_vector(const std::vector<double>& values) {
  Tensor t(1, static_cast<int>(values.size()));
  for (size_t i = 0; i < values.size(); ++i) t[i] = values[i];
  return t;
}

Tensor Tensor::from_rows(int rows, int cols, const std::vector<double>& values) {
  if (values.size() != static_cast<size_t>(rows) * cols)
    throw std::invalid_argument("from_rows: value count does not match shape");
  Tensor t(rows, cols);
  for (size_t i = 0; i < values.size(); ++i) t[i] = values[i];
  return t;
}

std::string Tensor::shape_str() const {
  return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
}

bool Tensor::all_finite() const {
  for (double x : v_)
    if (!std::isfinite(x)) return false;
  return true;
}

void Tensor::fill(double value) {
  for (double& x : v_) x = value;
}

double Tensor::item() const {
  if (rows_ != 1 || cols_ != 1) throw std::invalid_argument("item() on non-scalar tensor " + shape_str());
  return v_[0];
}

void matmul_acc(const Tensor& a, const Tensor& b, bool transpose_b, Tensor& out) {
  const int n = a.rows();
  const int k = a.cols();
  if (!transpose_b) {
    const int m = b.cols();
    for (int i = 0; i < n; ++i) {
      const double* arow = a.row_ptr(i);
      double* crow = out.row_ptr(i);
      for (int p = 0; p < k; ++p) {
        const double av = arow[p];
        const double* brow = b.row_ptr(p);
        for (int j = 0; j < m; ++j) crow[j] += av * brow[j];
      }
    }
  } else {
    // out[i][j] = dot(a.row(i), b.row(j))
    const int m = b.rows();
    for (int i = 0; i < n; ++i) {
      const double* arow = a.row_ptr(i);
      double* crow = out.row_ptr(i);
      for (int j = 0; j < m; ++j) {
        const double* brow = b.row_ptr(j);
        double acc = 0.0;
        for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
        crow[j] += acc;
      }
    }
  }
}

void matmul_tn_acc(const Tensor& a, const Tensor& b, Tensor& out) {
  // out[p][j] += sum_i a[i][p] * b[i][j]
  const int n = a.rows();
  const int k = a.cols();
  const int m = b.cols();
  for (int i = 0; i < n; ++i) {
    const double* arow = a.row_ptr(i);
    const double* brow = b.row_ptr(i);
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      double* crow = out.row_ptr(p);
      for (int j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace ant
