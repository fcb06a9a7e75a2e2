#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <initializer_list>
#include <vector>

namespace moereid {

using Index = std::int64_t;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Dense row-major matrix of doubles. Vectors are 1xC or Rx1, scalars 1x1.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Index rows, Index cols) : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows * cols), 0.0) {}

  static Tensor zeros(Index rows, Index cols) { return Tensor(rows, cols); }
  static Tensor full(Index rows, Index cols, double v);
  static Tensor ones(Index rows, Index cols) { return full(rows, cols, 1.0); }
  static Tensor scalar(double v);
  static Tensor row(std::initializer_list<double> values);
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  Index size() const { return rows_ * cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(Index r, Index c) { return data_[static_cast<std::size_t>(r * cols_ + c)]; }
  double operator()(Index r, Index c) const { return data_[static_cast<std::size_t>(r * cols_ + c)]; }
  double& at_flat(Index i) { return data_[static_cast<std::size_t>(i)]; }
  double at_flat(Index i) const { return data_[static_cast<std::size_t>(i)]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  Eigen::Map<RowMat> map() { return {data_.data(), rows_, cols_}; }
  Eigen::Map<const RowMat> map() const { return {data_.data(), rows_, cols_}; }

  bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  bool all_finite() const;
  void fill(double v);
  void set_zero() { fill(0.0); }

  // Value of a 1x1 tensor.
  double item() const;
  double sum() const;
  double max_abs() const;
  double l2_norm() const;

  // Row-major reinterpretation; size must match.
  Tensor reshaped(Index rows, Index cols) const;

  bool operator==(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_; }

 private:
  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<double> data_;
};

// Plain (non-autodiff) helpers used by frozen components and tests.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor softmax_rows(const Tensor& a);
Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
Tensor add(const Tensor& a, const Tensor& b);
Tensor add_row_broadcast(const Tensor& m, const Tensor& r);

}  // namespace moereid
