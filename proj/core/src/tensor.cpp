#include "moereid/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace moereid {

Tensor Tensor::full(Index rows, Index cols, double v) {
  Tensor t(rows, cols);
  t.fill(v);
  return t;
}

Tensor Tensor::scalar(double v) {
  Tensor t(1, 1);
  t(0, 0) = v;
  return t;
}

Tensor Tensor::row(std::initializer_list<double> values) {
  Tensor t(1, static_cast<Index>(values.size()));
  Index c = 0;
  for (double v : values) t(0, c++) = v;
  return t;
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const Index r = static_cast<Index>(rows.size());
  const Index c = r > 0 ? static_cast<Index>(rows.begin()->size()) : 0;
  Tensor t(r, c);
  Index i = 0;
  for (const auto& rw : rows) {
    if (static_cast<Index>(rw.size()) != c) throw std::invalid_argument("ragged initializer");
    Index j = 0;
    for (double v : rw) t(i, j++) = v;
    ++i;
  }
  return t;
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

double Tensor::item() const {
  if (size() != 1) throw std::logic_error("item() on non-scalar tensor");
  return data_[0];
}

double Tensor::sum() const {
  double s = 0.0;
  for (double v : data_) s += v;
  return s;
}

double Tensor::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

double Tensor::l2_norm() const {
  double s = 0.0;
  for (double v : data_) s += v * v;
  return std::sqrt(s);
}

Tensor Tensor::reshaped(Index rows, Index cols) const {
  if (rows * cols != size()) throw std::invalid_argument("reshape size mismatch");
  Tensor t = *this;
  t.rows_ = rows;
  t.cols_ = cols;
  return t;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul shape mismatch");
  Tensor out(a.rows(), b.cols());
  out.map().noalias() = a.map() * b.map();
  return out;
}

Tensor transpose(const Tensor& a) {
  Tensor out(a.cols(), a.rows());
  out.map() = a.map().transpose();
  return out;
}

Tensor softmax_rows(const Tensor& a) {
  Tensor out(a.rows(), a.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Index j = 0; j < a.cols(); ++j) mx = std::max(mx, a(i, j));
    double denom = 0.0;
    for (Index j = 0; j < a.cols(); ++j) {
      out(i, j) = std::exp(a(i, j) - mx);
      denom += out(i, j);
    }
    for (Index j = 0; j < a.cols(); ++j) out(i, j) /= denom;
  }
  return out;
}

Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (gain.size() != x.cols() || bias.size() != x.cols())
    throw std::invalid_argument("layer_norm parameter size mismatch");
  Tensor out(x.rows(), x.cols());
  const Index n = x.cols();
  for (Index i = 0; i < x.rows(); ++i) {
    double mean = 0.0;
    for (Index j = 0; j < n; ++j) mean += x(i, j);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (Index j = 0; j < n; ++j) {
      const double d = x(i, j) - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (Index j = 0; j < n; ++j)
      out(i, j) = (x(i, j) - mean) * inv * gain.at_flat(j) + bias.at_flat(j);
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("add shape mismatch");
  Tensor out(a.rows(), a.cols());
  for (Index i = 0; i < a.size(); ++i) out.at_flat(i) = a.at_flat(i) + b.at_flat(i);
  return out;
}

Tensor add_row_broadcast(const Tensor& m, const Tensor& r) {
  if (r.rows() != 1 || r.cols() != m.cols()) throw std::invalid_argument("row broadcast mismatch");
  Tensor out(m.rows(), m.cols());
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) out(i, j) = m(i, j) + r(0, j);
  return out;
}

}  // namespace moereid
