#include "act/matrix.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace act {

Matrix::Matrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_)
    throw std::invalid_argument("matrix: data size " +
                                std::to_string(data_.size()) +
                                " does not match " + std::to_string(rows_) +
                                "x" + std::to_string(cols_));
  check_finite("matrix constructor");
}

Matrix Matrix::unchecked(std::size_t rows, std::size_t cols,
                         std::vector<double> data) {
  Matrix m;
  m.rows_ = rows;
  m.cols_ = cols;
  m.data_ = std::move(data);
  if (m.data_.size() != rows * cols)
    throw std::invalid_argument("matrix: data size does not match shape");
  return m;
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
  return m;
}

Matrix Matrix::column(std::span<const double> v) {
  Matrix m;
  m.rows_ = v.size();
  m.cols_ = 1;
  m.data_.assign(v.begin(), v.end());
  return m;
}

void Matrix::fill(double v) {
  for (double& x : data_) x = v;
}

void Matrix::check_finite(const char* where) const {
  for (std::size_t i = 0; i < data_.size(); ++i)
    if (!std::isfinite(data_[i]))
      throw std::invalid_argument(std::string(where) +
                                  ": non-finite entry at flat index " +
                                  std::to_string(i));
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw std::invalid_argument("matmul: inner dimensions disagree");
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a.at(i, k);
      for (std::size_t j = 0; j < b.cols(); ++j)
        out.at(i, j) += aik * b.at(k, j);
    }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out.at(j, i) = a.at(i, j);
  return out;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("matrix +: shape mismatch");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("matrix -: shape mismatch");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

Matrix operator*(double c, const Matrix& a) {
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c;
  return out;
}

double frobenius_inner(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b))
    throw std::invalid_argument("frobenius_inner: shape mismatch");
  return dot(a.flat(), b.flat());
}

double frobenius_norm(const Matrix& a) { return norm2(a.flat()); }

double trace(const Matrix& a) {
  std::size_t n = a.rows() < a.cols() ? a.rows() : a.cols();
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = a.at(i, i);
  return tree_sum(d);
}

double tree_sum(std::span<const double> v) {
  if (v.empty()) return 0.0;
  thread_local std::vector<double> scratch;
  scratch.assign(v.begin(), v.end());
  std::size_t n = scratch.size();
  while (n > 1) {
    std::size_t h = 0;
    for (std::size_t i = 0; i + 1 < n; i += 2)
      scratch[h++] = scratch[i] + scratch[i + 1];
    if (n % 2) scratch[h++] = scratch[n - 1];
    n = h;
  }
  return scratch[0];
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw std::invalid_argument("squared_distance: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

double euclidean_distance(std::span<const double> a,
                          std::span<const double> b) {
  return std::sqrt(squared_distance(a, b));
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

}  // namespace act
