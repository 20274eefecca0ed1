#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace act {

// Dense row-major matrix of doubles. The checked constructors reject NaN and
// infinity; hot paths that fill buffers incrementally go through unchecked()
// and own the values they write.
class Matrix {
public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols);  // zero-filled
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix unchecked(std::size_t rows, std::size_t cols,
                          std::vector<double> data);
  static Matrix identity(std::size_t n);
  static Matrix column(std::span<const double> v);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<const double> flat() const { return {data_.data(), data_.size()}; }

  bool same_shape(const Matrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }
  void fill(double v);
  void check_finite(const char* where) const;  // throws std::invalid_argument

private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double c, const Matrix& a);

double frobenius_inner(const Matrix& a, const Matrix& b);
double frobenius_norm(const Matrix& a);
double trace(const Matrix& a);

// Sum in a fixed left-to-right pairwise-tree order: [a b c d e] reduces as
// ((a+b)+(c+d))+e. Every cross-sample reduction in the library funnels
// through this so results do not depend on how work is scheduled.
double tree_sum(std::span<const double> v);

double squared_distance(std::span<const double> a, std::span<const double> b);
double euclidean_distance(std::span<const double> a, std::span<const double> b);
double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> v);

}  // namespace act
