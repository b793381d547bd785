#pragma once

#include <cassert>
#include <cstddef>
#include <utility>
#include <vector>

namespace mmru {

// Dense row-major matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix square(std::size_t n, double fill = 0.0) { return Matrix(n, n, fill); }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t i, std::size_t j) {
    assert(i < rows_ && j < cols_);
    return data_[i * cols_ + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    assert(i < rows_ && j < cols_);
    return data_[i * cols_ + j];
  }

  const std::vector<double>& data() const { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Symmetric matrix with packed upper-triangle storage; (i, j) and (j, i)
// address the same cell, so symmetry holds by construction.
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(std::size_t n, double fill = 0.0) : n_(n), data_(n * (n + 1) / 2, fill) {}

  static SymMatrix identity(std::size_t n) {
    SymMatrix m(n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static SymMatrix diagonal(const std::vector<double>& diag) {
    SymMatrix m(diag.size());
    for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
    return m;
  }

  std::size_t dimension() const { return n_; }

  double& operator()(std::size_t i, std::size_t j) { return data_[index(i, j)]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[index(i, j)]; }

  Matrix dense() const {
    Matrix out = Matrix::square(n_);
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < n_; ++j) out(i, j) = (*this)(i, j);
    return out;
  }

  friend bool operator==(const SymMatrix&, const SymMatrix&) = default;

 private:
  std::size_t index(std::size_t i, std::size_t j) const {
    assert(i < n_ && j < n_);
    if (i > j) std::swap(i, j);
    // row i of the upper triangle starts after i rows of decreasing length
    return i * n_ - i * (i - 1) / 2 + (j - i);
  }

  std::size_t n_ = 0;
  std::vector<double> data_;
};

}  // namespace mmru
