#pragma once

// Cholesky factorization and inverse for the small covariance matrices of
// the hypothesis test.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "mmru/errors.hpp"
#include "mmru/matrix.hpp"

namespace mmru {

struct Cholesky {
  Matrix lower;  // M = L L^T

  std::size_t dimension() const { return lower.rows(); }

  // Squared ratio of the largest to smallest pivot; a cheap lower bound on
  // the 2-norm condition number.
  double condition_estimate() const {
    double lo = lower(0, 0), hi = lower(0, 0);
    for (std::size_t i = 1; i < dimension(); ++i) {
      lo = std::min(lo, lower(i, i));
      hi = std::max(hi, lower(i, i));
    }
    return (hi / lo) * (hi / lo);
  }

  // Solves L y = b.
  std::vector<double> forward(std::span<const double> b) const {
    const auto n = dimension();
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      double s = b[i];
      for (std::size_t j = 0; j < i; ++j) s -= lower(i, j) * y[j];
      y[i] = s / lower(i, i);
    }
    return y;
  }

  // Solves M x = b.
  std::vector<double> solve(std::span<const double> b) const {
    auto x = forward(b);
    const auto n = dimension();
    for (std::size_t i = n; i-- > 0;) {
      double s = x[i];
      for (std::size_t j = i + 1; j < n; ++j) s -= lower(j, i) * x[j];
      x[i] = s / lower(i, i);
    }
    return x;
  }

  // b^T M^{-1} b as |L^{-1} b|^2, nonnegative by construction.
  double quadratic_form(std::span<const double> b) const {
    double q = 0.0;
    for (double v : forward(b)) q += v * v;
    return q;
  }
};

// Throws NotPositiveDefinite when a pivot falls to 1e-12 of the largest
// diagonal entry or below.
inline Cholesky cholesky(const SymMatrix& m) {
  const auto n = m.dimension();
  if (n == 0) throw InvalidArgument("empty matrix");
  double max_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, std::abs(m(i, i)));
  const double floor = 1e-12 * max_diag;
  Matrix l = Matrix::square(n);
  for (std::size_t j = 0; j < n; ++j) {
    double pivot = m(j, j);
    for (std::size_t k = 0; k < j; ++k) pivot -= l(j, k) * l(j, k);
    if (!(pivot > floor) || max_diag == 0.0)
      throw NotPositiveDefinite("matrix is not positive definite (pivot " + std::to_string(j + 1) + " = " +
                                std::to_string(pivot) + ")");
    l(j, j) = std::sqrt(pivot);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = m(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  return {std::move(l)};
}

inline SymMatrix spd_inverse(const SymMatrix& m) {
  const auto chol = cholesky(m);
  const auto n = m.dimension();
  SymMatrix inv(n);
  std::vector<double> e(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    std::fill(e.begin(), e.end(), 0.0);
    e[j] = 1.0;
    const auto col = chol.solve(e);
    for (std::size_t i = 0; i <= j; ++i) inv(i, j) = col[i];
  }
  return inv;
}

}  // namespace mmru
