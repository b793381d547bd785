#pragma once

// Goodness-of-fit and interval helpers used by the harness and test suites.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "mmru/chi_square.hpp"
#include "mmru/errors.hpp"

namespace mmru {

struct GofResult {
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
};

// Pearson chi-square of observed counts against cell probabilities. Cells
// with zero probability must have zero counts (otherwise p = 0).
inline GofResult chi_square_gof(std::span<const std::int64_t> observed, std::span<const double> probabilities) {
  if (observed.size() != probabilities.size() || observed.empty())
    throw InvalidArgument("observed and expected cells differ in size");
  double total = 0.0;
  for (auto o : observed) total += static_cast<double>(o);
  GofResult r;
  int cells = 0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const double expected = total * probabilities[i];
    if (expected <= 0.0) {
      if (observed[i] != 0) return {INFINITY, 0, 0.0};
      continue;
    }
    const double diff = static_cast<double>(observed[i]) - expected;
    r.statistic += diff * diff / expected;
    ++cells;
  }
  r.df = cells - 1;
  r.p_value = r.df >= 1 ? chi_square_sf(r.statistic, r.df) : 1.0;
  return r;
}

// Survival function of the Kolmogorov distribution.
inline double kolmogorov_sf(double lambda) {
  if (lambda <= 0.0) return 1.0;
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1 ? term : -term);
    if (term < 1e-18) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

struct KsResult {
  double statistic = 0.0;  // sup |F_a - F_b|
  double p_value = 1.0;
};

// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value and
// Stephens' small-sample correction.
inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw InvalidArgument("KS test needs two non-empty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  const double en = std::sqrt(na * nb / (na + nb));
  return {d, kolmogorov_sf((en + 0.12 + 0.11 / en) * d)};
}

struct Interval {
  double low = 0.0;
  double high = 1.0;
};

// Wilson score interval; z = 1.959963984540054 gives 95%.
inline Interval wilson_interval(std::int64_t successes, std::int64_t trials, double z = 1.959963984540054) {
  if (trials <= 0) return {0.0, 1.0};
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
  const double half = z / (1.0 + z2 / n) * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));
  // The bounds are exactly 0 and 1 at the extremes; don't let rounding move them.
  return {successes == 0 ? 0.0 : std::max(0.0, centre - half), successes == trials ? 1.0 : std::min(1.0, centre + half)};
}

}  // namespace mmru
