#pragma once

// Chi-square distribution via the regularized incomplete gamma function:
// power series below x = a + 1, Lentz continued fraction above.

#include <cmath>
#include <limits>
#include <string>

#include "mmru/errors.hpp"

namespace mmru {

namespace detail {

inline double gamma_prefactor(double a, double x) { return std::exp(-x + a * std::log(x) - std::lgamma(a)); }

inline double gamma_p_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  for (int n = 1; n < 10000; ++n) {
    term *= x / (a + n);
    sum += term;
    if (std::abs(term) < std::abs(sum) * 1e-17) break;
  }
  return sum * gamma_prefactor(a, x);
}

inline double gamma_q_fraction(double a, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 10000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-17) break;
  }
  return h * gamma_prefactor(a, x);
}

inline void check_gamma_args(double a, double x) {
  if (!(a > 0.0) || !(x >= 0.0)) throw InvalidArgument("incomplete gamma needs a > 0 and x >= 0");
}

}  // namespace detail

// P(a, x), the regularized lower incomplete gamma function.
inline double regularized_gamma_p(double a, double x) {
  detail::check_gamma_args(a, x);
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  if (x < a + 1.0) return detail::gamma_p_series(a, x);
  return 1.0 - detail::gamma_q_fraction(a, x);
}

// Q(a, x) = 1 - P(a, x), computed directly so upper tails keep precision.
inline double regularized_gamma_q(double a, double x) {
  detail::check_gamma_args(a, x);
  if (x == 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  if (x < a + 1.0) return 1.0 - detail::gamma_p_series(a, x);
  return detail::gamma_q_fraction(a, x);
}

inline void check_df(int df) {
  if (df < 1) throw InvalidArgument("chi-square degrees of freedom must be >= 1, got " + std::to_string(df));
}

inline double chi_square_cdf(double x, int df) {
  check_df(df);
  if (!(x >= 0.0)) throw InvalidArgument("chi-square cdf needs x >= 0");
  return regularized_gamma_p(0.5 * df, 0.5 * x);
}

// Upper tail, i.e. the p-value of an observed statistic.
inline double chi_square_sf(double x, int df) {
  check_df(df);
  if (!(x >= 0.0)) throw InvalidArgument("chi-square survival function needs x >= 0");
  return regularized_gamma_q(0.5 * df, 0.5 * x);
}

inline double chi_square_pdf(double x, int df) {
  if (x <= 0.0) return df == 2 ? 0.5 : 0.0;
  const double k = 0.5 * df;
  return std::exp((k - 1.0) * std::log(x) - 0.5 * x - k * std::log(2.0) - std::lgamma(k));
}

// Inverse of chi_square_cdf: Newton steps from the Wilson-Hilferty guess,
// falling back to bisection whenever a step leaves the bracket.
inline double chi_square_quantile(double p, int df) {
  check_df(df);
  if (!(p >= 0.0 && p < 1.0)) throw InvalidArgument("chi-square quantile needs 0 <= p < 1");
  if (p == 0.0) return 0.0;
  const double k = df;
  double lo = 0.0;
  double hi = std::max(1.0, k);
  while (chi_square_cdf(hi, df) < p) {
    lo = hi;
    hi *= 2.0;
  }
  // Wilson-Hilferty starting point; the normal quantile is bisected on erfc.
  double z;
  {
    double zl = -40.0, zh = 40.0;
    for (int i = 0; i < 200; ++i) {
      const double zm = 0.5 * (zl + zh);
      if (0.5 * std::erfc(-zm / std::sqrt(2.0)) < p)
        zl = zm;
      else
        zh = zm;
    }
    z = 0.5 * (zl + zh);
  }
  const double c = 2.0 / (9.0 * k);
  double x = k * std::pow(std::max(1e-12, 1.0 - c + z * std::sqrt(c)), 3);
  if (!(x > lo && x < hi)) x = 0.5 * (lo + hi);

  for (int iter = 0; iter < 500; ++iter) {
    const double f = chi_square_cdf(x, df) - p;
    if (f == 0.0) return x;
    if (f < 0.0)
      lo = x;
    else
      hi = x;
    const double dens = chi_square_pdf(x, df);
    double next = dens > 0.0 ? x - f / dens : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    const double eps = 4.0 * std::numeric_limits<double>::epsilon();
    if (std::abs(next - x) <= eps * x || hi - lo <= eps * hi) return next;
    x = next;
  }
  return x;
}

}  // namespace mmru
