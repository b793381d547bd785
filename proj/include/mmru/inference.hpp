#pragma once

// Asymptotic covariance of the mean-payoff estimators and the chi-square test
// for equality of the top k0 reinforcement means.
//
// Indices are 0-based throughout; t is a count (the number of leading arms
// that share the maximal mean), so arms 0..t-1 form the correlated block.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include <nlohmann/json.hpp>

#include "mmru/chi_square.hpp"
#include "mmru/errors.hpp"
#include "mmru/estimators.hpp"
#include "mmru/linalg.hpp"
#include "mmru/matrix.hpp"

namespace mmru {

enum class Regime { Null, Alternative };

// Limiting covariance of (sqrt(N_{A_k,n}) (m_hat_k - m_k))_k with plug-in
// estimates and the first t arms treated as maximal.
inline SymMatrix build_sigma(const MomentEstimates& est, std::size_t t) {
  const auto d = est.dimension();
  if (t < 1 || t > d) throw InvalidArgument("build_sigma needs 1 <= t <= d");
  if (!(est.mu_hat > 0.0)) throw InvalidArgument("build_sigma needs mu_hat > 0");
  const double excess = est.qN_hat / est.mu_hat - 1.0;  // Q/N - 1
  SymMatrix sigma(d);
  for (std::size_t i = 0; i < d; ++i) {
    const double s2 = est.sigma2(i);
    sigma(i, i) = i < t ? s2 * (est.nu_hat[i] * excess + 1.0) : s2;
  }
  if (excess != 0.0)
    for (std::size_t i = 0; i < t; ++i)
      for (std::size_t j = i + 1; j < t; ++j)
        sigma(i, j) = est.c(i, j) * std::sqrt(est.nu_hat[i] * est.nu_hat[j]) * excess;
  return sigma;
}

namespace detail {

// r_q = N_{A_{q+1},n} / N_{A_q,n} for consecutive arms q = 0..k0-2.
inline std::vector<double> draw_ratios(const MomentEstimates& est, std::size_t k0) {
  std::vector<double> r(k0 - 1);
  for (std::size_t q = 0; q < k0; ++q)
    if (est.N_A.at(q) < 1) throw NoDrawsForColor(q);
  for (std::size_t q = 0; q + 1 < k0; ++q)
    r[q] = static_cast<double>(est.N_A[q + 1]) / static_cast<double>(est.N_A[q]);
  return r;
}

inline std::vector<std::size_t> leading(std::size_t k0) {
  std::vector<std::size_t> arms(k0);
  std::iota(arms.begin(), arms.end(), std::size_t{0});
  return arms;
}

inline void check_k0(std::size_t k0, std::size_t d) {
  if (k0 < 2 || k0 > d)
    throw InvalidArgument("k0 must satisfy 2 <= k0 <= d (k0 = " + std::to_string(k0) + ", d = " +
                          std::to_string(d) + ")");
}

// Covariance of sqrt(r_p) U_p - U_{p+1} and sqrt(r_q) U_q - U_{q+1}.
inline double consecutive_cov(const SymMatrix& s, const std::vector<double>& r, std::size_t p, std::size_t q) {
  return std::sqrt(r[p] * r[q]) * s(p, q) - std::sqrt(r[q]) * s(p + 1, q) - std::sqrt(r[p]) * s(p, q + 1) +
         s(p + 1, q + 1);
}

}  // namespace detail

// Covariance of the consecutive standardized differences of the first k0
// arms when all k0 share the maximal mean (t = k0).
inline SymMatrix build_sigma_star_null(const MomentEstimates& est, std::size_t k0) {
  detail::check_k0(k0, est.dimension());
  const auto sub = select_arms(est, detail::leading(k0));
  const auto r = detail::draw_ratios(sub, k0);
  const auto sigma = build_sigma(sub, k0);
  SymMatrix star(k0 - 1);
  for (std::size_t q = 0; q + 1 < k0; ++q)
    for (std::size_t p = 0; p <= q; ++p) star(p, q) = detail::consecutive_cov(sigma, r, p, q);
  return star;
}

// Counterpart when only the first k < k0 arms are maximal. Used for power
// diagnostics; the test itself always uses the null form.
inline SymMatrix build_sigma_star_alt(const MomentEstimates& est, std::size_t k0, std::size_t k) {
  detail::check_k0(k0, est.dimension());
  if (k < 1 || k >= k0) throw InvalidArgument("build_sigma_star_alt needs 1 <= k < k0");
  const auto sub = select_arms(est, detail::leading(k0));
  const auto r = detail::draw_ratios(sub, k0);
  const auto sigma = build_sigma(sub, k);
  const std::size_t t = k;
  SymMatrix star(k0 - 1);
  for (std::size_t q = 0; q + 1 < k0; ++q) {
    if (q + 1 < t)
      star(q, q) = detail::consecutive_cov(sigma, r, q, q);
    else if (q + 1 == t)
      star(q, q) = sigma(q + 1, q + 1);
    else
      star(q, q) = r[q] * sigma(q, q) + sigma(q + 1, q + 1);
    for (std::size_t p = 0; p < q; ++p)
      star(p, q) = q + 1 < t ? detail::consecutive_cov(sigma, r, p, q) : -std::sqrt(r[q]) * sigma(p + 1, q);
  }
  return star;
}

// Standardized difference of arms k and k+1 around `difference` (the
// hypothesized m_k - m_{k+1}). Under Regime::Null the variance is corrected
// by the maximal-block factor T_{n,0}; under Regime::Alternative T = 1.
inline double pairwise_stat(const MomentEstimates& est, std::size_t k, Regime regime, double difference = 0.0) {
  if (k + 1 >= est.dimension()) throw InvalidArgument("pairwise_stat needs k + 1 < d");
  const double nk = static_cast<double>(est.N_A.at(k));
  const double nk1 = static_cast<double>(est.N_A.at(k + 1));
  if (nk < 1.0) throw NoDrawsForColor(k);
  if (nk1 < 1.0) throw NoDrawsForColor(k + 1);
  const double s2k = est.sigma2(k);
  const double s2k1 = est.sigma2(k + 1);
  const double scale = s2k / nk + s2k1 / nk1;
  if (!(scale > 0.0)) throw DegenerateCovariance("pairwise statistic has zero variance");
  double t_factor = 1.0;
  if (regime == Regime::Null) {
    if (!(est.mu_hat > 0.0)) throw InvalidArgument("pairwise_stat needs mu_hat > 0");
    const double excess = est.qN_hat / est.mu_hat - 1.0;
    const double zk = est.nu_hat[k];
    const double zk1 = est.nu_hat[k + 1];
    const double cross = excess == 0.0 ? 0.0 : est.c(k, k + 1) * std::sqrt(zk * zk1) * excess * std::sqrt(nk * nk1);
    const double num = s2k * (zk * excess + 1.0) * nk1 - 2.0 * cross + s2k1 * (zk1 * excess + 1.0) * nk;
    t_factor = num / (s2k * nk1 + s2k1 * nk);
    if (!(t_factor > 0.0)) throw DegenerateCovariance("pairwise statistic has nonpositive variance factor");
  }
  return (est.m(k) - est.m(k + 1) - difference) / std::sqrt(scale) / std::sqrt(t_factor);
}

struct TestOptions {
  std::int64_t min_draws = 30;
  double max_condition = 1e12;
  EstimatorOptions estimator;
};

struct TestResult {
  std::size_t k0 = 0;
  double theta = 0.0;
  int df = 0;
  double alpha = 0.0;
  double critical = 0.0;
  double p_value = 1.0;
  bool reject = false;
  std::vector<std::size_t> arm_order;  // arm_order[i] = original color at rank i
  std::int64_t n = 0;
  MomentEstimates estimates;
};

// Arms by descending m_hat, ties by original index; undrawn arms last.
inline std::vector<std::size_t> order_by_mean(const MomentEstimates& est) {
  std::vector<std::size_t> order(est.dimension());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ma = est.m_hat[a];
    const auto& mb = est.m_hat[b];
    if (ma.has_value() != mb.has_value()) return ma.has_value();
    return ma && *ma > *mb;
  });
  return order;
}

// Test of H0: the top k0 means are equal, against a strictly ordered
// alternative. Theta = V' (Sigma*_0)^{-1} V with V the consecutive
// differences sqrt(N_{q+1}) (m_hat_q - m_hat_{q+1}) after ordering arms by m_hat.
inline TestResult run_test(const UrnState& state, std::size_t k0, double alpha, const TestOptions& opt = {}) {
  detail::check_k0(k0, state.dimension());
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("alpha must be in (0, 1)");
  TestResult res;
  res.k0 = k0;
  res.alpha = alpha;
  res.df = static_cast<int>(k0) - 1;
  res.n = state.n;
  res.estimates = estimate(state, opt.estimator);
  res.arm_order = order_by_mean(res.estimates);

  std::vector<std::size_t> top(res.arm_order.begin(), res.arm_order.begin() + static_cast<std::ptrdiff_t>(k0));
  for (auto arm : top)
    if (state.N_A[arm] < opt.min_draws) throw InsufficientDraws(arm, state.N_A[arm], opt.min_draws);
  const auto sub = select_arms(res.estimates, top);

  const auto star = build_sigma_star_null(sub, k0);
  Cholesky chol;
  try {
    chol = cholesky(star);
  } catch (const NotPositiveDefinite& e) {
    throw DegenerateCovariance(std::string("null covariance is singular: ") + e.what());
  }
  if (chol.condition_estimate() > opt.max_condition)
    throw DegenerateCovariance("null covariance is ill-conditioned (condition estimate " +
                               std::to_string(chol.condition_estimate()) + ")");

  std::vector<double> v(k0 - 1);
  for (std::size_t q = 0; q + 1 < k0; ++q)
    v[q] = std::sqrt(static_cast<double>(sub.N_A[q + 1])) * (sub.m(q) - sub.m(q + 1));
  res.theta = chol.quadratic_form(v);
  res.critical = chi_square_quantile(1.0 - alpha, res.df);
  res.p_value = chi_square_sf(res.theta, res.df);
  res.reject = res.theta > res.critical;
  return res;
}

// Colors in arm_order are reported 1-based.
inline nlohmann::json to_json(const TestResult& r) {
  std::vector<std::size_t> order;
  for (auto a : r.arm_order) order.push_back(a + 1);
  return {{"k0", r.k0},           {"theta", r.theta},   {"df", r.df},
          {"alpha", r.alpha},     {"critical", r.critical}, {"p_value", r.p_value},
          {"reject", r.reject},   {"arm_order", order}, {"n", r.n}};
}

}  // namespace mmru
