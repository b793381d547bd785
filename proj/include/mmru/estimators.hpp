#pragma once

// Strongly consistent estimators computed from an urn's running sums.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mmru/errors.hpp"
#include "mmru/urn.hpp"

namespace mmru {

enum class CrossForm { Product, Fallback };

inline const char* to_string(CrossForm f) { return f == CrossForm::Product ? "product" : "fallback"; }

struct CrossMoment {
  double value = 0.0;
  CrossForm form = CrossForm::Product;
};

struct EstimatorOptions {
  // Joint-draw count sum_j X_jk X_js needed before the product-form cross
  // moment is used instead of the per-color fallback.
  double min_joint = 30.0;
};

// Snapshot of every estimator at stage n. Per-color quantities are empty
// when the color has not been drawn; cross cells are empty when undefined.
// Matrix diagonals hold the per-color value (q_hat_k, sigma2_hat_k).
struct MomentEstimates {
  std::int64_t n = 0;
  double mu_hat = 0.0;
  double qN_hat = 0.0;
  std::vector<double> nu_hat;
  std::vector<std::optional<double>> m_hat;
  std::vector<std::optional<double>> q_hat;
  std::vector<std::vector<std::optional<CrossMoment>>> q_cross_hat;
  std::vector<std::optional<double>> sigma2_hat;
  std::vector<std::vector<std::optional<double>>> c_hat;
  CountVector N_A;
  std::vector<std::string> notes;

  std::size_t dimension() const { return nu_hat.size(); }

  double m(std::size_t k) const {
    if (!m_hat.at(k)) throw NoDrawsForColor(k);
    return *m_hat[k];
  }
  double sigma2(std::size_t k) const {
    if (!sigma2_hat.at(k)) throw NoDrawsForColor(k);
    return *sigma2_hat[k];
  }
  double c(std::size_t k, std::size_t s) const {
    if (k == s) return sigma2(k);
    if (!c_hat.at(k).at(s)) throw NoJointObservations(k, s);
    return *c_hat[k][s];
  }
};

namespace detail {
inline void require_stages(const UrnState& st) {
  if (st.n < 1) throw InvalidArgument("estimators need at least one stage");
}
}  // namespace detail

inline double estimate_mu(const UrnState& st) {
  detail::require_stages(st);
  return static_cast<double>(st.sums.sum_N) / static_cast<double>(st.n);
}

inline double estimate_qN(const UrnState& st) {
  detail::require_stages(st);
  return static_cast<double>(st.sums.sum_N2) / static_cast<double>(st.n);
}

inline std::vector<double> estimate_nu(const UrnState& st) {
  detail::require_stages(st);
  std::vector<double> nu(st.dimension());
  for (std::size_t k = 0; k < nu.size(); ++k) nu[k] = st.sums.sum_ratio[k] / static_cast<double>(st.n);
  return nu;
}

inline double estimate_mean_payoff(const UrnState& st, std::size_t k) {
  if (st.N_A.at(k) < 1) throw NoDrawsForColor(k);
  return st.sums.sum_AX[k] / static_cast<double>(st.N_A[k]);
}

inline double estimate_second_moment(const UrnState& st, std::size_t k) {
  if (st.N_A.at(k) < 1) throw NoDrawsForColor(k);
  return st.sums.sum_A2X[k] / static_cast<double>(st.N_A[k]);
}

// Product form sum A_k A_s X_k X_s / sum X_k X_s once joint draws reach
// min_joint, otherwise the fallback sum A_k A_s X_k / N_{A_k}.
inline CrossMoment estimate_cross_moment(const UrnState& st, std::size_t k, std::size_t s,
                                         const EstimatorOptions& opt = {}) {
  if (k == s) throw InvalidArgument("cross moment needs two distinct colors");
  const double joint = st.sums.sum_XX(k, s);
  if (joint > 0.0 && joint >= opt.min_joint) return {st.sums.sum_AAXX(k, s) / joint, CrossForm::Product};
  if (st.N_A.at(k) >= 1)
    return {st.sums.sum_AAX(k, s) / static_cast<double>(st.N_A[k]), CrossForm::Fallback};
  if (joint > 0.0) return {st.sums.sum_AAXX(k, s) / joint, CrossForm::Product};
  throw NoJointObservations(k, s);
}

// Tolerance below zero for q - m^2 before it is treated as corruption.
inline double variance_tolerance(double q) { return 1e-9 * std::max(1.0, std::abs(q)); }

// Fills sigma2_hat = q_hat - m_hat^2 (clipped at 0) and c_hat = q_cross_hat - m_k m_s.
inline MomentEstimates derive_variances(MomentEstimates est) {
  const auto d = est.dimension();
  est.sigma2_hat.assign(d, std::nullopt);
  est.c_hat.assign(d, std::vector<std::optional<double>>(d, std::nullopt));
  for (std::size_t k = 0; k < d; ++k) {
    if (!est.m_hat[k] || !est.q_hat[k]) continue;
    const double m = *est.m_hat[k];
    double v = *est.q_hat[k] - m * m;
    if (v < 0.0) {
      if (v < -variance_tolerance(*est.q_hat[k]))
        throw InternalConsistencyError("negative variance estimate " + std::to_string(v) + " for color " +
                                       std::to_string(k + 1));
      v = 0.0;
    }
    est.sigma2_hat[k] = v;
    est.c_hat[k][k] = v;
  }
  for (std::size_t k = 0; k < d; ++k)
    for (std::size_t s = 0; s < d; ++s) {
      if (k == s || !est.q_cross_hat[k][s] || !est.m_hat[k] || !est.m_hat[s]) continue;
      est.c_hat[k][s] = est.q_cross_hat[k][s]->value - *est.m_hat[k] * *est.m_hat[s];
    }
  return est;
}

// Every estimator at the state's stage; undefined ones are left empty and
// explained in `notes`. Variances are not filled in (see derive_variances).
inline MomentEstimates estimate_moments(const UrnState& st, const EstimatorOptions& opt = {}) {
  const auto d = st.dimension();
  MomentEstimates est;
  est.n = st.n;
  est.mu_hat = estimate_mu(st);
  est.qN_hat = estimate_qN(st);
  est.nu_hat = estimate_nu(st);
  est.N_A = st.N_A;
  est.m_hat.assign(d, std::nullopt);
  est.q_hat.assign(d, std::nullopt);
  est.q_cross_hat.assign(d, std::vector<std::optional<CrossMoment>>(d, std::nullopt));
  for (std::size_t k = 0; k < d; ++k) {
    if (st.N_A[k] < 1) {
      est.notes.push_back("color " + std::to_string(k + 1) + ": no draws, mean and second moment undefined");
      continue;
    }
    est.m_hat[k] = estimate_mean_payoff(st, k);
    est.q_hat[k] = estimate_second_moment(st, k);
    est.q_cross_hat[k][k] = CrossMoment{*est.q_hat[k], CrossForm::Product};
  }
  // The fallback form is asymmetric, so the upper cell (k < s) is computed
  // and mirrored.
  for (std::size_t k = 0; k < d; ++k)
    for (std::size_t s = k + 1; s < d; ++s) {
      try {
        const auto cm = estimate_cross_moment(st, k, s, opt);
        est.q_cross_hat[k][s] = cm;
        est.q_cross_hat[s][k] = cm;
      } catch (const NoJointObservations&) {
        est.notes.push_back("colors " + std::to_string(k + 1) + "," + std::to_string(s + 1) +
                            ": no joint observations, cross moment undefined");
      }
    }
  return est;
}

// estimate_moments followed by derive_variances.
inline MomentEstimates estimate(const UrnState& st, const EstimatorOptions& opt = {}) {
  return derive_variances(estimate_moments(st, opt));
}

// Estimates restricted to `arms`, in that order. Cross cells between kept
// arms are preserved.
inline MomentEstimates select_arms(const MomentEstimates& est, const std::vector<std::size_t>& arms) {
  MomentEstimates out;
  out.n = est.n;
  out.mu_hat = est.mu_hat;
  out.qN_hat = est.qN_hat;
  out.notes = est.notes;
  const auto r = arms.size();
  const bool have_var = !est.sigma2_hat.empty();
  out.q_cross_hat.assign(r, std::vector<std::optional<CrossMoment>>(r));
  if (have_var) out.c_hat.assign(r, std::vector<std::optional<double>>(r));
  for (std::size_t i = 0; i < r; ++i) {
    const auto a = arms[i];
    out.nu_hat.push_back(est.nu_hat.at(a));
    out.m_hat.push_back(est.m_hat.at(a));
    out.q_hat.push_back(est.q_hat.at(a));
    out.N_A.push_back(est.N_A.at(a));
    if (have_var) out.sigma2_hat.push_back(est.sigma2_hat.at(a));
    for (std::size_t j = 0; j < r; ++j) {
      out.q_cross_hat[i][j] = est.q_cross_hat.at(a).at(arms[j]);
      if (have_var) out.c_hat[i][j] = est.c_hat.at(a).at(arms[j]);
    }
  }
  return out;
}

namespace detail {
template <class T, class F>
nlohmann::json optional_array(const std::vector<std::optional<T>>& v, F value) {
  auto arr = nlohmann::json::array();
  for (const auto& x : v) arr.push_back(x ? nlohmann::json(value(*x)) : nlohmann::json(nullptr));
  return arr;
}
}  // namespace detail

inline nlohmann::json to_json(const MomentEstimates& est) {
  using nlohmann::json;
  const auto id = [](double x) { return x; };
  json q_cross = json::array();
  json q_form = json::array();
  for (const auto& row : est.q_cross_hat) {
    q_cross.push_back(detail::optional_array(row, [](const CrossMoment& c) { return c.value; }));
    q_form.push_back(detail::optional_array(row, [](const CrossMoment& c) { return std::string(to_string(c.form)); }));
  }
  json c_hat = json::array();
  for (const auto& row : est.c_hat) c_hat.push_back(detail::optional_array(row, id));
  json out;
  out["n"] = est.n;
  out["mu_hat"] = est.mu_hat;
  out["qN_hat"] = est.qN_hat;
  out["nu_hat"] = est.nu_hat;
  out["m_hat"] = detail::optional_array(est.m_hat, id);
  out["q_hat"] = detail::optional_array(est.q_hat, id);
  out["q_cross_hat"] = q_cross;
  out["q_cross_form"] = q_form;
  out["sigma2_hat"] = detail::optional_array(est.sigma2_hat, id);
  out["c_hat"] = c_hat;
  out["N_A"] = est.N_A;
  out["notes"] = est.notes;
  return out;
}

}  // namespace mmru
