#pragma once

// Exact sampling kernels and probability mass functions used by the urn.
//
// All discrete samplers are inverse-CDF: one uniform per univariate draw,
// with the pmf advanced by its ratio recurrence. Starting masses are taken
// from log-gamma (or an exact short product when the draw is small); when the
// starting mass would underflow, the walk restarts from the mode instead.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mmru/errors.hpp"
#include "mmru/matrix.hpp"
#include "mmru/rng.hpp"

namespace mmru {

using CountVector = std::vector<std::int64_t>;

inline constexpr double kProbabilitySumTolerance = 1e-12;

namespace detail {

inline double log_choose(std::int64_t n, std::int64_t k) {
  return std::lgamma(static_cast<double>(n) + 1.0) - std::lgamma(static_cast<double>(k) + 1.0) -
         std::lgamma(static_cast<double>(n - k) + 1.0);
}

// Smallest mass at which a walk from the bottom of the support is trusted.
inline constexpr double kWalkFloor = 1e-280;

// Inverse CDF on lo..hi given the pmf at lo and ratio(x) = pmf(x+1)/pmf(x).
template <class Ratio>
std::int64_t walk_from_bottom(std::int64_t lo, std::int64_t hi, double p_lo, Ratio ratio, double u) {
  std::int64_t x = lo;
  double p = p_lo;
  double cdf = p;
  while (u >= cdf && x < hi) {
    p *= ratio(x);
    ++x;
    cdf += p;
  }
  return x;
}

// Inverse CDF on lo..hi using masses relative to the mode, visited in the
// order mode, mode+1, mode-1, mode+2, ... Used when the mass at lo underflows.
// Masses below 1e-20 of the modal mass are dropped; together they sit far
// below the 2^-53 resolution of u.
template <class Ratio>
std::int64_t walk_from_mode(std::int64_t lo, std::int64_t hi, std::int64_t mode, Ratio ratio, double u) {
  constexpr double cut = 1e-20;
  std::int64_t a = mode, b = mode;
  double total = 1.0;
  for (double w = 1.0; a > lo;) {
    w /= ratio(a - 1);
    if (!(w > cut)) break;
    total += w;
    --a;
  }
  for (double w = 1.0; b < hi;) {
    w *= ratio(b);
    if (!(w > cut)) break;
    total += w;
    ++b;
  }
  const double target = u * total;
  double cdf = 1.0;
  if (target < cdf) return mode;
  double wl = 1.0, wr = 1.0;
  std::int64_t l = mode, r = mode;
  while (l > a || r < b) {
    if (r < b) {
      wr *= ratio(r);
      ++r;
      cdf += wr;
      if (target < cdf) return r;
    }
    if (l > a) {
      wl /= ratio(l - 1);
      --l;
      cdf += wl;
      if (target < cdf) return l;
    }
  }
  return mode;  // only reachable through rounding in the final ulp
}

// Hypergeometric with successes <= total/2 and draws <= total/2, so the
// support starts at 0.
inline std::int64_t hypergeometric_canonical(std::int64_t successes, std::int64_t total,
                                             std::int64_t draws, double u) {
  const std::int64_t hi = std::min(successes, draws);
  if (hi == 0) return 0;
  const double k = static_cast<double>(successes);
  const double n = static_cast<double>(draws);
  const double tail = static_cast<double>(total - successes - draws);  // failures - draws >= 0
  double p0;
  if (draws <= 16) {
    double num = 1.0, den = 1.0;
    const double failures = static_cast<double>(total - successes);
    const double all = static_cast<double>(total);
    for (std::int64_t i = 0; i < draws; ++i) {
      num *= failures - static_cast<double>(i);
      den *= all - static_cast<double>(i);
    }
    p0 = num / den;
  } else {
    p0 = std::exp(log_choose(total - successes, draws) - log_choose(total, draws));
  }
  auto ratio = [=](std::int64_t x) {
    const double xd = static_cast<double>(x);
    return (k - xd) * (n - xd) / ((xd + 1.0) * (tail + xd + 1.0));
  };
  if (p0 > kWalkFloor) return walk_from_bottom(0, hi, p0, ratio, u);
  const auto mode = std::min(hi, (draws + 1) * (successes + 1) / (total + 2));
  return walk_from_mode(0, hi, mode, ratio, u);
}

// Binomial with p <= 1/2.
inline std::int64_t binomial_canonical(std::int64_t trials, double p, double u) {
  if (trials == 0 || p <= 0.0) return 0;
  const double p0 = std::exp(static_cast<double>(trials) * std::log1p(-p));
  const double odds = p / (1.0 - p);
  auto ratio = [=](std::int64_t x) {
    return static_cast<double>(trials - x) / static_cast<double>(x + 1) * odds;
  };
  if (p0 > kWalkFloor) return walk_from_bottom(0, trials, p0, ratio, u);
  const auto mode = std::min(trials, static_cast<std::int64_t>((trials + 1) * p));
  return walk_from_mode(0, trials, mode, ratio, u);
}

inline void check_probability_vector(std::span<const double> p) {
  if (p.empty()) throw InvalidArgument("probability vector is empty");
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) throw InvalidArgument("probability vector has a negative or NaN entry");
    sum += v;
  }
  if (std::abs(sum - 1.0) > kProbabilitySumTolerance)
    throw InvalidArgument("probabilities sum to " + std::to_string(sum) + ", expected 1");
}

inline bool is_integer_value(double v) { return std::isfinite(v) && std::floor(v) == v; }

}  // namespace detail

// ---------------------------------------------------------------------------
// Univariate and multivariate kernels

inline std::int64_t sample_hypergeometric(std::int64_t successes, std::int64_t total,
                                          std::int64_t draws, Rng& rng) {
  if (total < 0 || successes < 0 || successes > total || draws < 0 || draws > total)
    throw InvalidArgument("hypergeometric arguments out of range: successes=" +
                          std::to_string(successes) + " total=" + std::to_string(total) +
                          " draws=" + std::to_string(draws));
  if (draws == 0 || successes == 0) return 0;
  if (successes == total) return draws;
  if (draws == total) return successes;

  // Reduce to successes, draws <= total/2 by the two reflections of the table.
  bool undrawn = false;
  bool count_failures = false;
  std::int64_t k = successes;
  std::int64_t n = draws;
  if (2 * n > total) {
    n = total - n;
    undrawn = true;
  }
  if (2 * k > total) {
    k = total - k;
    count_failures = true;
  }
  std::int64_t x = detail::hypergeometric_canonical(k, total, n, rng.uniform());
  if (count_failures) x = n - x;
  if (undrawn) x = successes - x;
  return x;
}

// Sequential conditioning: x_1 ~ Hyper(H_1, S, draws), then recurse on the rest.
inline void sample_multivariate_hypergeometric(std::span<const std::int64_t> counts,
                                               std::int64_t draws, Rng& rng,
                                               std::span<std::int64_t> out) {
  if (out.size() != counts.size()) throw InvalidArgument("output size does not match colors");
  std::int64_t remaining_total = 0;
  for (auto h : counts) {
    if (h < 0) throw InvalidArgument("negative ball count");
    remaining_total += h;
  }
  if (draws < 0 || draws > remaining_total)
    throw InvalidArgument("cannot draw " + std::to_string(draws) + " balls from " +
                          std::to_string(remaining_total));
  std::int64_t remaining_draws = draws;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    if (k + 1 == counts.size()) {
      out[k] = remaining_draws;
      break;
    }
    const auto x = sample_hypergeometric(counts[k], remaining_total, remaining_draws, rng);
    out[k] = x;
    remaining_draws -= x;
    remaining_total -= counts[k];
  }
}

inline CountVector sample_multivariate_hypergeometric(std::span<const std::int64_t> counts,
                                                      std::int64_t draws, Rng& rng) {
  CountVector out(counts.size());
  sample_multivariate_hypergeometric(counts, draws, rng, out);
  return out;
}

inline double pmf_multivariate_hypergeometric(std::span<const std::int64_t> counts,
                                              std::int64_t draws, std::span<const std::int64_t> x) {
  if (x.size() != counts.size()) return 0.0;
  std::int64_t total = 0;
  std::int64_t drawn = 0;
  double log_p = 0.0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    if (x[k] < 0 || x[k] > counts[k]) return 0.0;
    total += counts[k];
    drawn += x[k];
    log_p += detail::log_choose(counts[k], x[k]);
  }
  if (drawn != draws || draws > total) return 0.0;
  return std::exp(log_p - detail::log_choose(total, draws));
}

inline std::int64_t sample_binomial(std::int64_t trials, double p, Rng& rng) {
  if (trials < 0 || !(p >= 0.0 && p <= 1.0)) throw InvalidArgument("binomial arguments out of range");
  if (p > 0.5) return trials - detail::binomial_canonical(trials, 1.0 - p, rng.uniform());
  return detail::binomial_canonical(trials, p, rng.uniform());
}

// Sequential conditional binomials.
inline void sample_multinomial(std::span<const double> p, std::int64_t draws, Rng& rng,
                               std::span<std::int64_t> out) {
  detail::check_probability_vector(p);
  if (out.size() != p.size()) throw InvalidArgument("output size does not match colors");
  if (draws < 0) throw InvalidArgument("negative draw count");
  std::int64_t remaining = draws;
  double remaining_mass = 1.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (k + 1 == p.size()) {
      out[k] = remaining;
      break;
    }
    if (remaining == 0) {
      out[k] = 0;
      continue;
    }
    double conditional = remaining_mass > 0.0 ? p[k] / remaining_mass : 1.0;
    conditional = std::clamp(conditional, 0.0, 1.0);
    const auto x = conditional == 0.0 ? 0 : sample_binomial(remaining, conditional, rng);
    out[k] = x;
    remaining -= x;
    remaining_mass -= p[k];
  }
}

inline CountVector sample_multinomial(std::span<const double> p, std::int64_t draws, Rng& rng) {
  CountVector out(p.size());
  sample_multinomial(p, draws, rng, out);
  return out;
}

inline double pmf_multinomial(std::span<const double> p, std::int64_t draws,
                              std::span<const std::int64_t> x) {
  if (x.size() != p.size()) return 0.0;
  std::int64_t drawn = 0;
  double log_p = std::lgamma(static_cast<double>(draws) + 1.0);
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (x[k] < 0) return 0.0;
    drawn += x[k];
    if (x[k] == 0) continue;
    if (p[k] <= 0.0) return 0.0;
    log_p += static_cast<double>(x[k]) * std::log(p[k]) - std::lgamma(static_cast<double>(x[k]) + 1.0);
  }
  if (drawn != draws) return 0.0;
  return std::exp(log_p);
}

inline std::int64_t sample_poisson(double mean, Rng& rng) {
  if (!(mean >= 0.0) || !std::isfinite(mean)) throw InvalidArgument("Poisson mean must be finite and >= 0");
  if (mean == 0.0) return 0;
  const double u = rng.uniform();
  const auto hi = static_cast<std::int64_t>(mean + 60.0 * std::sqrt(mean) + 100.0);
  auto ratio = [=](std::int64_t x) { return mean / static_cast<double>(x + 1); };
  const double p0 = std::exp(-mean);
  if (p0 > detail::kWalkFloor) return detail::walk_from_bottom(0, hi, p0, ratio, u);
  return detail::walk_from_mode(0, hi, static_cast<std::int64_t>(mean), ratio, u);
}

inline double poisson_pmf(double mean, std::int64_t y) {
  if (y < 0) return 0.0;
  if (mean == 0.0) return y == 0 ? 1.0 : 0.0;
  return std::exp(static_cast<double>(y) * std::log(mean) - mean -
                  std::lgamma(static_cast<double>(y) + 1.0));
}

// ---------------------------------------------------------------------------
// Laws

// Finite discrete law on real values.
struct DiscreteLaw {
  std::vector<double> values;
  std::vector<double> probabilities;

  void validate(const std::string& what = "discrete law") const {
    if (values.empty() || values.size() != probabilities.size())
      throw InvalidArgument(what + ": values and probabilities must be non-empty and equal length");
    try {
      detail::check_probability_vector(probabilities);
    } catch (const InvalidArgument& e) {
      throw InvalidArgument(what + ": " + e.what());
    }
  }

  double sample(Rng& rng) const {
    const double u = rng.uniform();
    double cdf = 0.0;
    for (std::size_t i = 0; i + 1 < values.size(); ++i) {
      cdf += probabilities[i];
      if (u < cdf) return values[i];
    }
    return values.back();
  }

  double mean() const {
    return std::inner_product(values.begin(), values.end(), probabilities.begin(), 0.0);
  }
};

// Law of N_{n+1}: values in `support`, each at most `cap` (C_1).
struct DrawCountLaw {
  std::vector<std::int64_t> support;
  std::vector<double> probabilities;
  std::int64_t cap = 0;

  static DrawCountLaw point_mass(std::int64_t n) { return {{n}, {1.0}, n}; }

  void validate() const {
    if (support.empty() || support.size() != probabilities.size())
      throw InvalidArgument("draw-count law: support and probabilities must be non-empty and equal length");
    for (auto v : support)
      if (v < 1) throw InvalidArgument("draw-count law: support values must be >= 1");
    if (cap < 1) throw InvalidArgument("draw-count law: cap must be >= 1");
    if (*std::max_element(support.begin(), support.end()) > cap)
      throw InvalidArgument("draw-count law: support exceeds cap " + std::to_string(cap));
    try {
      detail::check_probability_vector(probabilities);
    } catch (const InvalidArgument& e) {
      throw InvalidArgument(std::string("draw-count law: ") + e.what());
    }
  }

  double mean() const {
    double m = 0.0;
    for (std::size_t i = 0; i < support.size(); ++i) m += static_cast<double>(support[i]) * probabilities[i];
    return m;
  }
  double second_moment() const {
    double q = 0.0;
    for (std::size_t i = 0; i < support.size(); ++i)
      q += static_cast<double>(support[i] * support[i]) * probabilities[i];
    return q;
  }
};

// Values above floor(S_n) collapse onto floor(S_n), keeping their mass.
inline std::int64_t sample_draw_count(const DrawCountLaw& law, double total_balls, Rng& rng) {
  const auto limit = static_cast<std::int64_t>(std::floor(total_balls));
  if (limit < 1) throw InvalidArgument("draw-count law has empty support: urn holds fewer than one ball");
  std::int64_t v = law.support.back();
  if (law.support.size() > 1) {
    const double u = rng.uniform();
    double cdf = 0.0;
    for (std::size_t i = 0; i < law.support.size(); ++i) {
      cdf += law.probabilities[i];
      if (u < cdf) {
        v = law.support[i];
        break;
      }
    }
  }
  return std::min({v, law.cap, limit});
}

struct PoissonLaw {
  double mean = 0.0;
};

// Base law for a shared count Y.
using CountLaw = std::variant<DiscreteLaw, PoissonLaw>;

// A_k drawn independently per color.
struct IndependentDiscrete {
  std::vector<DiscreteLaw> marginals;
};

// A_k = offset_k + scale_k * Y_k with Y ~ Multinomial(trials, probabilities).
struct ShiftedMultinomial {
  std::int64_t trials = 0;
  std::vector<double> probabilities;
  std::vector<double> offsets;
  std::vector<double> scales;
};

// A_k = offset_k + scale_k * Y with one Y shared by all colors, optionally
// clamped from below at 1.
struct ShiftedCommonCount {
  CountLaw base;
  std::vector<double> offsets;
  std::vector<double> scales;
  bool clamp_at_one = false;
};

struct PointMass {
  std::vector<double> values;
};

using ReplacementLaw = std::variant<IndependentDiscrete, ShiftedMultinomial, ShiftedCommonCount, PointMass>;

// Exact first and second moments of a replacement law. q_cross(k, k) = q_k.
struct LawMoments {
  std::vector<double> m;
  std::vector<double> q;
  Matrix q_cross;

  std::size_t dimension() const { return m.size(); }
  double variance(std::size_t k) const { return q[k] - m[k] * m[k]; }
  double covariance(std::size_t k, std::size_t s) const { return q_cross(k, s) - m[k] * m[s]; }
};

namespace detail {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

// Calls f(y, P(Y = y)) over the support of a count law; Poisson tails beyond
// mean + 40 sd + 60 carry negligible mass and are skipped.
template <class F>
void for_each_count(const CountLaw& law, F&& f) {
  std::visit(overloaded{[&](const DiscreteLaw& l) {
                          for (std::size_t i = 0; i < l.values.size(); ++i) f(l.values[i], l.probabilities[i]);
                        },
                        [&](const PoissonLaw& l) {
                          const auto hi = static_cast<std::int64_t>(l.mean + 40.0 * std::sqrt(l.mean) + 60.0);
                          for (std::int64_t y = 0; y <= hi; ++y)
                            f(static_cast<double>(y), poisson_pmf(l.mean, y));
                        }},
             law);
}

inline double common_count_value(const ShiftedCommonCount& law, std::size_t k, double y) {
  const double a = law.offsets[k] + law.scales[k] * y;
  return law.clamp_at_one ? std::max(1.0, a) : a;
}

}  // namespace detail

inline std::size_t dimension(const ReplacementLaw& law) {
  return std::visit(detail::overloaded{[](const IndependentDiscrete& l) { return l.marginals.size(); },
                                       [](const ShiftedMultinomial& l) { return l.probabilities.size(); },
                                       [](const ShiftedCommonCount& l) { return l.offsets.size(); },
                                       [](const PointMass& l) { return l.values.size(); }},
                    law);
}

// Throws InvalidArgument naming the violated constraint. Every realizable
// component must lie in [1, inf).
inline void validate(const ReplacementLaw& law) {
  const auto support_error = [](std::size_t k, double v) {
    return InvalidArgument("replacement support violation: A must be >= 1 (color " + std::to_string(k + 1) +
                           " can take " + std::to_string(v) + ")");
  };
  std::visit(
      detail::overloaded{
          [&](const IndependentDiscrete& l) {
            if (l.marginals.empty()) throw InvalidArgument("replacement law has no colors");
            for (std::size_t k = 0; k < l.marginals.size(); ++k) {
              l.marginals[k].validate("replacement marginal for color " + std::to_string(k + 1));
              for (std::size_t i = 0; i < l.marginals[k].values.size(); ++i)
                if (l.marginals[k].probabilities[i] > 0.0 && !(l.marginals[k].values[i] >= 1.0))
                  throw support_error(k, l.marginals[k].values[i]);
            }
          },
          [&](const ShiftedMultinomial& l) {
            const auto d = l.probabilities.size();
            if (d == 0 || l.offsets.size() != d || l.scales.size() != d)
              throw InvalidArgument("shifted multinomial: probabilities, offsets and scales must have equal length");
            if (l.trials < 0) throw InvalidArgument("shifted multinomial: trials must be >= 0");
            detail::check_probability_vector(l.probabilities);
            for (std::size_t k = 0; k < d; ++k) {
              const double lo = l.offsets[k] + std::min(0.0, l.scales[k] * static_cast<double>(l.trials));
              if (!(lo >= 1.0)) throw support_error(k, lo);
            }
          },
          [&](const ShiftedCommonCount& l) {
            const auto d = l.offsets.size();
            if (d == 0 || l.scales.size() != d)
              throw InvalidArgument("shifted common count: offsets and scales must have equal length");
            std::visit(detail::overloaded{[](const DiscreteLaw& b) { b.validate("common count base law"); },
                                          [](const PoissonLaw& b) {
                                            if (!(b.mean > 0.0) || !std::isfinite(b.mean))
                                              throw InvalidArgument("Poisson base mean must be > 0");
                                          }},
                       l.base);
            if (l.clamp_at_one) return;
            for (std::size_t k = 0; k < d; ++k) {
              if (std::holds_alternative<PoissonLaw>(l.base) && l.scales[k] < 0.0)
                throw InvalidArgument("replacement support violation: A must be >= 1 (color " +
                                      std::to_string(k + 1) + " is unbounded below)");
              detail::for_each_count(l.base, [&](double y, double p) {
                const double a = l.offsets[k] + l.scales[k] * y;
                if (p > 0.0 && !(a >= 1.0)) throw support_error(k, a);
              });
            }
          },
          [&](const PointMass& l) {
            if (l.values.empty()) throw InvalidArgument("replacement law has no colors");
            for (std::size_t k = 0; k < l.values.size(); ++k)
              if (!(l.values[k] >= 1.0)) throw support_error(k, l.values[k]);
          }},
      law);
}

// True when every realizable value is an integer, which drawing without
// replacement requires.
inline bool is_integer_valued(const ReplacementLaw& law) {
  using detail::is_integer_value;
  return std::visit(
      detail::overloaded{
          [](const IndependentDiscrete& l) {
            for (const auto& m : l.marginals)
              for (double v : m.values)
                if (!is_integer_value(v)) return false;
            return true;
          },
          [](const ShiftedMultinomial& l) {
            return std::all_of(l.offsets.begin(), l.offsets.end(), is_integer_value) &&
                   std::all_of(l.scales.begin(), l.scales.end(), is_integer_value);
          },
          [](const ShiftedCommonCount& l) {
            bool ok = true;
            for (std::size_t k = 0; k < l.offsets.size(); ++k)
              detail::for_each_count(l.base, [&](double y, double p) {
                if (p > 0.0 && !is_integer_value(detail::common_count_value(l, k, y))) ok = false;
              });
            return ok;
          },
          [](const PointMass& l) { return std::all_of(l.values.begin(), l.values.end(), is_integer_value); }},
      law);
}

// Probability that the lower clamp changes A_k, per color (zeros when the
// law has no clamp).
inline std::vector<double> clamp_probabilities(const ReplacementLaw& law) {
  std::vector<double> out(dimension(law), 0.0);
  if (const auto* l = std::get_if<ShiftedCommonCount>(&law); l && l->clamp_at_one) {
    for (std::size_t k = 0; k < out.size(); ++k)
      detail::for_each_count(l->base, [&](double y, double p) {
        if (l->offsets[k] + l->scales[k] * y < 1.0) out[k] += p;
      });
  }
  return out;
}

inline void sample_replacement(const ReplacementLaw& law, Rng& rng, std::span<double> out) {
  std::visit(detail::overloaded{
                 [&](const IndependentDiscrete& l) {
                   for (std::size_t k = 0; k < l.marginals.size(); ++k) out[k] = l.marginals[k].sample(rng);
                 },
                 [&](const ShiftedMultinomial& l) {
                   CountVector y(l.probabilities.size());
                   sample_multinomial(l.probabilities, l.trials, rng, y);
                   for (std::size_t k = 0; k < y.size(); ++k)
                     out[k] = l.offsets[k] + l.scales[k] * static_cast<double>(y[k]);
                 },
                 [&](const ShiftedCommonCount& l) {
                   const double y = std::visit(
                       detail::overloaded{[&](const DiscreteLaw& b) { return b.sample(rng); },
                                          [&](const PoissonLaw& b) {
                                            return static_cast<double>(sample_poisson(b.mean, rng));
                                          }},
                       l.base);
                   for (std::size_t k = 0; k < l.offsets.size(); ++k) out[k] = detail::common_count_value(l, k, y);
                 },
                 [&](const PointMass& l) { std::copy(l.values.begin(), l.values.end(), out.begin()); }},
             law);
}

inline std::vector<double> sample_replacement(const ReplacementLaw& law, Rng& rng) {
  std::vector<double> out(dimension(law));
  sample_replacement(law, rng, out);
  return out;
}

inline LawMoments law_moments(const ReplacementLaw& law) {
  const auto d = dimension(law);
  LawMoments mom{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0), Matrix::square(d)};
  std::visit(detail::overloaded{
                 [&](const IndependentDiscrete& l) {
                   for (std::size_t k = 0; k < d; ++k) {
                     const auto& mk = l.marginals[k];
                     for (std::size_t i = 0; i < mk.values.size(); ++i) {
                       mom.m[k] += mk.probabilities[i] * mk.values[i];
                       mom.q[k] += mk.probabilities[i] * mk.values[i] * mk.values[i];
                     }
                   }
                   for (std::size_t k = 0; k < d; ++k)
                     for (std::size_t s = 0; s < d; ++s) mom.q_cross(k, s) = k == s ? mom.q[k] : mom.m[k] * mom.m[s];
                 },
                 [&](const ShiftedMultinomial& l) {
                   const double n = static_cast<double>(l.trials);
                   for (std::size_t k = 0; k < d; ++k)
                     mom.m[k] = l.offsets[k] + l.scales[k] * n * l.probabilities[k];
                   for (std::size_t k = 0; k < d; ++k)
                     for (std::size_t s = 0; s < d; ++s) {
                       const double cov_y = k == s ? n * l.probabilities[k] * (1.0 - l.probabilities[k])
                                                   : -n * l.probabilities[k] * l.probabilities[s];
                       mom.q_cross(k, s) = l.scales[k] * l.scales[s] * cov_y + mom.m[k] * mom.m[s];
                     }
                   for (std::size_t k = 0; k < d; ++k) mom.q[k] = mom.q_cross(k, k);
                 },
                 [&](const ShiftedCommonCount& l) {
                   detail::for_each_count(l.base, [&](double y, double p) {
                     for (std::size_t k = 0; k < d; ++k) {
                       const double ak = detail::common_count_value(l, k, y);
                       mom.m[k] += p * ak;
                       for (std::size_t s = 0; s < d; ++s)
                         mom.q_cross(k, s) += p * ak * detail::common_count_value(l, s, y);
                     }
                   });
                   for (std::size_t k = 0; k < d; ++k) mom.q[k] = mom.q_cross(k, k);
                 },
                 [&](const PointMass& l) {
                   for (std::size_t k = 0; k < d; ++k) {
                     mom.m[k] = l.values[k];
                     mom.q[k] = l.values[k] * l.values[k];
                     for (std::size_t s = 0; s < d; ++s) mom.q_cross(k, s) = l.values[k] * l.values[s];
                   }
                 }},
             law);
  return mom;
}

// Number of colors whose mean ties the largest (ties within `tolerance`).
inline std::size_t maximal_count(const std::vector<double>& means, double tolerance = 1e-12) {
  if (means.empty()) return 0;
  const double top = *std::max_element(means.begin(), means.end());
  return static_cast<std::size_t>(
      std::count_if(means.begin(), means.end(), [&](double m) { return top - m <= tolerance; }));
}

}  // namespace mmru
