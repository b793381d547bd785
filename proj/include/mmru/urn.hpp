#pragma once

// The multicolored multiple-drawing randomly reinforced urn.
//
// Each stage draws N balls (with or without replacement), samples one
// replacement vector A independent of the past, and adds A_k balls of color
// k for every drawn ball of color k. The state carries every running sum the
// estimators read, so estimates at stage n cost O(d^2) regardless of n.

#include <cmath>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "mmru/errors.hpp"
#include "mmru/format.hpp"
#include "mmru/matrix.hpp"
#include "mmru/rng.hpp"
#include "mmru/sampling.hpp"

namespace mmru {

enum class DrawMode { WithoutReplacement, WithReplacement };

enum class Summation { Plain, Compensated };

inline std::string to_string(DrawMode mode) {
  return mode == DrawMode::WithoutReplacement ? "without_replacement" : "with_replacement";
}

struct UrnConfig {
  std::vector<double> initial;  // H_0
  DrawMode draw_mode = DrawMode::WithoutReplacement;
  DrawCountLaw count_law = DrawCountLaw::point_mass(1);
  ReplacementLaw replacement_law = PointMass{};
  // Compensated (Neumaier) accumulation for the real-valued sums; worth
  // enabling past ~1e7 stages.
  Summation summation = Summation::Plain;

  std::size_t dimension() const { return initial.size(); }

  void validate() const {
    const auto d = initial.size();
    if (d == 0) throw InvalidArgument("urn needs at least one color");
    if (dimension_of_law() != d)
      throw InvalidArgument("replacement law has " + std::to_string(dimension_of_law()) + " colors, urn has " +
                            std::to_string(d));
    double total = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      if (!(initial[k] >= 0.0) || !std::isfinite(initial[k]))
        throw InvalidArgument("initial count for color " + std::to_string(k + 1) + " must be finite and >= 0");
      total += initial[k];
    }
    if (!(total >= 1.0)) throw InvalidArgument("initial urn must hold at least one ball");
    count_law.validate();
    mmru::validate(replacement_law);
    if (draw_mode == DrawMode::WithoutReplacement) {
      for (double h : initial)
        if (!detail::is_integer_value(h))
          throw InvalidArgument("drawing without replacement needs integer initial counts");
      if (!is_integer_valued(replacement_law))
        throw InvalidArgument("drawing without replacement needs an integer-valued replacement law");
    }
  }

 private:
  std::size_t dimension_of_law() const { return mmru::dimension(replacement_law); }
};

// Sums over stages j = 1..n. Off-diagonal matrices are indexed (k, s), k != s;
// their diagonals stay zero.
struct RunningSums {
  std::int64_t sum_N = 0;           // sum N_j
  std::int64_t sum_N2 = 0;          // sum N_j^2
  std::vector<double> sum_ratio;    // sum X_jk / N_j
  std::vector<double> sum_AX;       // sum A_jk X_jk
  std::vector<double> sum_A2X;      // sum A_jk^2 X_jk
  Matrix sum_AAX;                   // sum A_jk A_js X_jk
  Matrix sum_XX;                    // sum X_jk X_js
  Matrix sum_AAXX;                  // sum A_jk A_js X_jk X_js
  std::int64_t total_draws = 0;

  explicit RunningSums(std::size_t d = 0)
      : sum_ratio(d, 0.0), sum_AX(d, 0.0), sum_A2X(d, 0.0), sum_AAX(Matrix::square(d)),
        sum_XX(Matrix::square(d)), sum_AAXX(Matrix::square(d)) {}

  double weighted_additions() const {
    double s = 0.0;
    for (double v : sum_AX) s += v;
    return s;
  }
};

struct UrnState {
  std::int64_t n = 0;
  std::vector<double> H;
  double S = 0.0;
  double S0 = 0.0;
  CountVector N_A;  // cumulative draws per color
  RunningSums sums;

  std::size_t dimension() const { return H.size(); }

  // Neumaier carries, only touched under Summation::Compensated.
  struct Carries {
    std::vector<double> H, ratio, AX, A2X;
    Matrix AAX, AAXX;
    double S = 0.0;
  } carry;
};

struct StageRecord {
  std::int64_t n = 0;
  std::int64_t N = 0;
  CountVector X;
  std::vector<double> A;
  std::vector<double> Z_after;
};

inline std::vector<double> normalized_composition(const UrnState& state) {
  if (!(state.S > 0.0)) throw InvalidArgument("urn is empty");
  std::vector<double> z(state.H.size());
  for (std::size_t k = 0; k < z.size(); ++k) z[k] = state.H[k] / state.S;
  return z;
}

inline UrnState init(const UrnConfig& config) {
  config.validate();
  const auto d = config.dimension();
  UrnState st;
  st.H = config.initial;
  st.S = 0.0;
  for (double h : st.H) st.S += h;
  st.S0 = st.S;
  st.N_A.assign(d, 0);
  st.sums = RunningSums(d);
  st.carry.H.assign(d, 0.0);
  st.carry.ratio.assign(d, 0.0);
  st.carry.AX.assign(d, 0.0);
  st.carry.A2X.assign(d, 0.0);
  st.carry.AAX = Matrix::square(d);
  st.carry.AAXX = Matrix::square(d);
  return st;
}

namespace detail {

// Neumaier summation step.
inline void compensated_add(double& sum, double& carry, double x) {
  const double t = sum + x;
  if (std::abs(sum) >= std::abs(x))
    carry += (sum - t) + x;
  else
    carry += (x - t) + sum;
  sum = t;
}

}  // namespace detail

class Urn {
 public:
  explicit Urn(UrnConfig config) : config_(std::move(config)), state_(init(config_)) {
    const auto d = config_.dimension();
    counts_.resize(d);
    x_.resize(d);
    a_.resize(d);
    z_.resize(d);
  }

  Urn(UrnConfig config, UrnState state) : Urn(std::move(config)) {
    if (state.dimension() != config_.dimension()) throw InvalidArgument("state dimension does not match config");
    state_ = std::move(state);
  }

  const UrnConfig& config() const { return config_; }
  const UrnState& state() const { return state_; }

  // One reinforcement stage. Draw order per stage: N, then X, then A.
  void step(Rng& rng, StageRecord* record = nullptr) {
    const auto d = config_.dimension();
    const bool compensated = config_.summation == Summation::Compensated;
    const auto N = sample_draw_count(config_.count_law, state_.S, rng);

    if (config_.draw_mode == DrawMode::WithoutReplacement) {
      for (std::size_t k = 0; k < d; ++k) {
        const double h = state_.H[k];
        if (!detail::is_integer_value(h))
          throw InternalConsistencyError("non-integer ball count under drawing without replacement");
        counts_[k] = static_cast<std::int64_t>(h);
      }
      sample_multivariate_hypergeometric(counts_, N, rng, x_);
    } else {
      for (std::size_t k = 0; k < d; ++k) z_[k] = state_.H[k] / state_.S;
      sample_multinomial(z_, N, rng, x_);
    }
    sample_replacement(config_.replacement_law, rng, a_);

    auto add = [&](double& sum, double& carry, double v) {
      if (compensated)
        detail::compensated_add(sum, carry, v);
      else
        sum += v;
    };

    auto& sums = state_.sums;
    const double inv_n = 1.0 / static_cast<double>(N);
    for (std::size_t k = 0; k < d; ++k) {
      const double xk = static_cast<double>(x_[k]);
      const double ak = a_[k];
      const double added = ak * xk;
      add(state_.H[k], state_.carry.H[k], added);
      add(state_.S, state_.carry.S, added);
      state_.N_A[k] += x_[k];
      add(sums.sum_ratio[k], state_.carry.ratio[k], xk * inv_n);
      add(sums.sum_AX[k], state_.carry.AX[k], added);
      add(sums.sum_A2X[k], state_.carry.A2X[k], ak * added);
      for (std::size_t s = 0; s < d; ++s) {
        if (s == k) continue;
        const double xs = static_cast<double>(x_[s]);
        add(sums.sum_AAX(k, s), state_.carry.AAX(k, s), ak * a_[s] * xk);
        sums.sum_XX(k, s) += xk * xs;
        add(sums.sum_AAXX(k, s), state_.carry.AAXX(k, s), ak * a_[s] * xk * xs);
      }
    }
    sums.sum_N += N;
    sums.sum_N2 += N * N;
    sums.total_draws += N;
    ++state_.n;

    if (record) {
      record->n = state_.n;
      record->N = N;
      record->X.assign(x_.begin(), x_.end());
      record->A.assign(a_.begin(), a_.end());
      record->Z_after = normalized_composition(state_);
    }
  }

  // Applies `steps` stages; keeps a record for every stage whose index is a
  // multiple of record_every (no records when record_every <= 0).
  std::vector<StageRecord> run(std::int64_t steps, Rng& rng, std::int64_t record_every = 0) {
    if (steps < 0) throw InvalidArgument("steps must be >= 0");
    std::vector<StageRecord> records;
    StageRecord rec;
    for (std::int64_t i = 0; i < steps; ++i) {
      const bool keep = record_every > 0 && (state_.n + 1) % record_every == 0;
      step(rng, keep ? &rec : nullptr);
      if (keep) records.push_back(rec);
    }
    return records;
  }

  // Values of the compensated sums with their carries folded in.
  UrnState resolved_state() const {
    UrnState st = state_;
    if (config_.summation != Summation::Compensated) return st;
    const auto d = st.dimension();
    st.S += st.carry.S;
    for (std::size_t k = 0; k < d; ++k) {
      st.H[k] += st.carry.H[k];
      st.sums.sum_ratio[k] += st.carry.ratio[k];
      st.sums.sum_AX[k] += st.carry.AX[k];
      st.sums.sum_A2X[k] += st.carry.A2X[k];
      for (std::size_t s = 0; s < d; ++s) {
        st.sums.sum_AAX(k, s) += st.carry.AAX(k, s);
        st.sums.sum_AAXX(k, s) += st.carry.AAXX(k, s);
      }
    }
    st.carry = UrnState::Carries{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0),
                                 std::vector<double>(d, 0.0), std::vector<double>(d, 0.0),
                                 Matrix::square(d), Matrix::square(d), 0.0};
    return st;
  }

 private:
  UrnConfig config_;
  UrnState state_;
  CountVector counts_;
  CountVector x_;
  std::vector<double> a_;
  std::vector<double> z_;
};

// Trajectory CSV: n,N,X_1..X_d,A_1..A_d,Z_1..Z_d with 12 significant digits.
inline void write_trajectory_csv(std::ostream& out, std::size_t d, std::span<const StageRecord> records) {
  out << "n,N";
  for (const char* prefix : {"X_", "A_", "Z_"})
    for (std::size_t k = 1; k <= d; ++k) out << ',' << prefix << k;
  out << '\n';
  for (const auto& r : records) {
    out << r.n << ',' << r.N;
    for (auto x : r.X) out << ',' << x;
    for (double a : r.A) out << ',' << format_number(a);
    for (double z : r.Z_after) out << ',' << format_number(z);
    out << '\n';
  }
}

}  // namespace mmru
