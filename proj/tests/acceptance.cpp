// End-to-end acceptance checks. Prints one [PASS]/[FAIL] line per criterion
// and exits non-zero if any criterion fails.
//
//   acceptance            run every criterion
//   acceptance 4 6 10     run a subset

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mmru/mmru.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace mmru;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << x;
  return os.str();
}

// Upper alpha-quantile of Binomial(n, p): smallest c with P(X > c) <= alpha.
std::int64_t binomial_upper(std::int64_t n, double p, double alpha) {
  double pmf = std::pow(1.0 - p, static_cast<double>(n));
  double cdf = pmf;
  std::int64_t c = 0;
  while (1.0 - cdf > alpha && c < n) {
    pmf *= static_cast<double>(n - c) / static_cast<double>(c + 1) * p / (1.0 - p);
    ++c;
    cdf += pmf;
  }
  return c;
}

// ---------------------------------------------------------------------------
// 1. Sampler exactness

constexpr std::int64_t kMaxBalls = 12;
constexpr std::size_t kMaxColors = 4;
constexpr std::int64_t kGofSamples = 1'000'000;
constexpr double kGofAlpha = 0.01;
constexpr double kPmfSumTolerance = 1e-10;
constexpr double kSamplerSeconds = 120.0;

Outcome sampler_exactness() {
  const auto t0 = Clock::now();
  std::int64_t cases = 0, gof_cases = 0, rejections = 0;
  double min_p = 1.0, worst_sum = 0.0, worst_pmf = 0.0;
  bool forced_ok = true;

  for (std::size_t d = 1; d <= kMaxColors; ++d) {
    CountVector h(d, 1);
    std::function<void(std::size_t, std::int64_t)> rec = [&](std::size_t k, std::int64_t used) {
      if (k < d) {
        for (std::int64_t v = 1; used + v + static_cast<std::int64_t>(d - k - 1) <= kMaxBalls; ++v) {
          h[k] = v;
          rec(k + 1, used + v);
        }
        return;
      }
      const std::int64_t total = used;
      std::vector<std::int64_t> stride(d);
      std::int64_t cells = 1;
      for (std::size_t i = 0; i < d; ++i) {
        stride[i] = cells;
        cells *= h[i] + 1;
      }
      for (std::int64_t draws = 0; draws <= total; ++draws) {
        ++cases;
        std::vector<double> p(static_cast<std::size_t>(cells), 0.0);
        double lib_sum = 0.0;
        oracle::for_each_composition(h, draws, [&](const CountVector& x) {
          std::int64_t idx = 0;
          for (std::size_t i = 0; i < d; ++i) idx += x[i] * stride[i];
          p[static_cast<std::size_t>(idx)] = oracle::mvh_pmf(h, draws, x);
          const double lib = pmf_multivariate_hypergeometric(h, draws, x);
          lib_sum += lib;
          worst_pmf = std::max(worst_pmf, std::abs(lib - p[static_cast<std::size_t>(idx)]));
        });
        worst_sum = std::max(worst_sum, std::abs(lib_sum - 1.0));

        std::vector<std::int64_t> counts(static_cast<std::size_t>(cells), 0);
        Rng rng(20240601, static_cast<std::uint64_t>(cases));
        CountVector x(d);
        for (std::int64_t j = 0; j < kGofSamples; ++j) {
          sample_multivariate_hypergeometric(h, draws, rng, std::span<std::int64_t>(x));
          std::int64_t idx = 0;
          for (std::size_t i = 0; i < d; ++i) idx += x[i] * stride[i];
          ++counts[static_cast<std::size_t>(idx)];
        }
        const auto g = chi_square_gof(counts, p);
        if (g.df == 0) {
          forced_ok = forced_ok && g.p_value == 1.0;  // a single reachable outcome must always be drawn
          continue;
        }
        ++gof_cases;
        min_p = std::min(min_p, g.p_value);
        if (g.p_value < kGofAlpha) ++rejections;
      }
    };
    rec(0, 0);
  }
  const double elapsed = seconds_since(t0);

  // Family-wise reading of "passes at alpha": no case below the Bonferroni
  // level, and per-case rejections within the 0.999 quantile of Bin(K, alpha).
  const double bonferroni = kGofAlpha / static_cast<double>(gof_cases);
  const auto allowed = binomial_upper(gof_cases, kGofAlpha, 1e-3);
  const bool gof_ok = min_p >= bonferroni && rejections <= allowed && forced_ok;
  const bool sum_ok = worst_sum <= kPmfSumTolerance;
  const bool time_ok = elapsed < kSamplerSeconds;
  std::ostringstream os;
  os << cases << " cases (" << gof_cases << " non-degenerate), " << kGofSamples << " samples each; rejections at 0.01: "
     << rejections << " (allowed " << allowed << "), min p " << fmt(min_p) << " vs Bonferroni " << fmt(bonferroni)
     << "; max |sum pmf - 1| " << fmt(worst_sum) << ", max |pmf - oracle| " << fmt(worst_pmf) << "; runtime "
     << fmt(elapsed) << " s (limit " << kSamplerSeconds << " s)" << (gof_ok ? "" : " [GOF FAILED]")
     << (sum_ok ? "" : " [PMF SUM FAILED]") << (time_ok ? "" : " [RUNTIME EXCEEDED]");
  return {gof_ok && sum_ok && time_ok, os.str()};
}

// ---------------------------------------------------------------------------
// 2. Dominated colors vanish and S_n / n settles

constexpr int kSeeds = 100;
constexpr std::int64_t kLongHorizon = 10'000;

Outcome degenerate_limit() {
  const auto t0 = Clock::now();
  bool ok = true;
  std::ostringstream os;
  for (char c : {'a', 'b', 'c', 'd'}) {
    const auto spec = scenarios::composition_case(c, 1);
    const double limit = spec.config.count_law.mean() * *std::max_element(spec.true_moments.m.begin(), spec.true_moments.m.end());
    int good = 0;
    for (int seed = 1; seed <= kSeeds; ++seed) {
      Urn urn(spec.config);
      Rng rng(static_cast<std::uint64_t>(seed), 0);
      urn.run(kLongHorizon, rng);
      const auto& st = urn.state();
      const double z3 = st.H[2] / st.S;
      const double s_over_n = st.S / static_cast<double>(st.n);
      if (z3 < 0.02 && std::abs(s_over_n - limit) <= 0.10 * limit) ++good;
    }
    const double frac = static_cast<double>(good) / kSeeds;
    ok = ok && frac >= 0.95;
    os << spec.name << " " << fmt(frac) << " (S/n -> " << fmt(limit) << "); ";
  }
  const double elapsed = seconds_since(t0);
  ok = ok && elapsed < 300.0;
  os << "need >= 0.95 each; runtime " << fmt(elapsed) << " s (limit 300 s)";
  return {ok, os.str()};
}

// ---------------------------------------------------------------------------
// 3. Exact order of the dominated color

Outcome exact_order() {
  const auto spec = scenarios::composition_case('a', 1);
  const double exponent = 1.0 - spec.true_moments.m[2] / spec.true_moments.m[0];  // 3/4
  int good = 0;
  for (int seed = 1; seed <= kSeeds; ++seed) {
    Urn urn(spec.config);
    Rng rng(static_cast<std::uint64_t>(seed), 0);
    urn.run(5000, rng);
    const double r1 = std::pow(5000.0, exponent) * urn.state().H[2] / urn.state().S;
    urn.run(5000, rng);
    const double r2 = std::pow(10000.0, exponent) * urn.state().H[2] / urn.state().S;
    if (std::abs(r2 - r1) < 0.15 * std::abs(r1)) ++good;
  }
  const double frac = static_cast<double>(good) / kSeeds;
  return {frac >= 0.90, "case-a n^" + fmt(exponent) + " Z_3 stable within 15% between n=5000 and 10000 in " +
                            fmt(frac) + " of seeds (need >= 0.90)"};
}

// ---------------------------------------------------------------------------
// 4 and 5. Estimator consistency and per-arm coverage on case a

struct CaseAReplication {
  MomentEstimates est;
  SymMatrix sigma;
};

std::vector<CaseAReplication> case_a_replications(std::int64_t reps) {
  const auto spec = scenarios::composition_case('a', 1);
  std::vector<CaseAReplication> out;
  out.reserve(static_cast<std::size_t>(reps));
  for (std::int64_t r = 0; r < reps; ++r) {
    Urn urn(spec.config);
    Rng rng(spec.base_seed, static_cast<std::uint64_t>(r));
    urn.run(kLongHorizon, rng);
    auto est = estimate(urn.state());
    auto sigma = build_sigma(est, spec.true_t);
    out.push_back({std::move(est), std::move(sigma)});
  }
  return out;
}

const std::vector<CaseAReplication>& case_a_cache() {
  static const auto reps = case_a_replications(1000);
  return reps;
}

Outcome estimator_consistency() {
  const auto& m = scenarios::composition_case('a', 1).true_moments.m;
  const auto& reps = case_a_cache();
  int good = 0;
  std::vector<int> miss(3, 0);
  for (std::size_t r = 0; r < 500; ++r) {
    const auto& est = reps[r].est;
    bool all = true;
    for (std::size_t k = 0; k < 3; ++k) {
      const double band = 5.0 * std::sqrt(est.sigma2(k)) / std::sqrt(static_cast<double>(est.N_A[k]));
      if (std::abs(est.m(k) - m[k]) > band) {
        all = false;
        ++miss[k];
      }
    }
    good += all;
  }
  const double frac = good / 500.0;
  return {frac >= 0.99, "case-a |m_hat - m| <= 5 sigma_hat / sqrt(N_A) for all arms in " + fmt(frac) +
                            " of 500 replications (need >= 0.99); misses per arm " + std::to_string(miss[0]) + "/" +
                            std::to_string(miss[1]) + "/" + std::to_string(miss[2])};
}

Outcome clt_coverage() {
  const auto t0 = Clock::now();
  const auto spec = scenarios::composition_case('a', 1);
  const auto& m = spec.true_moments.m;
  const auto& reps = case_a_cache();
  std::vector<int> covered(3, 0);
  for (const auto& rep : reps)
    for (std::size_t k = 0; k < 3; ++k) {
      // Sigma_kk / sigma_k^2 is the inflation of a maximal arm; 1 otherwise.
      const double half = 1.959963984540054 * std::sqrt(rep.sigma(k, k)) / std::sqrt(static_cast<double>(rep.est.N_A[k]));
      if (std::abs(rep.est.m(k) - m[k]) <= half) ++covered[k];
    }
  const double n = static_cast<double>(reps.size());
  // The only non-maximal arm of case a is arm 3.
  const double cov = covered[2] / n;
  const double elapsed = seconds_since(t0);
  const bool ok = cov >= 0.92 && cov <= 0.97 && elapsed < 900.0;
  return {ok, "case-a non-maximal arm coverage " + fmt(cov) + " over 1000 replications (need [0.92, 0.97]); sigma_hat_3 = " +
                  fmt(std::sqrt(reps.front().est.sigma2(2))) + "; maximal arms " + fmt(covered[0] / n) + ", " +
                  fmt(covered[1] / n)};
}

// ---------------------------------------------------------------------------
// 6 and 7. Size and power of the equality test

Outcome test_size() {
  auto spec = scenarios::power_member(0);
  spec.horizon = 1000;
  spec.replications = 1000;
  ReplicationOptions opt;
  opt.test_k0 = 3;
  opt.alpha = 0.05;
  const auto s = run_replications(spec, 0, opt);
  std::int64_t errors = 0;
  for (const auto& r : s.results) errors += r.test_error.has_value() || r.error.has_value();
  const double rate = static_cast<double>(s.rejections) / static_cast<double>(spec.replications);
  return {rate >= 0.03 && rate <= 0.07, "equal-arms rejection rate " + fmt(rate) + " at alpha 0.05, R=1000, n=1000 (need [0.03, 0.07]); " +
                                            std::to_string(errors) + " replications could not be tested"};
}

Outcome power_reproduction() {
  const auto t0 = Clock::now();
  auto family = scenarios::power_family();
  for (auto& s : family) {
    s.horizon = 1000;
    s.replications = 500;
  }
  const auto rows = power_curve(family, 0.05, 3, 0);
  bool monotone = true;
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = i + 1; j < rows.size(); ++j)
      if (rows[i].power > rows[j].power && rows[i].wilson.low > rows[j].wilson.high) monotone = false;
  const double top = rows.back().power;
  const double elapsed = seconds_since(t0);
  std::ostringstream os;
  os << "power by e:";
  for (const auto& r : rows) os << " " << fmt(r.power, 3);
  os << "; e=10 power " << fmt(top) << " (need >= 0.98); nondecreasing up to Wilson overlap: "
     << (monotone ? "yes" : "no") << "; runtime " << fmt(elapsed) << " s";
  return {top >= 0.98 && monotone && elapsed < 1200.0, os.str()};
}

// ---------------------------------------------------------------------------
// 8. Exchangeable colors share a limit law

Outcome symmetry_of_limits() {
  const auto t0 = Clock::now();
  auto ks_of = [](int figure) {
    auto spec = scenarios::composition_case('a', figure);
    spec.horizon = kLongHorizon;
    spec.replications = 5000;
    const auto s = run_replications(spec, 0);
    std::vector<double> z1, z2;
    for (const auto& r : s.results) {
      if (r.error) continue;
      z1.push_back(r.Z[0]);
      z2.push_back(r.Z[1]);
    }
    return ks_two_sample(z1, z2);
  };
  const auto same = ks_of(1);
  const auto shifted = ks_of(2);
  const double elapsed = seconds_since(t0);
  const bool ok = same.p_value >= 0.01 && shifted.p_value < 0.01 && elapsed < 1800.0;
  return {ok, "KS Z_1 vs Z_2: H0=(6,6,6) D=" + fmt(same.statistic) + " p=" + fmt(same.p_value) +
                  " (must not reject); H0=(6,3,6) D=" + fmt(shifted.statistic) + " p=" + fmt(shifted.p_value) +
                  " (must reject); runtime " + fmt(elapsed) + " s"};
}

// ---------------------------------------------------------------------------
// 9. Running sums against direct recomputation

Outcome oracle_equivalence() {
  Rng meta(9, 9);
  auto specs = builtin_scenarios();
  double worst = 0.0;
  auto rel = [](double a, double b) {
    const double scale = std::max(std::abs(a), std::abs(b));
    return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
  };
  for (int run = 0; run < 20; ++run) {
    const auto& spec = specs[static_cast<std::size_t>(meta.uniform() * static_cast<double>(specs.size()))];
    const auto n = 1 + static_cast<std::int64_t>(meta.uniform() * 500);
    Urn urn(spec.config);
    Rng rng(static_cast<std::uint64_t>(run) + 100, 0);
    const auto recs = urn.run(n, rng, 1);
    const auto est = estimate(urn.state());
    const auto ref = oracle::direct_estimates(recs, spec.dimension());
    worst = std::max({worst, rel(est.mu_hat, ref.mu), rel(est.qN_hat, ref.qN)});
    for (std::size_t k = 0; k < spec.dimension(); ++k) {
      worst = std::max(worst, rel(est.nu_hat[k], ref.nu[k]));
      if (est.N_A[k] != ref.N_A[k]) worst = INFINITY;
      if (ref.N_A[k] == 0) continue;
      worst = std::max({worst, rel(*est.m_hat[k], ref.m[k]), rel(*est.q_hat[k], ref.q[k])});
      for (std::size_t s = 0; s < spec.dimension(); ++s)
        if (s != k && est.q_cross_hat[k][s] && !std::isnan(ref.cross[k][s]))
          worst = std::max(worst, rel(est.q_cross_hat[k][s]->value, ref.cross[k][s]));
    }
  }
  return {worst <= 1e-12, "max relative difference over 20 random runs: " + fmt(worst) + " (limit 1e-12)"};
}

// ---------------------------------------------------------------------------
// 10. Byte-identical outputs across repeats and parallelism

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MMRU_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    out[e.path().filename().string()] = s.str();
  }
  return out;
}

Outcome determinism() {
  const std::string scenario_dir = MMRU_SCENARIO_DIR;
  // {command, writes into a directory}
  const std::vector<std::pair<std::string, bool>> commands{
      {"simulate --scenario case-c --n 2000", false},
      {"simulate --scenario fig4-e4 --n 500 --format json", false},
      {"estimate --scenario case-d", false},
      {"test --scenario fig4-e3", false},
      {"validate --scenario-file " + scenario_dir + "/case-d.json", false},
      {"power --family fig4 --reps 40 --n 1000", false},
      {"power --scenario-file " + scenario_dir + "/fig4-family.json --reps 20 --n 500 --format json", false},
      {"figures --figure 1 --n 2000 --reps 40", true},
      {"figures --figure 2 --n 1000 --reps 20 --format json", true},
  };
  const auto root = fs::temp_directory_path() / "mmru_acceptance_determinism";
  fs::remove_all(root);
  int identical = 0;
  std::string first_bad;
  for (std::size_t c = 0; c < commands.size(); ++c) {
    std::vector<std::map<std::string, std::string>> outputs;
    bool ran = true;
    for (int parallelism : {1, 8})
      for (int repeat = 0; repeat < 2; ++repeat) {
        const auto dir = root / (std::to_string(c) + "_" + std::to_string(parallelism) + "_" + std::to_string(repeat));
        fs::create_directories(dir);
        const std::string out = commands[c].second ? dir.string() : (dir / "out").string();
        ran = ran && run_cli(commands[c].first + " --seed 11 --parallelism " + std::to_string(parallelism) +
                             " --out " + out) == 0;
        outputs.push_back(snapshot(dir));
      }
    const bool same = ran && !outputs.front().empty() &&
                      std::all_of(outputs.begin(), outputs.end(), [&](const auto& o) { return o == outputs.front(); });
    if (same)
      ++identical;
    else if (first_bad.empty())
      first_bad = commands[c].first + (ran ? "" : " (command failed)");
  }
  fs::remove_all(root);
  const bool ok = identical == static_cast<int>(commands.size());
  return {ok, std::to_string(identical) + "/" + std::to_string(commands.size()) +
                  " commands byte-identical across 2 repeats x parallelism {1, 8}" + (ok ? "" : "; first mismatch: " + first_bad)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"sampler exactness", sampler_exactness},
      {"dominated colors vanish", degenerate_limit},
      {"exact order of dominated color", exact_order},
      {"estimator consistency", estimator_consistency},
      {"per-arm CLT coverage", clt_coverage},
      {"test size", test_size},
      {"power curve", power_reproduction},
      {"symmetry of limits", symmetry_of_limits},
      {"running sums vs direct recomputation", oracle_equivalence},
      {"determinism", determinism},
  };
  std::set<std::size_t> selected;
  for (int i = 1; i < argc; ++i) {
    const int k = std::atoi(argv[i]);
    if (k < 1 || k > static_cast<int>(criteria.size())) {
      std::cerr << "usage: acceptance [criterion ...]   (1-" << criteria.size() << ")\n";
      return 2;
    }
    selected.insert(static_cast<std::size_t>(k));
  }

  int passed = 0, run = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected.empty() && !selected.count(i + 1)) continue;
    ++run;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    passed += o.pass;
    std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << i + 1 << " " << criteria[i].first << ": " << o.detail << std::endl;
  }
  std::cout << passed << "/" << run << " criteria passed" << std::endl;
  return passed == run ? 0 : 1;
}
