#pragma once

// Monte Carlo replication engine, convergence diagnostics, power curves and
// the CSV/JSON exports built on them.
//
// Replication r always uses the stream Rng(base_seed, r), and every aggregate
// is assembled in replication-index order after all workers finish, so the
// output does not depend on the degree of parallelism.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "mmru/errors.hpp"
#include "mmru/estimators.hpp"
#include "mmru/format.hpp"
#include "mmru/inference.hpp"
#include "mmru/rng.hpp"
#include "mmru/scenarios.hpp"
#include "mmru/stats.hpp"
#include "mmru/urn.hpp"

namespace mmru {

inline constexpr const char* kLibraryVersion = "1.0.0";
inline constexpr std::size_t kHistogramBins = 50;
inline constexpr double kConvergenceThreshold = 0.10;

struct Metadata {
  std::uint64_t seed = 0;
  std::string seed_source = "default";  // "flag", "env" or "default"
  std::int64_t horizon = 0;
  std::int64_t replications = 0;
  std::vector<std::string> deviations;
  std::string library_version = kLibraryVersion;
  double convergence_threshold = kConvergenceThreshold;
};

inline Metadata metadata_for(const ScenarioSpec& spec) {
  Metadata m;
  m.seed = spec.base_seed;
  m.horizon = spec.horizon;
  m.replications = spec.replications;
  m.deviations = spec.deviations;
  return m;
}

inline nlohmann::json to_json(const Metadata& m) {
  return {{"seed", m.seed},
          {"seed_source", m.seed_source},
          {"horizon", m.horizon},
          {"replications", m.replications},
          {"deviations", m.deviations},
          {"library_version", m.library_version},
          {"convergence_threshold", m.convergence_threshold}};
}

inline Metadata metadata_from_json(const nlohmann::json& j) {
  Metadata m;
  m.seed = j.at("seed").get<std::uint64_t>();
  m.seed_source = j.at("seed_source").get<std::string>();
  m.horizon = j.at("horizon").get<std::int64_t>();
  m.replications = j.at("replications").get<std::int64_t>();
  m.deviations = j.at("deviations").get<std::vector<std::string>>();
  m.library_version = j.at("library_version").get<std::string>();
  m.convergence_threshold = j.at("convergence_threshold").get<double>();
  return m;
}

struct TestOutcome {
  double theta = 0.0;
  double p_value = 1.0;
  bool reject = false;
};

struct ReplicationResult {
  std::int64_t replication = 0;
  std::int64_t n = 0;
  std::vector<double> Z;
  std::vector<std::optional<double>> m_hat;
  CountVector N_A;
  std::optional<TestOutcome> test;
  std::optional<std::string> test_error;  // the test could not be computed
  std::optional<std::string> error;       // the replication itself failed
};

struct Histogram {
  std::size_t color = 0;  // 0-based
  std::vector<double> edges;
  std::vector<std::int64_t> counts;
};

struct ReplicationSummary {
  std::string scenario;
  std::optional<int> e;
  std::size_t d = 0;
  Metadata metadata;
  std::vector<ReplicationResult> results;
  std::vector<Histogram> histograms;
  std::int64_t tests_run = 0;  // replications in which a test was attempted
  std::int64_t rejections = 0;
  double power = 0.0;  // rejections / tests_run; failed tests count as acceptances
  std::vector<std::string> failures;
};

struct ReplicationOptions {
  std::optional<std::size_t> test_k0;  // run the test on each replication
  double alpha = 0.05;
  TestOptions test;
  std::size_t bins = kHistogramBins;
};

inline std::vector<double> histogram_edges(std::size_t bins) {
  std::vector<double> edges(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) edges[i] = static_cast<double>(i) / static_cast<double>(bins);
  return edges;
}

// Bin of z in [0,1]; z = 1 lands in the last bin.
inline std::size_t histogram_bin(double z, std::size_t bins) {
  const auto b = static_cast<std::size_t>(std::floor(z * static_cast<double>(bins)));
  return std::min(b, bins - 1);
}

inline ReplicationResult run_one(const ScenarioSpec& spec, std::int64_t r, const ReplicationOptions& opt) {
  ReplicationResult out;
  out.replication = r;
  try {
    Urn urn(spec.config);
    Rng rng(spec.base_seed, static_cast<std::uint64_t>(r));
    urn.run(spec.horizon, rng);
    const auto st = urn.resolved_state();
    out.n = st.n;
    out.Z = normalized_composition(st);
    out.N_A = st.N_A;
    const auto est = estimate(st, opt.test.estimator);
    out.m_hat = est.m_hat;
    if (opt.test_k0) {
      try {
        const auto res = run_test(st, *opt.test_k0, opt.alpha, opt.test);
        out.test = TestOutcome{res.theta, res.p_value, res.reject};
      } catch (const Error& e) {
        out.test_error = e.what();
      }
    }
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  return out;
}

inline std::size_t resolve_parallelism(std::size_t parallelism) {
  if (parallelism == 0) parallelism = std::max(1u, std::thread::hardware_concurrency());
  return parallelism;
}

// Rebuilds every aggregate from the per-replication results.
inline void aggregate(ReplicationSummary& s, std::size_t bins = kHistogramBins) {
  s.histograms.clear();
  for (std::size_t k = 0; k < s.d; ++k)
    s.histograms.push_back({k, histogram_edges(bins), std::vector<std::int64_t>(bins, 0)});
  s.tests_run = 0;
  s.rejections = 0;
  s.failures.clear();
  for (const auto& r : s.results) {
    if (r.error) {
      s.failures.push_back("replication " + std::to_string(r.replication) + ": " + *r.error);
      continue;
    }
    for (std::size_t k = 0; k < s.d; ++k) ++s.histograms[k].counts[histogram_bin(r.Z[k], bins)];
    if (r.test || r.test_error) ++s.tests_run;
    if (r.test && r.test->reject) ++s.rejections;
  }
  s.power = s.tests_run > 0 ? static_cast<double>(s.rejections) / static_cast<double>(s.tests_run) : 0.0;
}

inline ReplicationSummary run_replications(const ScenarioSpec& spec, std::size_t parallelism,
                                           const ReplicationOptions& opt = {}) {
  if (spec.replications < 1) throw InvalidArgument("replications must be >= 1");
  if (spec.horizon < 1) throw InvalidArgument("horizon must be >= 1");
  if (opt.bins < 1) throw InvalidArgument("histogram needs at least one bin");
  spec.config.validate();

  ReplicationSummary s;
  s.scenario = spec.name;
  s.e = spec.e;
  s.d = spec.dimension();
  s.metadata = metadata_for(spec);
  s.results.resize(static_cast<std::size_t>(spec.replications));

  const auto workers = std::min<std::size_t>(resolve_parallelism(parallelism), s.results.size());
  std::atomic<std::int64_t> next{0};
  auto work = [&] {
    for (std::int64_t r; (r = next.fetch_add(1)) < spec.replications;)
      s.results[static_cast<std::size_t>(r)] = run_one(spec, r, opt);
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(work);
  }

  aggregate(s, opt.bins);
  if (static_cast<std::int64_t>(s.failures.size()) == spec.replications)
    throw Error("all " + std::to_string(spec.replications) + " replications failed; first: " + s.failures.front());
  return s;
}

// ---------------------------------------------------------------------------
// Convergence diagnostics along one path

struct ConvergenceRow {
  std::int64_t n = 0;
  double s_over_n = 0.0;            // S_n / n
  std::vector<double> h_scaled;     // H_nk / n^{m_k/m_1}
  std::vector<double> na_scaled;    // N_{A_k,n} / n^{m_k/m_1}
  std::vector<double> z_scaled;     // n^{1 - m_k/m_1} Z_nk
};

struct ConvergenceTable {
  std::string scenario;
  std::vector<double> exponents;  // m_k / m_1 with m_1 the largest mean
  double s_limit = 0.0;           // E[N] m_1
  double threshold = kConvergenceThreshold;
  std::vector<ConvergenceRow> rows;
  bool converged = false;  // every ratio moved < threshold between the last two rows
};

inline double relative_change(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

// Checkpoints default to every horizon/100 stages.
inline ConvergenceTable convergence_diagnostics(const ScenarioSpec& spec, std::vector<std::int64_t> checkpoints = {},
                                                std::uint64_t stream = 0,
                                                double threshold = kConvergenceThreshold) {
  if (checkpoints.empty()) {
    const auto step = std::max<std::int64_t>(1, spec.horizon / 100);
    for (std::int64_t n = step; n <= spec.horizon; n += step) checkpoints.push_back(n);
  }
  std::sort(checkpoints.begin(), checkpoints.end());
  checkpoints.erase(std::unique(checkpoints.begin(), checkpoints.end()), checkpoints.end());
  if (checkpoints.front() < 1) throw InvalidArgument("checkpoints must be >= 1");

  const auto d = spec.dimension();
  const auto& m = spec.true_moments.m;
  const double m1 = *std::max_element(m.begin(), m.end());
  if (!(m1 > 0.0)) throw InvalidArgument("convergence diagnostics need a positive maximal mean");

  ConvergenceTable table;
  table.scenario = spec.name;
  table.threshold = threshold;
  table.s_limit = spec.config.count_law.mean() * m1;
  for (double mk : m) table.exponents.push_back(mk / m1);

  Urn urn(spec.config);
  Rng rng(spec.base_seed, stream);
  for (auto target : checkpoints) {
    urn.run(target - urn.state().n, rng);
    const auto st = urn.resolved_state();
    const double n = static_cast<double>(st.n);
    ConvergenceRow row;
    row.n = st.n;
    row.s_over_n = st.S / n;
    for (std::size_t k = 0; k < d; ++k) {
      const double scale = std::pow(n, table.exponents[k]);
      row.h_scaled.push_back(st.H[k] / scale);
      row.na_scaled.push_back(static_cast<double>(st.N_A[k]) / scale);
      row.z_scaled.push_back(n / scale * st.H[k] / st.S);
    }
    table.rows.push_back(std::move(row));
  }

  if (table.rows.size() >= 2) {
    const auto& a = table.rows[table.rows.size() - 2];
    const auto& b = table.rows.back();
    bool ok = relative_change(a.s_over_n, b.s_over_n) < threshold;
    for (std::size_t k = 0; k < d; ++k)
      ok = ok && relative_change(a.h_scaled[k], b.h_scaled[k]) < threshold &&
           relative_change(a.na_scaled[k], b.na_scaled[k]) < threshold &&
           relative_change(a.z_scaled[k], b.z_scaled[k]) < threshold;
    table.converged = ok;
  }
  return table;
}

inline void write_convergence_csv(std::ostream& out, const ConvergenceTable& t) {
  const auto d = t.exponents.size();
  out << "n,S_over_n";
  for (const char* prefix : {"H_scaled_", "N_A_scaled_", "Z_scaled_"})
    for (std::size_t k = 1; k <= d; ++k) out << ',' << prefix << k;
  out << '\n';
  for (const auto& r : t.rows) {
    out << r.n << ',' << format_number(r.s_over_n);
    for (const auto* col : {&r.h_scaled, &r.na_scaled, &r.z_scaled})
      for (double v : *col) out << ',' << format_number(v);
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Power curves

struct PowerRow {
  int e = 0;
  double m2_minus_m3 = 0.0;
  std::int64_t replications = 0;
  std::int64_t rejections = 0;
  double power = 0.0;
  Interval wilson;
};

inline PowerRow power_row(const ScenarioSpec& spec, const ReplicationSummary& s) {
  PowerRow row;
  row.e = spec.e.value_or(0);
  const auto& m = spec.true_moments.m;
  row.m2_minus_m3 = m.size() >= 3 ? m[1] - m[2] : 0.0;
  row.replications = static_cast<std::int64_t>(s.results.size());
  row.rejections = s.rejections;
  row.power = row.replications > 0 ? static_cast<double>(row.rejections) / static_cast<double>(row.replications) : 0.0;
  row.wilson = wilson_interval(row.rejections, row.replications);
  return row;
}

// Power is rejections / R; replications whose test errors count as acceptances.
inline std::vector<PowerRow> power_curve(const std::vector<ScenarioSpec>& family, double alpha, std::size_t k0,
                                         std::size_t parallelism = 0, TestOptions test = {}) {
  std::vector<PowerRow> rows;
  for (const auto& spec : family) {
    if (spec.true_t > k0) throw InvalidArgument(spec.name + ": true_t exceeds k0");
    ReplicationOptions opt;
    opt.test_k0 = k0;
    opt.alpha = alpha;
    opt.test = test;
    rows.push_back(power_row(spec, run_replications(spec, parallelism, opt)));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Exports

inline void write_summary_csv(std::ostream& out, const ReplicationSummary& s) {
  out << "scenario,e,replication,n";
  for (const char* prefix : {"Z_", "m_hat_", "N_A_"})
    for (std::size_t k = 1; k <= s.d; ++k) out << ',' << prefix << k;
  out << ",theta,p_value,reject\n";
  for (const auto& r : s.results) {
    if (r.error) continue;
    out << s.scenario << ',' << (s.e ? std::to_string(*s.e) : "") << ',' << r.replication << ',' << r.n;
    for (double z : r.Z) out << ',' << format_number(z);
    for (const auto& m : r.m_hat) out << ',' << (m ? format_number(*m) : "");
    for (auto c : r.N_A) out << ',' << c;
    if (r.test)
      out << ',' << format_number(r.test->theta) << ',' << format_number(r.test->p_value) << ','
          << (r.test->reject ? 1 : 0);
    else
      out << ",,,";
    out << '\n';
  }
}

inline void write_histogram_csv(std::ostream& out, const ReplicationSummary& s) {
  out << "scenario,color,bin_left,bin_right,count\n";
  for (const auto& h : s.histograms)
    for (std::size_t b = 0; b < h.counts.size(); ++b)
      out << s.scenario << ',' << h.color + 1 << ',' << format_number(h.edges[b]) << ','
          << format_number(h.edges[b + 1]) << ',' << h.counts[b] << '\n';
}

inline void write_power_csv(std::ostream& out, const std::vector<PowerRow>& rows) {
  out << "e,m2_minus_m3,replications,rejections,power,wilson_low,wilson_high\n";
  for (const auto& r : rows)
    out << r.e << ',' << format_number(r.m2_minus_m3) << ',' << r.replications << ',' << r.rejections << ','
        << format_number(r.power) << ',' << format_number(r.wilson.low) << ',' << format_number(r.wilson.high)
        << '\n';
}

inline nlohmann::json to_json(const ReplicationSummary& s) {
  using nlohmann::json;
  json reps = json::array();
  for (const auto& r : s.results) {
    json m_hat = json::array();
    for (const auto& m : r.m_hat) m_hat.push_back(m ? json(*m) : json(nullptr));
    json j{{"replication", r.replication}, {"n", r.n}, {"Z", r.Z}, {"m_hat", m_hat}, {"N_A", r.N_A}};
    j["test"] = r.test ? json{{"theta", r.test->theta}, {"p_value", r.test->p_value}, {"reject", r.test->reject}}
                       : json(nullptr);
    j["test_error"] = r.test_error ? json(*r.test_error) : json(nullptr);
    j["error"] = r.error ? json(*r.error) : json(nullptr);
    reps.push_back(std::move(j));
  }
  json hists = json::array();
  for (const auto& h : s.histograms)
    hists.push_back({{"color", h.color + 1}, {"edges", h.edges}, {"counts", h.counts}});
  return {{"metadata", to_json(s.metadata)},
          {"scenario", s.scenario},
          {"e", s.e ? json(*s.e) : json(nullptr)},
          {"d", s.d},
          {"tests_run", s.tests_run},
          {"rejections", s.rejections},
          {"power", s.power},
          {"failures", s.failures},
          {"histograms", hists},
          {"replications", reps}};
}

inline ReplicationSummary summary_from_json(const nlohmann::json& j) {
  ReplicationSummary s;
  s.metadata = metadata_from_json(j.at("metadata"));
  s.scenario = j.at("scenario").get<std::string>();
  if (!j.at("e").is_null()) s.e = j["e"].get<int>();
  s.d = j.at("d").get<std::size_t>();
  s.tests_run = j.at("tests_run").get<std::int64_t>();
  s.rejections = j.at("rejections").get<std::int64_t>();
  s.power = j.at("power").get<double>();
  s.failures = j.at("failures").get<std::vector<std::string>>();
  for (const auto& h : j.at("histograms"))
    s.histograms.push_back({h.at("color").get<std::size_t>() - 1, h.at("edges").get<std::vector<double>>(),
                            h.at("counts").get<std::vector<std::int64_t>>()});
  for (const auto& r : j.at("replications")) {
    ReplicationResult out;
    out.replication = r.at("replication").get<std::int64_t>();
    out.n = r.at("n").get<std::int64_t>();
    out.Z = r.at("Z").get<std::vector<double>>();
    for (const auto& m : r.at("m_hat")) out.m_hat.push_back(m.is_null() ? std::nullopt : std::optional(m.get<double>()));
    out.N_A = r.at("N_A").get<CountVector>();
    if (!r.at("test").is_null())
      out.test = TestOutcome{r["test"].at("theta").get<double>(), r["test"].at("p_value").get<double>(),
                             r["test"].at("reject").get<bool>()};
    if (!r.at("test_error").is_null()) out.test_error = r["test_error"].get<std::string>();
    if (!r.at("error").is_null()) out.error = r["error"].get<std::string>();
    s.results.push_back(std::move(out));
  }
  return s;
}

namespace detail {
template <class Write>
void write_file(const std::string& path, Write write) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  write(out);
  out.flush();
  if (!out) throw IoError("write failed for " + path);
}
}  // namespace detail

// Writes the summary CSV to `path` and the metadata to `path + ".meta.json"`.
inline void export_csv(const ReplicationSummary& s, const std::string& path) {
  detail::write_file(path, [&](std::ostream& o) { write_summary_csv(o, s); });
  detail::write_file(path + ".meta.json", [&](std::ostream& o) { o << to_json(s.metadata).dump(2) << '\n'; });
}

inline void export_histogram_csv(const ReplicationSummary& s, const std::string& path) {
  detail::write_file(path, [&](std::ostream& o) { write_histogram_csv(o, s); });
}

inline void export_json(const ReplicationSummary& s, const std::string& path) {
  detail::write_file(path, [&](std::ostream& o) { o << to_json(s).dump(2) << '\n'; });
}

inline ReplicationSummary import_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  try {
    return summary_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
}

}  // namespace mmru
