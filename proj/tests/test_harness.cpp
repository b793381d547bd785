#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "mmru/harness.hpp"

using namespace mmru;

namespace {

ScenarioSpec small(ScenarioSpec s, std::int64_t horizon, std::int64_t reps) {
  s.horizon = horizon;
  s.replications = reps;
  return s;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::filesystem::path temp_dir() {
  auto p = std::filesystem::temp_directory_path() / ("mmru_harness_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()));
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST(Replications, SingleReplicationIsRunPlusEstimate) {
  const auto spec = small(scenarios::composition_case('b', 1), 300, 1);
  const auto s = run_replications(spec, 1);
  Urn urn(spec.config);
  Rng rng(spec.base_seed, 0);
  urn.run(spec.horizon, rng);
  const auto est = estimate(urn.state());
  ASSERT_EQ(s.results.size(), 1u);
  EXPECT_EQ(s.results[0].Z, normalized_composition(urn.state()));
  EXPECT_EQ(s.results[0].m_hat, est.m_hat);
  EXPECT_EQ(s.results[0].N_A, urn.state().N_A);
  EXPECT_EQ(s.results[0].n, 300);
}

TEST(Replications, ParallelismDoesNotChangeOutput) {
  const auto spec = small(scenarios::power_member(3), 200, 40);
  ReplicationOptions opt;
  opt.test_k0 = 3;
  const auto a = run_replications(spec, 1, opt);
  const auto b = run_replications(spec, 8, opt);
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
  std::ostringstream ca, cb;
  write_summary_csv(ca, a);
  write_summary_csv(cb, b);
  EXPECT_EQ(ca.str(), cb.str());
}

TEST(Replications, HistogramsCountEveryReplication) {
  const auto spec = small(scenarios::composition_case('c', 2), 100, 37);
  const auto s = run_replications(spec, 2);
  ASSERT_EQ(s.histograms.size(), 3u);
  for (const auto& h : s.histograms) {
    EXPECT_EQ(h.counts.size(), kHistogramBins);
    EXPECT_EQ(h.edges.front(), 0.0);
    EXPECT_EQ(h.edges.back(), 1.0);
    EXPECT_EQ(std::accumulate(h.counts.begin(), h.counts.end(), std::int64_t{0}), 37);
  }
  for (const auto& r : s.results) EXPECT_NEAR(std::accumulate(r.Z.begin(), r.Z.end(), 0.0), 1.0, 1e-12);
  EXPECT_EQ(histogram_bin(1.0, 50), 49u);
  EXPECT_EQ(histogram_bin(0.0, 50), 0u);
}

TEST(Replications, DominatedColorVanishes) {
  // Case a: Z_3 decays like n^{-3/4}.
  const auto s = run_replications(small(scenarios::composition_case('a', 1), 10000, 20), 0);
  double z3 = 0.0;
  for (const auto& r : s.results) z3 += r.Z[2];
  EXPECT_LT(z3 / 20, 0.01);
}

TEST(Replications, RejectsBadInputs) {
  EXPECT_THROW(run_replications(small(scenarios::point_mass(), 10, 0), 1), InvalidArgument);
  EXPECT_THROW(run_replications(small(scenarios::point_mass(), 0, 3), 1), InvalidArgument);
}

TEST(Replications, TestErrorsCountAsAcceptances) {
  // Two stages cannot identify three arms: every test fails and none rejects.
  const auto spec = small(scenarios::power_member(10), 2, 5);
  ReplicationOptions opt;
  opt.test_k0 = 3;
  const auto s = run_replications(spec, 1, opt);
  EXPECT_EQ(s.tests_run, 5);
  EXPECT_EQ(s.rejections, 0);
  EXPECT_EQ(s.power, 0.0);
  int errors = 0;
  for (const auto& r : s.results) errors += r.test_error.has_value();
  EXPECT_GT(errors, 0);
}

TEST(Exports, EmptySummaryWritesHeaderOnly) {
  ReplicationSummary s;
  s.scenario = "x";
  s.d = 2;
  std::ostringstream os;
  write_summary_csv(os, s);
  EXPECT_EQ(os.str(), "scenario,e,replication,n,Z_1,Z_2,m_hat_1,m_hat_2,N_A_1,N_A_2,theta,p_value,reject\n");
}

TEST(Exports, HistogramCsvHasBinsTimesColors) {
  const auto s = run_replications(small(scenarios::composition_case('a', 1), 50, 4), 1);
  std::ostringstream os;
  write_histogram_csv(os, s);
  const auto ls = lines(os.str());
  EXPECT_EQ(ls.front(), "scenario,color,bin_left,bin_right,count");
  EXPECT_EQ(ls.size(), 1 + 50u * 3);
  EXPECT_EQ(ls[1], "case-a,1,0,0.02," + std::to_string(s.histograms[0].counts[0]));
}

TEST(Exports, JsonRoundTripIsExact) {
  const auto spec = small(scenarios::power_member(5), 150, 6);
  ReplicationOptions opt;
  opt.test_k0 = 3;
  const auto s = run_replications(spec, 1, opt);
  const auto dir = temp_dir();
  const auto path = (dir / "summary.json").string();
  export_json(s, path);
  const auto back = import_json(path);
  EXPECT_EQ(to_json(back).dump(), to_json(s).dump());
  ASSERT_EQ(back.results.size(), s.results.size());
  for (std::size_t i = 0; i < s.results.size(); ++i) {
    EXPECT_EQ(back.results[i].Z, s.results[i].Z);  // bit-exact
    if (s.results[i].test) EXPECT_EQ(back.results[i].test->theta, s.results[i].test->theta);
  }
  EXPECT_EQ(back.metadata.seed, spec.base_seed);
  EXPECT_EQ(back.metadata.library_version, kLibraryVersion);
  EXPECT_EQ(back.e, 5);

  const auto csv = (dir / "summary.csv").string();
  export_csv(s, csv);
  std::ifstream meta(csv + ".meta.json");
  ASSERT_TRUE(meta);
  const auto m = metadata_from_json(nlohmann::json::parse(meta));
  EXPECT_EQ(m.deviations, spec.deviations);
  EXPECT_EQ(m.horizon, 150);
  std::filesystem::remove_all(dir);
}

TEST(Exports, IoErrorsCarryThePath) {
  const auto s = run_replications(small(scenarios::point_mass(), 5, 1), 1);
  const std::string bad = "/nonexistent-dir/out.csv";
  try {
    export_csv(s, bad);
    ADD_FAILURE();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find(bad), std::string::npos);
  }
  EXPECT_THROW(import_json("/nonexistent-dir/in.json"), IoError);
}

TEST(Convergence, CaseAGrowthRates) {
  const auto spec = scenarios::composition_case('a', 1);
  const auto t = convergence_diagnostics(spec);
  ASSERT_EQ(t.rows.size(), 100u);
  EXPECT_EQ(t.rows.back().n, 10000);
  EXPECT_NEAR(t.s_limit, 20.0, 1e-12);
  EXPECT_NEAR(t.rows.back().s_over_n, 20.0, 2.0);
  EXPECT_NEAR(t.exponents[2], 0.25, 1e-12);
  EXPECT_TRUE(t.converged);
  std::ostringstream os;
  write_convergence_csv(os, t);
  const auto ls = lines(os.str());
  EXPECT_EQ(ls.front(), "n,S_over_n,H_scaled_1,H_scaled_2,H_scaled_3,N_A_scaled_1,N_A_scaled_2,N_A_scaled_3,Z_scaled_1,Z_scaled_2,Z_scaled_3");
  EXPECT_EQ(ls.size(), 101u);
}

TEST(Convergence, SingleColor) {
  UrnConfig cfg{{4}, DrawMode::WithoutReplacement, DrawCountLaw::point_mass(3), PointMass{{2}}};
  const auto spec = make_scenario("one", "", cfg, 500, 1, 1);
  const auto t = convergence_diagnostics(spec, {100, 500});
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_NEAR(t.rows[1].s_over_n, 6.0 + 4.0 / 500, 1e-12);
  EXPECT_NEAR(t.rows[1].z_scaled[0], 1.0, 1e-12);
  EXPECT_TRUE(t.converged);
  EXPECT_THROW(convergence_diagnostics(spec, {0}), InvalidArgument);
}

TEST(Power, RowsCarryWilsonIntervals) {
  std::vector<ScenarioSpec> fam{small(scenarios::power_member(10), 1000, 30)};
  const auto rows = power_curve(fam, 0.05, 3, 0);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].e, 10);
  EXPECT_EQ(rows[0].replications, 30);
  EXPECT_GE(rows[0].rejections, 27);
  EXPECT_LE(rows[0].wilson.low, rows[0].power);
  EXPECT_GE(rows[0].wilson.high, rows[0].power);
  std::ostringstream os;
  write_power_csv(os, rows);
  EXPECT_EQ(lines(os.str()).front(), "e,m2_minus_m3,replications,rejections,power,wilson_low,wilson_high");
  // Equal arms have t = 3, so a two-arm test is inapplicable.
  EXPECT_THROW(power_curve({small(scenarios::power_member(0), 10, 1)}, 0.05, 2, 1), InvalidArgument);
}
