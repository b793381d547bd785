// mmru: command-line driver for the urn toolkit.
//
// Exit codes: 0 success, 2 usage or configuration error, 3 runtime failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mmru/mmru.hpp"

namespace {

using nlohmann::json;

constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string format = "csv";
  std::size_t parallelism = 0;

  std::string scenario;
  std::string scenario_file;
  std::optional<std::int64_t> n;
  std::optional<std::int64_t> reps;
  double alpha = 0.05;
  std::optional<std::size_t> k0;
  std::int64_t record_every = 1;
  std::string family;
  std::vector<int> figures;
};

std::string builtin_listing() {
  std::ostringstream os;
  os << "Built-in scenarios (true reinforcement means):\n";
  for (const auto& s : mmru::builtin_scenarios()) {
    os << "  " << s.name << std::string(s.name.size() < 14 ? 14 - s.name.size() : 1, ' ') << "m = (";
    for (std::size_t k = 0; k < s.true_moments.m.size(); ++k)
      os << (k ? ", " : "") << mmru::format_number(s.true_moments.m[k]);
    os << ")\n";
  }
  return os.str();
}

// Seed precedence: --seed, then MMRU_DEFAULT_SEED, then the scenario default.
void apply_seed(const Options& o, mmru::ScenarioSpec& spec, mmru::Metadata& meta) {
  if (o.seed) {
    spec.base_seed = *o.seed;
    meta.seed_source = "flag";
  } else if (const char* env = std::getenv("MMRU_DEFAULT_SEED")) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument("trailing characters");
      spec.base_seed = v;
    } catch (const std::exception&) {
      throw UsageError(std::string("MMRU_DEFAULT_SEED is not an unsigned integer: ") + env);
    }
    meta.seed_source = "env";
  }
  meta.seed = spec.base_seed;
}

mmru::ScenarioSpec load_scenario(const Options& o) {
  if (o.scenario.empty() == o.scenario_file.empty())
    throw UsageError("exactly one of --scenario or --scenario-file is required");
  mmru::ScenarioSpec spec;
  if (!o.scenario.empty()) {
    auto found = mmru::find_builtin(o.scenario);
    if (!found) throw UsageError("unknown scenario '" + o.scenario + "'\n" + builtin_listing());
    spec = std::move(*found);
  } else {
    spec = mmru::parse_scenario_file(o.scenario_file);
  }
  if (o.n) {
    if (*o.n < 0) throw UsageError("--n must be >= 0");
    spec.horizon = *o.n;
  }
  if (o.reps) {
    if (*o.reps < 1) throw UsageError("--reps must be >= 1");
    spec.replications = *o.reps;
  }
  return spec;
}

mmru::Metadata prepare(const Options& o, mmru::ScenarioSpec& spec) {
  auto meta = mmru::metadata_for(spec);
  apply_seed(o, spec, meta);
  return meta;
}

// Writes to --out, or stdout when it is empty.
template <class Write>
void emit(const std::string& path, Write write) {
  if (path.empty()) {
    write(std::cout);
    std::cout.flush();
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw mmru::IoError("cannot open " + path + " for writing");
  write(out);
  out.flush();
  if (!out) throw mmru::IoError("write failed for " + path);
}

void write_meta_sidecar(const std::string& path, const mmru::Metadata& meta) {
  if (path.empty()) return;
  emit(path + ".meta.json", [&](std::ostream& os) { os << mmru::to_json(meta).dump(2) << '\n'; });
}

int cmd_simulate(const Options& o) {
  auto spec = load_scenario(o);
  auto meta = prepare(o, spec);
  meta.replications = 1;
  mmru::Urn urn(spec.config);
  mmru::Rng rng(spec.base_seed, 0);
  const auto records = urn.run(spec.horizon, rng, o.record_every);
  if (o.format == "json") {
    json rows = json::array();
    for (const auto& r : records) rows.push_back({{"n", r.n}, {"N", r.N}, {"X", r.X}, {"A", r.A}, {"Z", r.Z_after}});
    emit(o.out, [&](std::ostream& os) {
      os << json{{"metadata", mmru::to_json(meta)}, {"scenario", spec.name}, {"records", rows}}.dump(2) << '\n';
    });
  } else {
    emit(o.out, [&](std::ostream& os) { mmru::write_trajectory_csv(os, spec.dimension(), records); });
    write_meta_sidecar(o.out, meta);
  }
  return 0;
}

// One replication on stream 0; returns the resolved terminal state.
mmru::UrnState single_run(const mmru::ScenarioSpec& spec) {
  mmru::Urn urn(spec.config);
  mmru::Rng rng(spec.base_seed, 0);
  urn.run(spec.horizon, rng);
  return urn.resolved_state();
}

int cmd_estimate(const Options& o) {
  auto spec = load_scenario(o);
  auto meta = prepare(o, spec);
  meta.replications = 1;
  if (spec.horizon < 1) throw UsageError("estimate needs --n >= 1");
  auto out = mmru::to_json(mmru::estimate(single_run(spec)));
  out["metadata"] = mmru::to_json(meta);
  emit(o.out, [&](std::ostream& os) { os << out.dump(2) << '\n'; });
  return 0;
}

int cmd_test(const Options& o) {
  auto spec = load_scenario(o);
  auto meta = prepare(o, spec);
  meta.replications = 1;
  const auto d = spec.dimension();
  const auto k0 = o.k0.value_or(d);
  if (k0 < 2 || k0 > d) throw UsageError("--k0 must satisfy 2 <= k0 <= d = " + std::to_string(d));
  if (!(o.alpha > 0.0 && o.alpha < 1.0)) throw UsageError("--alpha must be in (0, 1)");
  if (spec.horizon < 1) throw UsageError("test needs --n >= 1");
  auto out = mmru::to_json(mmru::run_test(single_run(spec), k0, o.alpha));
  out["metadata"] = mmru::to_json(meta);
  emit(o.out, [&](std::ostream& os) { os << out.dump(2) << '\n'; });
  return 0;
}

int cmd_power(const Options& o) {
  std::vector<mmru::ScenarioSpec> family;
  if (!o.family.empty() && !o.scenario_file.empty())
    throw UsageError("use either --family or --scenario-file, not both");
  if (o.family == "fig4")
    family = mmru::scenarios::power_family();
  else if (!o.family.empty())
    throw UsageError("unknown family '" + o.family + "' (available: fig4)");
  else if (!o.scenario_file.empty())
    family = mmru::parse_family_file(o.scenario_file);
  else
    throw UsageError("power needs --family fig4 or --scenario-file");
  if (o.reps && *o.reps < 1) throw UsageError("--reps must be >= 1");
  if (o.n && *o.n < 1) throw UsageError("--n must be >= 1");
  if (!(o.alpha > 0.0 && o.alpha < 1.0)) throw UsageError("--alpha must be in (0, 1)");

  json metas = json::array();
  std::size_t d = family.front().dimension();
  for (auto& spec : family) {
    if (spec.dimension() != d) throw UsageError("family members differ in dimension");
    if (o.n) spec.horizon = *o.n;
    if (o.reps) spec.replications = *o.reps;
    metas.push_back(mmru::to_json(prepare(o, spec)));
  }
  const auto k0 = o.k0.value_or(d);
  if (k0 < 2 || k0 > d) throw UsageError("--k0 must satisfy 2 <= k0 <= d = " + std::to_string(d));
  const auto rows = mmru::power_curve(family, o.alpha, k0, o.parallelism);

  if (o.format == "json") {
    json arr = json::array();
    for (const auto& r : rows)
      arr.push_back({{"e", r.e},
                     {"m2_minus_m3", r.m2_minus_m3},
                     {"replications", r.replications},
                     {"rejections", r.rejections},
                     {"power", r.power},
                     {"wilson_low", r.wilson.low},
                     {"wilson_high", r.wilson.high}});
    emit(o.out, [&](std::ostream& os) {
      os << json{{"metadata", metas}, {"alpha", o.alpha}, {"k0", k0}, {"rows", arr}}.dump(2) << '\n';
    });
  } else {
    emit(o.out, [&](std::ostream& os) { mmru::write_power_csv(os, rows); });
    if (!o.out.empty())
      emit(o.out + ".meta.json", [&](std::ostream& os) { os << metas.dump(2) << '\n'; });
  }
  return 0;
}

// Histogram CSVs (and full JSON summaries with --format json) for the four
// composition cases of each requested figure, written into --out.
int cmd_figures(const Options& o) {
  if (o.out.empty()) throw UsageError("figures needs --out DIR");
  if (!std::filesystem::is_directory(o.out)) throw mmru::IoError("output directory does not exist: " + o.out);
  auto figures = o.figures.empty() ? std::vector<int>{1, 2} : o.figures;
  for (int fig : figures)
    if (fig != 1 && fig != 2) throw UsageError("--figure must be 1 or 2");
  for (int fig : figures)
    for (auto spec : mmru::scenarios::figure_cases(fig)) {
      if (o.n) {
        if (*o.n < 1) throw UsageError("--n must be >= 1");
        spec.horizon = *o.n;
      }
      if (o.reps) {
        if (*o.reps < 1) throw UsageError("--reps must be >= 1");
        spec.replications = *o.reps;
      }
      const auto meta = prepare(o, spec);
      auto summary = mmru::run_replications(spec, o.parallelism);
      summary.metadata = meta;
      const auto base = (std::filesystem::path(o.out) / spec.name).string();
      if (o.format == "json") {
        mmru::export_json(summary, base + ".json");
      } else {
        mmru::export_histogram_csv(summary, base + "_histogram.csv");
        mmru::export_csv(summary, base + "_summary.csv");
      }
    }
  return 0;
}

int cmd_validate(const Options& o) {
  auto spec = load_scenario(o);
  prepare(o, spec);
  emit(o.out, [&](std::ostream& os) { os << mmru::describe(spec).dump(2) << '\n'; });
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulation, estimation and testing for multiple-drawing randomly reinforced urns"};
  app.footer(builtin_listing());
  app.require_subcommand(1);

  Options o;
  app.add_option("--seed", o.seed, "Base seed (default: MMRU_DEFAULT_SEED, then the scenario's)");
  app.add_option("--out", o.out, "Output file (directory for figures); stdout when omitted");
  app.add_option("--format", o.format, "Output format")->check(CLI::IsMember({"csv", "json"}));
  app.add_option("--parallelism", o.parallelism, "Worker threads for replications (0 = all cores)");

  auto scenario_flags = [&](CLI::App* sub) {
    sub->add_option("--scenario", o.scenario, "Built-in scenario name");
    sub->add_option("--scenario-file", o.scenario_file, "Scenario JSON file");
    sub->add_option("--n", o.n, "Horizon (number of stages)");
  };
  auto test_flags = [&](CLI::App* sub) {
    sub->add_option("--alpha", o.alpha, "Significance level");
    sub->add_option("--k0", o.k0, "Number of leading arms tested for equality (default d)");
  };

  auto* simulate = app.add_subcommand("simulate", "Run one replication and write its trajectory");
  scenario_flags(simulate);
  simulate->add_option("--record-every", o.record_every, "Keep every k-th stage");
  auto* estimate = app.add_subcommand("estimate", "Run one replication and print all estimators as JSON");
  scenario_flags(estimate);
  auto* test = app.add_subcommand("test", "Run one replication and test equality of the top k0 means");
  scenario_flags(test);
  test_flags(test);
  auto* power = app.add_subcommand("power", "Empirical power curve over a scenario family");
  power->add_option("--family", o.family, "Built-in family (fig4)");
  power->add_option("--scenario-file", o.scenario_file, "Family JSON file");
  power->add_option("--n", o.n, "Horizon");
  power->add_option("--reps", o.reps, "Replications per member");
  test_flags(power);
  auto* figures = app.add_subcommand("figures", "Terminal-composition histograms for the composition cases");
  figures->add_option("--figure", o.figures, "1 for H0 = (6,6,6), 2 for H0 = (6,3,6); both by default");
  figures->add_option("--n", o.n, "Horizon");
  figures->add_option("--reps", o.reps, "Replications per case");
  auto* validate = app.add_subcommand("validate", "Parse a scenario and print its derived moments");
  validate->add_option("--scenario", o.scenario, "Built-in scenario name");
  validate->add_option("--scenario-file", o.scenario_file, "Scenario JSON file");

  // Global flags are accepted after the subcommand too.
  for (auto* sub : {simulate, estimate, test, power, figures, validate}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*simulate) return cmd_simulate(o);
    if (*estimate) return cmd_estimate(o);
    if (*test) return cmd_test(o);
    if (*power) return cmd_power(o);
    if (*figures) return cmd_figures(o);
    if (*validate) return cmd_validate(o);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const mmru::ScenarioError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const mmru::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
