#pragma once

// Experiment definitions: the built-in library and the scenario file format.
//
// A scenario file is a JSON document:
//
//   {
//     "name": "my-case",
//     "initial": [6, 6, 6],
//     "draw_mode": "without_replacement",          // or "with_replacement"
//     "draw_count": {"support": [3, 6], "probabilities": ["1/3", "2/3"], "cap": 6},
//     "replacement": {"type": "independent_discrete",
//                     "marginals": [{"values": [3, 4, 5], "probabilities": ["1/3", "1/3", "1/3"]}, ...]},
//     "horizon": 10000, "replications": 5000, "seed": 1
//   }
//
// Probabilities may be numbers or "p/q" strings. Replacement types:
//   independent_discrete  {marginals: [{values, probabilities}, ...]}
//   shifted_multinomial   {trials, probabilities, offsets, scales}
//   shifted_common_count  {base: {"poisson": mean} | {values, probabilities},
//                          offsets, scales, clamp_at_one}
//   point_mass            {values}
// A family file holds {"family": [scenario, ...]}; members may carry "e".

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mmru/errors.hpp"
#include "mmru/sampling.hpp"
#include "mmru/urn.hpp"

namespace mmru {

struct ScenarioSpec {
  std::string name;
  std::string description;
  UrnConfig config;
  LawMoments true_moments;
  std::size_t true_t = 0;
  std::int64_t horizon = 10000;
  std::int64_t replications = 1;
  std::uint64_t base_seed = 1;
  std::optional<int> e;                 // power-family index
  std::vector<std::string> deviations;  // departures from the nominal law

  std::size_t dimension() const { return config.dimension(); }
};

// Validates the config and fills the derived fields.
inline ScenarioSpec make_scenario(std::string name, std::string description, UrnConfig config,
                                  std::int64_t horizon, std::int64_t replications, std::uint64_t seed,
                                  std::optional<int> e = std::nullopt) {
  config.validate();
  ScenarioSpec s;
  s.name = std::move(name);
  s.description = std::move(description);
  s.true_moments = law_moments(config.replacement_law);
  s.true_t = maximal_count(s.true_moments.m);
  s.config = std::move(config);
  s.horizon = horizon;
  s.replications = replications;
  s.base_seed = seed;
  s.e = e;
  const auto clamp = clamp_probabilities(s.config.replacement_law);
  for (std::size_t k = 0; k < clamp.size(); ++k)
    if (clamp[k] > 0.0) {
      std::ostringstream os;
      os << "A_" << k + 1 << " clamped at 1 with probability " << clamp[k]
         << "; true moments are those of the clamped law";
      s.deviations.push_back(os.str());
    }
  return s;
}

namespace scenarios {

inline constexpr std::uint64_t kDefaultSeed = 20240601;

inline DiscreteLaw uniform_on(std::vector<double> values) {
  const double p = 1.0 / static_cast<double>(values.size());
  return {values, std::vector<double>(values.size(), p)};
}

inline DrawCountLaw composition_draws() { return {{3, 6}, {1.0 / 3.0, 2.0 / 3.0}, 6}; }
inline DrawCountLaw power_draws() { return {{6, 8}, {0.25, 0.75}, 8}; }

// Replacement laws of the four composition experiments.
inline ReplacementLaw case_law(char which) {
  switch (which) {
    case 'a':
      return IndependentDiscrete{{uniform_on({3, 4, 5}), uniform_on({3, 4, 5}), uniform_on({1})}};
    case 'b':
      return IndependentDiscrete{{uniform_on({2, 3, 4, 5, 6}), uniform_on({3, 4, 5}), uniform_on({1})}};
    case 'c':
      return ShiftedMultinomial{5, {0.4, 0.4, 0.2}, {2, 2, 1}, {1, 1, 0}};
    case 'd':
      return ShiftedMultinomial{5, {0.3, 0.4, 0.3}, {1, 2, 1}, {2, 1, 0}};
    default:
      throw InvalidArgument(std::string("unknown case '") + which + "'");
  }
}

inline const char* case_description(char which) {
  switch (which) {
    case 'a': return "A1, A2 uniform on {3,4,5}, A3 = 1";
    case 'b': return "A1 uniform on {2..6}, A2 uniform on {3,4,5}, A3 = 1";
    case 'c': return "A = (2+Y1, 2+Y2, 1), Y ~ Multinomial(5; 0.4, 0.4, 0.2)";
    default: return "A = (1+2Y1, 2+Y2, 1), Y ~ Multinomial(5; 0.3, 0.4, 0.3)";
  }
}

// `figure` 1 uses H0 = (6,6,6), figure 2 uses H0 = (6,3,6).
inline ScenarioSpec composition_case(char which, int figure) {
  const std::vector<double> h0 = figure == 1 ? std::vector<double>{6, 6, 6} : std::vector<double>{6, 3, 6};
  std::string name = std::string("case-") + which + (figure == 1 ? "" : "-636");
  UrnConfig cfg{h0, DrawMode::WithoutReplacement, composition_draws(), case_law(which)};
  return make_scenario(name, case_description(which), cfg, 10000, 5000, kDefaultSeed);
}

// Power family: H0 = (9,9,9), N in {6 w.p. 1/4, 8 w.p. 3/4}, one shared
// Y ~ Poisson(6) with A = (Y+1, Y+1, max(1, Y+1-0.2e)). Non-integer
// additions force drawing with replacement.
inline ScenarioSpec power_member(int e) {
  ShiftedCommonCount law{PoissonLaw{6.0}, {1.0, 1.0, 1.0 - 0.2 * e}, {1.0, 1.0, 1.0}, e > 0};
  UrnConfig cfg{{9, 9, 9}, DrawMode::WithReplacement, power_draws(), law};
  const std::string name = e == 0 ? "equal-arms" : "fig4-e" + std::to_string(e);
  const std::string desc = "A = (Y+1, Y+1, Y+1-0.2e) with shared Y ~ Poisson(6), e = " + std::to_string(e);
  return make_scenario(name, desc, cfg, 1000, e == 0 ? 1000 : 500, kDefaultSeed, e);
}

inline std::vector<ScenarioSpec> power_family() {
  std::vector<ScenarioSpec> out;
  for (int e = 1; e <= 10; ++e) out.push_back(power_member(e));
  return out;
}

inline std::vector<ScenarioSpec> figure_cases(int figure) {
  std::vector<ScenarioSpec> out;
  for (char c : {'a', 'b', 'c', 'd'}) out.push_back(composition_case(c, figure));
  return out;
}

inline ScenarioSpec point_mass() {
  UrnConfig cfg{{6, 6, 6}, DrawMode::WithoutReplacement, composition_draws(), PointMass{{4, 4, 1}}};
  return make_scenario("point-mass", "A = (4, 4, 1) deterministically", cfg, 10000, 100, kDefaultSeed);
}

}  // namespace scenarios

inline std::vector<ScenarioSpec> builtin_scenarios() {
  std::vector<ScenarioSpec> out;
  for (int fig : {1, 2})
    for (auto& s : scenarios::figure_cases(fig)) out.push_back(std::move(s));
  out.push_back(scenarios::point_mass());
  out.push_back(scenarios::power_member(0));
  for (auto& s : scenarios::power_family()) out.push_back(std::move(s));
  return out;
}

inline std::optional<ScenarioSpec> find_builtin(const std::string& name) {
  for (auto& s : builtin_scenarios())
    if (s.name == name) return s;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Scenario files

namespace detail {

using nlohmann::json;

inline std::string join_path(const std::string& base, const std::string& key) {
  return base.empty() ? key : base + "." + key;
}

inline const json& require(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) throw ScenarioError(path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ScenarioError(join_path(path, key), "missing required field");
  return *it;
}

inline double parse_real(const json& v, const std::string& path) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    const auto slash = s.find('/');
    try {
      std::size_t used = 0;
      if (slash == std::string::npos) {
        const double x = std::stod(s, &used);
        if (used == s.size()) return x;
      } else {
        const double num = std::stod(s.substr(0, slash), &used);
        if (used == slash) {
          const auto rest = s.substr(slash + 1);
          const double den = std::stod(rest, &used);
          if (used == rest.size() && den != 0.0) return num / den;
        }
      }
    } catch (const std::exception&) {
    }
    throw ScenarioError(path, "cannot parse number '" + s + "'");
  }
  throw ScenarioError(path, "expected a number or \"p/q\" string");
}

inline std::vector<double> parse_reals(const json& v, const std::string& path) {
  if (!v.is_array()) throw ScenarioError(path, "expected an array");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(parse_real(v[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

inline std::int64_t parse_int(const json& v, const std::string& path) {
  const double x = parse_real(v, path);
  if (!is_integer_value(x)) throw ScenarioError(path, "expected an integer");
  return static_cast<std::int64_t>(x);
}

inline void check_probabilities(const std::vector<double>& p, const std::string& path) {
  try {
    check_probability_vector(p);
  } catch (const InvalidArgument& e) {
    throw ScenarioError(path, e.what());
  }
}

inline DiscreteLaw parse_discrete(const json& v, const std::string& path) {
  DiscreteLaw law{parse_reals(require(v, "values", path), join_path(path, "values")),
                  parse_reals(require(v, "probabilities", path), join_path(path, "probabilities"))};
  if (law.values.size() != law.probabilities.size() || law.values.empty())
    throw ScenarioError(path, "values and probabilities must be non-empty and of equal length");
  check_probabilities(law.probabilities, join_path(path, "probabilities"));
  return law;
}

inline ReplacementLaw parse_replacement(const json& v, const std::string& path) {
  const auto type = require(v, "type", path);
  if (!type.is_string()) throw ScenarioError(join_path(path, "type"), "expected a string");
  const auto t = type.get<std::string>();
  if (t == "independent_discrete") {
    const auto& ms = require(v, "marginals", path);
    if (!ms.is_array()) throw ScenarioError(join_path(path, "marginals"), "expected an array");
    IndependentDiscrete law;
    for (std::size_t k = 0; k < ms.size(); ++k)
      law.marginals.push_back(parse_discrete(ms[k], join_path(path, "marginals[" + std::to_string(k) + "]")));
    return law;
  }
  if (t == "shifted_multinomial") {
    ShiftedMultinomial law{parse_int(require(v, "trials", path), join_path(path, "trials")),
                           parse_reals(require(v, "probabilities", path), join_path(path, "probabilities")),
                           parse_reals(require(v, "offsets", path), join_path(path, "offsets")),
                           parse_reals(require(v, "scales", path), join_path(path, "scales"))};
    check_probabilities(law.probabilities, join_path(path, "probabilities"));
    return law;
  }
  if (t == "shifted_common_count") {
    const auto& base = require(v, "base", path);
    const auto base_path = join_path(path, "base");
    CountLaw count;
    if (base.is_object() && base.contains("poisson"))
      count = PoissonLaw{parse_real(base["poisson"], join_path(base_path, "poisson"))};
    else
      count = parse_discrete(base, base_path);
    ShiftedCommonCount law{count, parse_reals(require(v, "offsets", path), join_path(path, "offsets")),
                           parse_reals(require(v, "scales", path), join_path(path, "scales")),
                           v.value("clamp_at_one", false)};
    return law;
  }
  if (t == "point_mass") return PointMass{parse_reals(require(v, "values", path), join_path(path, "values"))};
  throw ScenarioError(join_path(path, "type"), "unknown replacement type '" + t + "'");
}

inline std::size_t line_of_offset(const std::string& text, std::size_t offset) {
  std::size_t line = 1;
  for (std::size_t i = 0; i < std::min(offset, text.size()); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

}  // namespace detail

inline ScenarioSpec parse_scenario(const nlohmann::json& doc, const std::string& path = "") {
  using detail::join_path;
  using detail::require;
  const auto name = doc.value("name", std::string("custom"));
  const auto h0 = detail::parse_reals(require(doc, "initial", path), join_path(path, "initial"));
  DrawMode mode = DrawMode::WithoutReplacement;
  if (doc.contains("draw_mode")) {
    const auto m = doc["draw_mode"].is_string() ? doc["draw_mode"].get<std::string>() : "";
    if (m == "with_replacement")
      mode = DrawMode::WithReplacement;
    else if (m != "without_replacement")
      throw ScenarioError(join_path(path, "draw_mode"), "expected \"with_replacement\" or \"without_replacement\"");
  }
  const auto& dc = require(doc, "draw_count", path);
  const auto dc_path = join_path(path, "draw_count");
  DrawCountLaw count;
  {
    const auto& sup = require(dc, "support", dc_path);
    if (!sup.is_array()) throw ScenarioError(join_path(dc_path, "support"), "expected an array");
    for (std::size_t i = 0; i < sup.size(); ++i)
      count.support.push_back(detail::parse_int(sup[i], join_path(dc_path, "support[" + std::to_string(i) + "]")));
    count.probabilities = detail::parse_reals(require(dc, "probabilities", dc_path), join_path(dc_path, "probabilities"));
    detail::check_probabilities(count.probabilities, join_path(dc_path, "probabilities"));
    count.cap = dc.contains("cap") ? detail::parse_int(dc["cap"], join_path(dc_path, "cap"))
                                   : (count.support.empty() ? 0 : *std::max_element(count.support.begin(), count.support.end()));
    try {
      count.validate();
    } catch (const InvalidArgument& e) {
      throw ScenarioError(dc_path, e.what());
    }
  }
  const auto law = detail::parse_replacement(require(doc, "replacement", path), join_path(path, "replacement"));
  UrnConfig cfg{h0, mode, count, law};
  const auto horizon = doc.contains("horizon") ? detail::parse_int(doc["horizon"], join_path(path, "horizon")) : 10000;
  const auto reps = doc.contains("replications") ? detail::parse_int(doc["replications"], join_path(path, "replications")) : 1;
  const auto seed = doc.contains("seed") ? static_cast<std::uint64_t>(detail::parse_int(doc["seed"], join_path(path, "seed")))
                                         : scenarios::kDefaultSeed;
  std::optional<int> e;
  if (doc.contains("e")) e = static_cast<int>(detail::parse_int(doc["e"], join_path(path, "e")));
  try {
    return make_scenario(name, doc.value("description", std::string()), cfg, horizon, reps, seed, e);
  } catch (const InvalidArgument& err) {
    const std::string what = err.what();
    const bool law_issue = what.find("replacement") != std::string::npos || what.find("A must be") != std::string::npos;
    throw ScenarioError(law_issue ? join_path(path, "replacement") : path, what);
  }
}

inline nlohmann::json read_json_file(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file);
  std::stringstream buf;
  buf << in.rdbuf();
  const auto text = buf.str();
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ScenarioError("", file + ": line " + std::to_string(detail::line_of_offset(text, e.byte)) + ": " + e.what());
  }
}

inline ScenarioSpec parse_scenario_file(const std::string& file) { return parse_scenario(read_json_file(file)); }

// A single scenario or {"family": [...]}.
inline std::vector<ScenarioSpec> parse_family_file(const std::string& file) {
  const auto doc = read_json_file(file);
  if (!doc.contains("family")) return {parse_scenario(doc)};
  const auto& fam = doc["family"];
  if (!fam.is_array()) throw ScenarioError("family", "expected an array");
  std::vector<ScenarioSpec> out;
  for (std::size_t i = 0; i < fam.size(); ++i) out.push_back(parse_scenario(fam[i], "family[" + std::to_string(i) + "]"));
  return out;
}

// Summary used by `validate` and `--help`.
inline nlohmann::json describe(const ScenarioSpec& s) {
  nlohmann::json q_cross = nlohmann::json::array();
  for (std::size_t k = 0; k < s.dimension(); ++k) {
    std::vector<double> row;
    for (std::size_t j = 0; j < s.dimension(); ++j) row.push_back(s.true_moments.q_cross(k, j));
    q_cross.push_back(row);
  }
  nlohmann::json out{{"name", s.name},
                     {"description", s.description},
                     {"d", s.dimension()},
                     {"initial", s.config.initial},
                     {"draw_mode", to_string(s.config.draw_mode)},
                     {"draw_mean", s.config.count_law.mean()},
                     {"draw_second_moment", s.config.count_law.second_moment()},
                     {"true_means", s.true_moments.m},
                     {"true_second_moments", s.true_moments.q},
                     {"true_cross_moments", q_cross},
                     {"true_t", s.true_t},
                     {"horizon", s.horizon},
                     {"replications", s.replications},
                     {"seed", s.base_seed},
                     {"deviations", s.deviations}};
  if (s.e) out["e"] = *s.e;
  return out;
}

}  // namespace mmru
