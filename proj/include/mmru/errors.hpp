#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mmru {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidArgument : Error {
  using Error::Error;
};

// Estimator for a color that has never been drawn.
struct NoDrawsForColor : Error {
  explicit NoDrawsForColor(std::size_t color)
      : Error("no draws observed for color " + std::to_string(color + 1)), color(color) {}
  std::size_t color;
};

struct NoJointObservations : Error {
  NoJointObservations(std::size_t k, std::size_t s)
      : Error("no joint observations for colors " + std::to_string(k + 1) + " and " +
              std::to_string(s + 1)),
        k(k), s(s) {}
  std::size_t k, s;
};

struct InsufficientDraws : Error {
  InsufficientDraws(std::size_t color, long long draws, long long required)
      : Error("color " + std::to_string(color + 1) + " has " + std::to_string(draws) +
              " draws, test requires " + std::to_string(required)),
        color(color) {}
  std::size_t color;
};

struct NotPositiveDefinite : Error {
  using Error::Error;
};

struct DegenerateCovariance : Error {
  using Error::Error;
};

struct InternalConsistencyError : Error {
  using Error::Error;
};

// Scenario parse/validation failure; `field` is a dotted path into the document.
struct ScenarioError : Error {
  ScenarioError(std::string field, const std::string& what)
      : Error(field.empty() ? what : field + ": " + what), field(std::move(field)) {}
  std::string field;
};

struct IoError : Error {
  using Error::Error;
};

}  // namespace mmru
