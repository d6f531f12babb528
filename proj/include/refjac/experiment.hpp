#pragma once

#include "refjac/config.hpp"
#include "refjac/estimator.hpp"
#include "refjac/geometry.hpp"
#include "refjac/model.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace refjac {

// Command-line settings that take precedence over the config file. The worker
// count never influences results.
struct RunOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  std::optional<std::string> format;  // csv | json | both
  int workers = 1;
};

/// A parsed and validated experiment: domain, coefficients, initial data and
/// the raw config for the optional sections.
struct Experiment {
  Json config;
  DomainGeometry geometry;
  CoefficientField field;
  InitialCondition initial;
  Vec x{};
  double t = 0.0;
  std::uint64_t paths = 0;
  std::uint64_t seed = 0;
  std::vector<SchemeConfig> schemes{};
  std::vector<std::uint64_t> scheme_paths{};
  std::filesystem::path out_dir{};
  bool write_json = true;
  bool write_csv = true;
  int workers = 1;
};

/// Builds the experiment from a config. Malformed or inconsistent configs
/// raise ConfigError; a starting point outside D raises PreconditionError.
Experiment build_experiment(const Json& config, const RunOverrides& overrides = {});

struct Rule {
  std::string name;
  bool pass = false;
  double value = 0.0;
  double bound = 0.0;
  std::string detail;
};

struct ValidationRow {
  std::string check;
  bool pass = false;
  double value = 0.0;
  double threshold = 0.0;
};

std::vector<ValidationRow> validate_experiment(const Experiment& e);

struct ExperimentResult {
  Json estimates = Json::object();  // deterministic given config and seed
  std::vector<Rule> rules;
  bool pass() const;
  Json summary() const;
};

// Monte Carlo estimates only.
ExperimentResult run_estimates(const Experiment& e);
// Estimates, oracles and every enabled check of [oracle] and [checks.*].
ExperimentResult run_experiment(const Experiment& e);

// Writes estimates.json / estimates.csv / comparison.csv / summary.json to the
// output directory, and wall-clock details to metadata.json.
void write_outputs(const Experiment& e, const ExperimentResult& r, const std::string& command, double wall_seconds);

// Sweep of [convergence] parameter over values; one estimate per value.
ExperimentResult run_convergence(const Experiment& e);

// Reflected paths with their excursion decomposition (CSV per path plus a
// statistics summary).
ExperimentResult run_excursions(const Experiment& e, std::uint64_t paths, double eps);

}  // namespace refjac
