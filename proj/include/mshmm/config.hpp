#pragma once

// Model configuration files: a line-based key = value format with a small
// formula grammar for the transition predictors.
//
//   states = 2
//   stream step = gamma
//   stream angle = vm
//   tpm = s(tday, bs=cc, k=12, period=24) + ti(tday, doy, bs=(cc,cc), k=(12,12), period=(24,365))
//   tpm[2,1] = s(tday, bs=cc, period=24)
//   delta = stationary
//   track = ID
//   lambda_init = 1e4
//   lambda_init gamma12.s(tday) = 100
//   map ti(ID,tday).1 = plasticity
//   share_across_entries = true
//   inner_tol = 1e-7
//   init step.mean = 0.3, 2
//   init tpm = -2
//   covariate tday = cycle(24, 1)

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mshmm/model.hpp"
#include "mshmm/qreml.hpp"

namespace mshmm {

/// Formula text in the config grammar. Throws ConfigError with the column of
/// the offending token (line taken from the argument).
Formula parse_formula(const std::string& text, int line = 1, int column_offset = 0);

/// Generator of a covariate for simulation without data.
struct CovariateGenerator {
  enum class Kind { cycle, uniform, group };
  Kind kind = Kind::cycle;
  double a = 0.0;  // cycle: period; uniform: lower; group: number of groups
  double b = 0.0;  // cycle: step; uniform: upper

  std::string to_string() const;
};

struct SettingEntry {
  std::string key;   // block label or group name
  std::string value;
  int line = 0;
};

struct InitEntry {
  std::string target;  // "step.mean", "tpm", "tpm[1,2]" or a layout block name
  std::vector<double> values;
  int line = 0;
};

struct ModelConfig {
  HmmSpec spec;
  std::string track_column;
  std::optional<double> lambda_init;
  std::vector<SettingEntry> lambda_init_by_label;  // value holds the number
  std::vector<SettingEntry> map;                   // value holds group or NA
  bool share_across_entries = false;
  double alpha = 0.3;
  double tol = 1e-4;
  int max_outer = 200;
  double inner_tol = 1e-7;
  int inner_max_iter = 500;
  std::uint64_t seed = 1;
  std::vector<InitEntry> init;
  std::vector<std::pair<std::string, CovariateGenerator>> covariates;

  /// Options for qreml built from alpha, the outer and the inner thresholds.
  QremlOptions qreml_options() const;
  /// Covariate names required by the formulas (including by-factors).
  std::vector<std::string> covariate_names() const;
};

ModelConfig parse_config(const std::string& text);
ModelConfig load_config(const std::string& path);

/// Canonical text form; parse_config(print_config(c)) prints identically.
std::string print_config(const ModelConfig& c);

/// Initial smoothing parameters: block defaults, then the global override,
/// then per-label overrides.
Vector initial_lambda(const ModelConfig& c, const PenaltyModel& penalties);

/// Groups from map entries and share_across_entries; unmapped blocks get
/// their own group.
LambdaMap lambda_map(const ModelConfig& c, const PenaltyModel& penalties);

/// Default starting values overridden by init entries.
Vector initial_theta(const ModelConfig& c, const HmmModel& model);

/// True when label (e.g. "gamma12.s(tday)") is addressed by key, either in
/// full or without its entry prefix.
bool label_matches(const std::string& label, const std::string& key);

}  // namespace mshmm
