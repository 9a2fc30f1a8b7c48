#pragma once

#include <string>
#include <vector>

#include "colpro/harness.hpp"
#include "colpro/task_suite.hpp"

namespace colpro {

/// Everything one experiment needs. Populated from defaults, then a flat
/// key-value config file, then command-line overrides, in that order. Every
/// key has a documented default; unknown keys are rejected outright.
struct ExperimentConfig {
  SuiteConfig suite;
  std::string suite_path;  // load a pre-generated suite instead of building
  TrainConfig train;
  std::string out_dir = "out";
  std::vector<std::string> order;  // empty: the family's documented order
  std::string sweep_axis = "prompt-len";  // prompt-len | layers
  std::vector<std::uint64_t> study_seeds = {1, 2, 3, 4, 5};

  /// Resolves derived fields (vocabulary/codebook geometry) against a suite.
  void bind_to_suite(const Suite& suite_ref);
};

ExperimentConfig default_experiment_config();

/// Applies one key=value pair; throws ConfigError naming any unknown key.
void apply_config_entry(ExperimentConfig& cfg, const std::string& key,
                        const std::string& value);

/// Flat "key = value" file, '#' comments. Strict keys, typed values.
ExperimentConfig load_config_file(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text);

/// All recognized keys with their documented defaults (for --help and docs).
std::vector<std::pair<std::string, std::string>> config_key_defaults();

}  // namespace colpro
