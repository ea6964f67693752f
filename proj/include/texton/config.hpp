#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "texton/ensemble.hpp"
#include "texton/imgproc.hpp"
#include "texton/rf.hpp"
#include "texton/training.hpp"

// Flat "key = value" run configuration. Defaults come in two bundles:
// "paper" (full-size model and training protocol) and "desk" (a small
// configuration that trains on one core in minutes). A config file and then
// command-line flags override the bundle; unknown keys are an error.

namespace texton {

struct RunConfig {
  std::string scale = "paper";
  std::string protocol;  // optional preset: fmd, dtd, kth, minc, gtos, gtosm
  std::uint64_t seed = 42;
  int workers = 1;

  std::string dataset_root;
  int n_splits = 10;
  double train_fraction = 0.75;
  std::string norm = "auto";  // "auto": stats from the train split; "fixed": below
  AugmentConfig augment;

  ModelConfig model;
  TrainConfig train;
  RfConfig rf;

  static RunConfig defaults(const std::string& scale);

  // Training-protocol preset per benchmark; throws ConfigError on unknown
  // names.
  void apply_protocol(const std::string& name);

  // Assign one key; ConfigError on unknown key or unparsable value.
  void set(const std::string& key, const std::string& value);

  // Canonical text form: every key, fixed order, round-trippable values.
  std::string to_text() const;

  void validate() const;
};

// Parse a config file of "key = value" lines ('#' comments). Applied on top
// of the current values.
void apply_config_file(RunConfig& cfg, const std::filesystem::path& file);

// Peek a config file for its run.scale value (empty when absent), so the
// right default bundle can be built before applying the file.
std::string peek_scale(const std::filesystem::path& file);

// Stable identifier derived from the config content, not the clock.
std::string run_id_for(const RunConfig& cfg, const std::string& kind);

}  // namespace texton
