#pragma once

// Flat key=value run configuration. '#' starts a comment; unknown or
// repeated keys are errors that name the key and line.

#include <filesystem>
#include <string>
#include <vector>

#include "dbm/data.hpp"
#include "dbm/model.hpp"
#include "dbm/train.hpp"

namespace dbm {

struct RunConfig {
  ModelConfig model;
  Schedule schedule;
  AdamWConfig adamw;
  std::size_t batch_size = 8;
  // synthetic corpus sizes and clip dimensions
  std::size_t synth_train = 200;
  std::size_t synth_val = 50;
  std::size_t synth_test = 50;
  SynthDims synth_dims;
};

RunConfig parse_config(const std::string& text, const std::string& origin = "<config>");
RunConfig load_config(const std::filesystem::path& path);
// Sets one key; throws ConfigError for unknown keys or bad values.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);
// Every key with its current value, in a stable order; parse_config reads it back.
std::string format_config(const RunConfig& config);
std::vector<std::string> config_keys();

}  // namespace dbm
