#pragma once

#include <string>

#include "etl/training.hpp"

namespace etl {

// Flat `key = value` run configuration. Every key has a default; unknown keys
// are rejected; parse(print(c)) == c.
struct RunConfig {
  TrainConfig train;
  double train_ratio = 1.0;
  std::string dataset;     // prepared dataset directory
  std::string out;         // run output directory
  std::string checkpoint;  // model file (eval/analyze)

  bool operator==(const RunConfig& o) const;
};

// Parses one `key = value` assignment into cfg (also used by CLI overrides).
void config_set(RunConfig& cfg, const std::string& key, const std::string& value);

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);
std::string print_config(const RunConfig& cfg);
void save_config(const RunConfig& cfg, const std::string& path);

}  // namespace etl
