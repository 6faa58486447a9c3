#pragma once

#include <string>

#include "voxproto/pipeline.hpp"
#include "voxproto/synth.hpp"

namespace voxproto {

// Everything a CLI run needs: pipeline hyperparameters plus synthesis
// settings, sharing one grid spec. Parsed from plain `key = value` lines
// with '#' comments; unknown keys are rejected.
struct RunConfig {
  PipelineConfig pipeline;
  SynthConfig synth;
  int threads = 0;  // 0 = hardware concurrency

  RunConfig();
};

RunConfig parse_config_file(const std::string& path);
void apply_config_entry(RunConfig& config, const std::string& key,
                        const std::string& value);  // throws ConfigError
std::string dump_config(const RunConfig& config);

}  // namespace voxproto
