#pragma once

#include <string>
#include <vector>

#include "ffnlab/model.hpp"
#include "ffnlab/schedule.hpp"

namespace ffnlab {

// Full description of one run, mirroring the sectioned `key = value` config
// file format (see docs/config.md for the grammar). Unknown sections or keys
// are rejected at parse time.
struct RunConfig {
  std::string name = "run";

  // [model]
  ModelConfig model;

  // [schedule]
  TrainSchedule schedule;

  // [data]
  std::string train_corpus;
  std::string test_corpus;
  std::string tokenizer_file;
  std::string cache_dir;
  int batch_size = 16;

  // [run]
  uint64_t seed = 1;
  std::string output_dir = "out";
  int log_stride = 1;
  int checkpoint_stride = 0;

  void validate() const;
  std::string serialize() const;

  static RunConfig parse(const std::string& text);
  static RunConfig parse_file(const std::string& path);
};

struct PresetEntry {
  RunConfig config;
  long long published_params_millions = 0;  // Table 1/3 "# Params"
  std::string table;                        // "table1" or "table3"
};

// The shipped experiment matrix: ten Table 1 rows and five Table 3 rows.
// Parameter counts are verified against the published values at load.
std::vector<PresetEntry> experiment_matrix();

const PresetEntry* find_preset(const std::vector<PresetEntry>& matrix,
                               const std::string& name);

}  // namespace ffnlab
