#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "softs/data.hpp"
#include "softs/model.hpp"
#include "softs/train.hpp"

namespace softs {

// Everything a training run needs. The JSON form is a flat object whose keys
// are the CLI flag names:
//   data, out, seed, lookback, horizon, channels, hidden, core, layers,
//   pooling, revin, baseline, learning_rate, epochs, batch_size, patience,
//   split_counts, split_ratios, threads
// Unknown keys are rejected.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  SplitSpec split;
  std::string data;
  std::string out;
  // 0 = take the channel count from the data.
  std::size_t channels = 0;
  int threads = 0;

  // Sets the single seed used for initialization, shuffling and pooling.
  void set_seed(std::uint64_t seed);
};

RunConfig run_config_from_json(const nlohmann::json& doc);
RunConfig load_run_config(const std::string& path);

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& doc);

nlohmann::json to_json(const SplitSpec& spec);
SplitSpec split_spec_from_json(const nlohmann::json& doc);

// Parses a comma separated list such as "8545,2881,2881".
std::vector<double> parse_number_list(const std::string& text);

}  // namespace softs
