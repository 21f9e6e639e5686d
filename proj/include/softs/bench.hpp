#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "softs/star.hpp"

namespace softs {

struct BenchOptions {
  std::vector<std::size_t> channels{64, 128, 256, 512, 1024};
  std::size_t repeat = 7;
  std::size_t batch = 16;
  std::size_t lookback = 96;
  std::size_t horizon = 720;
  std::size_t hidden = 256;
  std::size_t core = 128;
  std::size_t layers = 2;
  PoolingKind pooling = PoolingKind::stochastic;
  std::uint64_t seed = 2024;
};

struct BenchRow {
  std::size_t channels = 0;
  double median_ms = 0.0;
  long peak_rss_delta_kb = 0;
};

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

struct BenchReport {
  BenchOptions options;
  std::vector<BenchRow> rows;
  LinearFit fit;
  // t(C[i+1]) / t(C[i]) for adjacent entries.
  std::vector<double> ratios;
};

// Least-squares y = slope * x + intercept and its coefficient of determination.
LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

// Times `repeat` training-shaped passes (forward + backward on random data)
// per channel count and reports the median wall time of each.
BenchReport run_scaling_bench(const BenchOptions& options);

nlohmann::json to_json(const BenchReport& report);

}  // namespace softs
