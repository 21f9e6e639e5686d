#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <vector>

#include "softs/tensor.hpp"

namespace softs {

// A multivariate series as read from disk: T rows (time) by C channels.
struct RawDataset {
  std::vector<std::string> timestamps;
  std::vector<std::string> channel_names;
  std::vector<float> values;  // row-major T x C

  std::size_t rows() const { return timestamps.size(); }
  std::size_t channels() const { return channel_names.size(); }
  float at(std::size_t t, std::size_t c) const { return values[t * channels() + c]; }
};

// CSV with a header row whose first column is "date"; every other column is
// a numeric channel. Missing or malformed cells are errors.
RawDataset load_csv(const std::filesystem::path& path);
RawDataset parse_csv(std::istream& in, const std::string& source = "<stream>");

struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  friend bool operator==(const IndexRange&, const IndexRange&) = default;
};

// Chronological train/validation/test split. Explicit point counts take
// precedence over ratios; with ratios the validation share is the remainder
// after floor(T * train) and floor(T * test).
struct SplitSpec {
  std::optional<std::array<std::size_t, 3>> counts;
  std::array<double, 3> ratios{0.7, 0.1, 0.2};

  friend bool operator==(const SplitSpec&, const SplitSpec&) = default;
};

// Window-source ranges. Validation and test ranges start `lookback` points
// before their nominal boundary so their first target is the first point of
// the split.
struct SplitRanges {
  IndexRange train;
  IndexRange val;
  IndexRange test;
};

SplitRanges split(std::size_t total_rows, const SplitSpec& spec, std::size_t lookback,
                  std::size_t horizon);

// Number of (lookback, horizon) windows whose rows lie inside `range`.
std::size_t window_count(IndexRange range, std::size_t lookback, std::size_t horizon);

// Per-channel standardization fitted on the training rows.
struct Scaler {
  std::vector<double> mean;
  std::vector<double> std;

  float transform(float value, std::size_t channel) const;
  float inverse(float value, std::size_t channel) const;
};

inline constexpr double kScalerStdFloor = 1e-8;

Scaler fit_scaler(const RawDataset& ds, IndexRange train);
RawDataset apply_scaler(const RawDataset& ds, const Scaler& scaler);
RawDataset invert_scaler(const RawDataset& ds, const Scaler& scaler);

// Fits on `train` and returns the scaled copy alongside the statistics.
std::pair<RawDataset, Scaler> standardize(const RawDataset& ds, IndexRange train);

struct SeriesBatch {
  Tensor x;                         // B x L x C
  Tensor y;                         // B x H x C
  std::vector<std::size_t> starts;  // first row of each window
};

// Sliding-window batches over one range. Every valid start index appears once
// per epoch; the final batch may be short. Shuffling is a deterministic
// function of (seed, epoch).
class BatchStream {
 public:
  BatchStream(const RawDataset& ds, IndexRange range, std::size_t lookback, std::size_t horizon,
              std::size_t batch_size, bool shuffle, std::uint64_t seed);

  std::size_t windows() const { return order_.size(); }
  std::size_t batches() const { return (order_.size() + batch_size_ - 1) / batch_size_; }

  // Rewinds and (if shuffling) reorders for the given epoch.
  void start_epoch(std::size_t epoch);
  std::optional<SeriesBatch> next();

 private:
  const RawDataset* ds_;
  IndexRange range_;
  std::size_t lookback_;
  std::size_t horizon_;
  std::size_t batch_size_;
  bool shuffle_;
  std::uint64_t seed_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

// Builds the batch for explicit window starts.
SeriesBatch make_batch(const RawDataset& ds, std::span<const std::size_t> starts,
                       std::size_t lookback, std::size_t horizon);

// Scaled dataset plus the split ranges and statistics used to produce it.
struct PreparedData {
  RawDataset scaled;
  Scaler scaler;
  SplitRanges ranges;
};

PreparedData prepare(const RawDataset& raw, const SplitSpec& spec, std::size_t lookback,
                     std::size_t horizon);

}  // namespace softs
