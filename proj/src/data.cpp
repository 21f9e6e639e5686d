#include "softs/data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string_view>
#include <tuple>

#include "softs/rng.hpp"

namespace softs {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

RawDataset parse_csv(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) {
    throw Error(ErrorCode::format, source + ": missing header row");
  }
  std::string_view header_line = line;
  if (header_line.starts_with("\xEF\xBB\xBF")) header_line.remove_prefix(3);
  const auto header = split_fields(header_line);
  if (header.empty() || header[0] != "date") {
    throw Error(ErrorCode::format, source + ": header must start with a \"date\" column");
  }
  if (header.size() < 2) {
    throw Error(ErrorCode::format, source + ": header names no channels");
  }

  RawDataset ds;
  for (std::size_t i = 1; i < header.size(); ++i) ds.channel_names.emplace_back(header[i]);
  const std::size_t channels = ds.channel_names.size();

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw Error(ErrorCode::parse, source + ": row " + std::to_string(line_no) + " has " +
                                        std::to_string(fields.size()) + " fields, expected " +
                                        std::to_string(header.size()));
    }
    ds.timestamps.emplace_back(fields[0]);
    for (std::size_t c = 0; c < channels; ++c) {
      const std::string_view cell = fields[c + 1];
      double value = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
      if (cell.empty() || ec != std::errc{} || ptr != cell.data() + cell.size() ||
          !std::isfinite(value)) {
        throw Error(ErrorCode::parse, source + ": row " + std::to_string(line_no) + ", column " +
                                          std::to_string(c + 2) + " (" + ds.channel_names[c] +
                                          "): cannot parse \"" + std::string(cell) +
                                          "\" as a number");
      }
      ds.values.push_back(static_cast<float>(value));
    }
  }
  return ds;
}

RawDataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  return parse_csv(in, path.string());
}

std::size_t window_count(IndexRange range, std::size_t lookback, std::size_t horizon) {
  const std::size_t span = lookback + horizon;
  return range.size() >= span ? range.size() - span + 1 : 0;
}

SplitRanges split(std::size_t total_rows, const SplitSpec& spec, std::size_t lookback,
                  std::size_t horizon) {
  std::size_t n_train, n_val, n_test;
  if (spec.counts) {
    std::tie(n_train, n_val, n_test) =
        std::tuple((*spec.counts)[0], (*spec.counts)[1], (*spec.counts)[2]);
  } else {
    const auto& r = spec.ratios;
    for (double v : r) {
      if (!(v > 0.0)) throw Error(ErrorCode::config, "split ratios must all be positive");
    }
    const double sum = r[0] + r[1] + r[2];
    if (sum > 1.0 + 1e-9) throw Error(ErrorCode::config, "split ratios sum to more than 1");
    const auto t = static_cast<double>(total_rows);
    n_train = static_cast<std::size_t>(std::floor(t * r[0]));
    n_test = static_cast<std::size_t>(std::floor(t * r[2]));
    n_val = std::abs(sum - 1.0) < 1e-9 ? total_rows - n_train - n_test
                                       : static_cast<std::size_t>(std::floor(t * r[1]));
  }
  if (n_train == 0 || n_val == 0 || n_test == 0) {
    throw Error(ErrorCode::data, "split: every split needs at least one point (train=" +
                                     std::to_string(n_train) + ", val=" + std::to_string(n_val) +
                                     ", test=" + std::to_string(n_test) + ")");
  }
  if (n_train + n_val + n_test > total_rows) {
    throw Error(ErrorCode::data, "split: " + std::to_string(n_train + n_val + n_test) +
                                     " points requested but the dataset has " +
                                     std::to_string(total_rows));
  }
  if (n_train < lookback || n_train + n_val < lookback) {
    throw Error(ErrorCode::data, "split: training split shorter than the lookback window");
  }
  SplitRanges out;
  out.train = {0, n_train};
  out.val = {n_train - lookback, n_train + n_val};
  out.test = {n_train + n_val - lookback, n_train + n_val + n_test};
  const std::pair<const char*, IndexRange> named[] = {
      {"train", out.train}, {"val", out.val}, {"test", out.test}};
  for (const auto& [name, range] : named) {
    if (window_count(range, lookback, horizon) == 0) {
      throw Error(ErrorCode::data, std::string("split: ") + name + " range of " +
                                       std::to_string(range.size()) +
                                       " points holds no window of lookback " +
                                       std::to_string(lookback) + " + horizon " +
                                       std::to_string(horizon));
    }
  }
  return out;
}

float Scaler::transform(float value, std::size_t channel) const {
  return static_cast<float>((value - mean[channel]) / std[channel]);
}

float Scaler::inverse(float value, std::size_t channel) const {
  return static_cast<float>(value * std[channel] + mean[channel]);
}

Scaler fit_scaler(const RawDataset& ds, IndexRange train) {
  if (train.size() == 0 || train.end > ds.rows()) {
    throw Error(ErrorCode::data, "standardize: empty or out-of-range training rows");
  }
  const std::size_t channels = ds.channels();
  Scaler s{std::vector<double>(channels, 0.0), std::vector<double>(channels, 0.0)};
  const auto n = static_cast<double>(train.size());
  for (std::size_t c = 0; c < channels; ++c) {
    double sum = 0.0;
    for (std::size_t t = train.begin; t < train.end; ++t) sum += ds.at(t, c);
    const double mean = sum / n;
    double sq = 0.0;
    for (std::size_t t = train.begin; t < train.end; ++t) {
      const double d = ds.at(t, c) - mean;
      sq += d * d;
    }
    s.mean[c] = mean;
    s.std[c] = std::max(std::sqrt(sq / n), kScalerStdFloor);
  }
  return s;
}

RawDataset apply_scaler(const RawDataset& ds, const Scaler& scaler) {
  if (scaler.mean.size() != ds.channels()) {
    throw Error(ErrorCode::dimension, "scaler has " + std::to_string(scaler.mean.size()) +
                                          " channels, data has " + std::to_string(ds.channels()));
  }
  RawDataset out = ds;
  const std::size_t channels = ds.channels();
  for (std::size_t i = 0; i < out.values.size(); ++i)
    out.values[i] = scaler.transform(out.values[i], i % channels);
  return out;
}

RawDataset invert_scaler(const RawDataset& ds, const Scaler& scaler) {
  if (scaler.mean.size() != ds.channels()) {
    throw Error(ErrorCode::dimension, "scaler channel count does not match data");
  }
  RawDataset out = ds;
  const std::size_t channels = ds.channels();
  for (std::size_t i = 0; i < out.values.size(); ++i)
    out.values[i] = scaler.inverse(out.values[i], i % channels);
  return out;
}

std::pair<RawDataset, Scaler> standardize(const RawDataset& ds, IndexRange train) {
  Scaler scaler = fit_scaler(ds, train);
  return {apply_scaler(ds, scaler), std::move(scaler)};
}

SeriesBatch make_batch(const RawDataset& ds, std::span<const std::size_t> starts,
                       std::size_t lookback, std::size_t horizon) {
  const std::size_t channels = ds.channels();
  const std::size_t b = starts.size();
  SeriesBatch batch{Tensor(Shape{b, lookback, channels}), Tensor(Shape{b, horizon, channels}),
                    std::vector<std::size_t>(starts.begin(), starts.end())};
  for (std::size_t i = 0; i < b; ++i) {
    const std::size_t s = starts[i];
    if (s + lookback + horizon > ds.rows()) {
      throw Error(ErrorCode::data, "window at row " + std::to_string(s) + " runs past the data");
    }
    std::copy_n(ds.values.data() + s * channels, lookback * channels,
                batch.x.raw() + i * lookback * channels);
    std::copy_n(ds.values.data() + (s + lookback) * channels, horizon * channels,
                batch.y.raw() + i * horizon * channels);
  }
  return batch;
}

BatchStream::BatchStream(const RawDataset& ds, IndexRange range, std::size_t lookback,
                         std::size_t horizon, std::size_t batch_size, bool shuffle,
                         std::uint64_t seed)
    : ds_(&ds),
      range_(range),
      lookback_(lookback),
      horizon_(horizon),
      batch_size_(batch_size),
      shuffle_(shuffle),
      seed_(seed) {
  if (batch_size_ == 0) throw Error(ErrorCode::config, "batch size must be >= 1");
  if (range.end > ds.rows()) throw Error(ErrorCode::data, "window range runs past the data");
  const std::size_t n = window_count(range, lookback, horizon);
  if (n == 0) {
    throw Error(ErrorCode::data, "range [" + std::to_string(range.begin) + ", " +
                                     std::to_string(range.end) + ") holds no window");
  }
  order_.resize(n);
  start_epoch(0);
}

void BatchStream::start_epoch(std::size_t epoch) {
  std::iota(order_.begin(), order_.end(), range_.begin);
  if (shuffle_) {
    Rng rng(mix_seed(seed_, epoch));
    for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng.below(i)]);
  }
  cursor_ = 0;
}

std::optional<SeriesBatch> BatchStream::next() {
  if (cursor_ >= order_.size()) return std::nullopt;
  const std::size_t count = std::min(batch_size_, order_.size() - cursor_);
  SeriesBatch batch =
      make_batch(*ds_, std::span(order_).subspan(cursor_, count), lookback_, horizon_);
  cursor_ += count;
  return batch;
}

PreparedData prepare(const RawDataset& raw, const SplitSpec& spec, std::size_t lookback,
                     std::size_t horizon) {
  PreparedData out;
  out.ranges = split(raw.rows(), spec, lookback, horizon);
  auto [scaled, scaler] = standardize(raw, out.ranges.train);
  out.scaled = std::move(scaled);
  out.scaler = std::move(scaler);
  return out;
}

}  // namespace softs
