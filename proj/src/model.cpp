#include "softs/model.hpp"

#include <cmath>
#include <string>

namespace softs {

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::config, what); };
  if (lookback < 1) fail("lookback must be >= 1");
  if (horizon < 1) fail("horizon must be >= 1");
  if (channels < 1) fail("channels must be >= 1");
  if (hidden < 1) fail("hidden must be >= 1");
  if (core < 1) fail("core must be >= 1");
  if (core > hidden) {
    fail("core (" + std::to_string(core) + ") must not exceed hidden (" + std::to_string(hidden) +
         ")");
  }
}

template <typename T>
BasicTensor<T> swap_last_axes(const BasicTensor<T>& x) {
  if (x.rank() != 3) {
    throw Error(ErrorCode::dimension, "swap_last_axes: expected rank 3, got " + x.shape().str());
  }
  const std::size_t batch = x.extent(0), rows = x.extent(1), cols = x.extent(2);
  BasicTensor<T> y(Shape{batch, cols, rows});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) y.at(b, c, r) = x.at(b, r, c);
  return y;
}

template <typename T>
std::pair<BasicTensor<T>, RevinState<T>> revin_normalize(const BasicTensor<T>& x) {
  if (x.rank() != 3 || x.extent(1) < 1) {
    throw Error(ErrorCode::dimension, "revin: expected (batch x lookback x channels), got " +
                                          x.shape().str());
  }
  const std::size_t batch = x.extent(0), len = x.extent(1), channels = x.extent(2);
  RevinState<T> state{BasicTensor<T>(Shape{batch, channels}), BasicTensor<T>(Shape{batch, channels})};
  BasicTensor<T> out(x.shape());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      double sum = 0.0;
      for (std::size_t t = 0; t < len; ++t) sum += x.at(b, t, c);
      const double mean = sum / static_cast<double>(len);
      double sq = 0.0;
      for (std::size_t t = 0; t < len; ++t) {
        const double d = x.at(b, t, c) - mean;
        sq += d * d;
      }
      const double stdev = std::sqrt(sq / static_cast<double>(len) + kRevinEps);
      state.mean.at(b, c) = static_cast<T>(mean);
      state.std.at(b, c) = static_cast<T>(stdev);
      for (std::size_t t = 0; t < len; ++t)
        out.at(b, t, c) = static_cast<T>((x.at(b, t, c) - mean) / stdev);
    }
  }
  return {std::move(out), std::move(state)};
}

template <typename T>
BasicTensor<T> revin_denormalize(const BasicTensor<T>& y, const RevinState<T>& state) {
  if (y.rank() != 3 || state.mean.rank() != 2 || y.extent(0) != state.mean.extent(0) ||
      y.extent(2) != state.mean.extent(1)) {
    throw Error(ErrorCode::dimension, "revin: prediction " + y.shape().str() +
                                          " does not match statistics " + state.mean.shape().str());
  }
  BasicTensor<T> out(y.shape());
  for (std::size_t b = 0; b < y.extent(0); ++b)
    for (std::size_t t = 0; t < y.extent(1); ++t)
      for (std::size_t c = 0; c < y.extent(2); ++c)
        out.at(b, t, c) = y.at(b, t, c) * state.std.at(b, c) + state.mean.at(b, c);
  return out;
}

template <typename T>
SoftsModel<T>::SoftsModel(const ModelConfig& config)
    : config_(config),
      embedding_(config.lookback, config.hidden),
      head_(config.hidden, config.horizon) {
  config_.validate();
  embedding_.init(mix_seed(config_.seed, 0));
  head_.init(mix_seed(config_.seed, 1));
  blocks_.reserve(config_.layers);
  for (std::size_t i = 0; i < config_.layers; ++i) {
    blocks_.emplace_back(config_.hidden, config_.core, config_.channels, config_.pooling,
                         config_.baseline);
    blocks_.back().init(mix_seed(config_.seed, 100 + i));
  }
}

template <typename T>
BasicTensor<T> SoftsModel<T>::forward(const BasicTensor<T>& x, bool training, Rng* rng,
                                      Cache* cache, const Cache* replay) const {
  if (x.rank() != 3 || x.extent(1) != config_.lookback || x.extent(2) != config_.channels) {
    throw Error(ErrorCode::dimension,
                "model: expected (batch x " + std::to_string(config_.lookback) + " x " +
                    std::to_string(config_.channels) + "), got " + x.shape().str());
  }
  RevinState<T> revin;
  BasicTensor<T> series;
  if (config_.use_revin) {
    auto [normalized, state] = revin_normalize(x);
    series = swap_last_axes(normalized);
    revin = std::move(state);
  } else {
    series = swap_last_axes(x);
  }

  BasicTensor<T> s = embedding_.forward(series);
  if (cache != nullptr) {
    cache->embed_input = std::move(series);
    cache->blocks.resize(blocks_.size());
  }
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const typename StarBlock<T>::Cache* fixed =
        (replay != nullptr && i < replay->blocks.size()) ? &replay->blocks[i] : nullptr;
    s = blocks_[i].forward(s, training, rng, cache ? &cache->blocks[i] : nullptr, fixed);
  }
  BasicTensor<T> y = swap_last_axes(head_.forward(s));
  if (cache != nullptr) cache->head_input = std::move(s);
  if (config_.use_revin) {
    y = revin_denormalize(y, revin);
    if (cache != nullptr) cache->revin = std::move(revin);
  }
  debug_check_finite(y, "model");
  return y;
}

template <typename T>
void SoftsModel<T>::backward(const Cache& cache, const BasicTensor<T>& grad_out) {
  BasicTensor<T> g = grad_out;
  if (config_.use_revin) {
    for (std::size_t b = 0; b < g.extent(0); ++b)
      for (std::size_t t = 0; t < g.extent(1); ++t)
        for (std::size_t c = 0; c < g.extent(2); ++c) g.at(b, t, c) *= cache.revin.std.at(b, c);
  }
  BasicTensor<T> ds = head_.backward(cache.head_input, swap_last_axes(g));
  for (std::size_t i = blocks_.size(); i-- > 0;) ds = blocks_[i].backward(cache.blocks[i], ds);
  embedding_.backward(cache.embed_input, ds);
}

template <typename T>
ParamList<T> SoftsModel<T>::parameters() {
  ParamList<T> out;
  embedding_.collect(out, "embedding");
  for (std::size_t i = 0; i < blocks_.size(); ++i)
    blocks_[i].collect(out, "blocks." + std::to_string(i));
  head_.collect(out, "head");
  return out;
}

template <typename T>
std::size_t SoftsModel<T>::count_params() const {
  std::size_t n = embedding_.param_count() + head_.param_count();
  for (const auto& b : blocks_) n += b.param_count();
  return n;
}

template <typename T>
void SoftsModel<T>::zero_grad() {
  for (auto& p : parameters()) p.tensor->zero_grad();
}

#define SOFTS_INSTANTIATE(T)                                                               \
  template BasicTensor<T> swap_last_axes<T>(const BasicTensor<T>&);                        \
  template std::pair<BasicTensor<T>, RevinState<T>> revin_normalize<T>(const BasicTensor<T>&); \
  template BasicTensor<T> revin_denormalize<T>(const BasicTensor<T>&, const RevinState<T>&); \
  template class SoftsModel<T>;

SOFTS_INSTANTIATE(float)
SOFTS_INSTANTIATE(double)

#undef SOFTS_INSTANTIATE

}  // namespace softs
