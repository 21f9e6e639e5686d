#pragma once

#include <cstdint>
#include <vector>

#include "softs/nn.hpp"
#include "softs/rng.hpp"
#include "softs/star.hpp"
#include "softs/tensor.hpp"

namespace softs {

struct ModelConfig {
  std::size_t lookback = 96;
  std::size_t horizon = 96;
  std::size_t channels = 7;
  std::size_t hidden = 128;
  std::size_t core = 64;
  std::size_t layers = 2;
  PoolingKind pooling = PoolingKind::stochastic;
  bool use_revin = true;
  bool baseline = false;
  std::uint64_t seed = 2024;

  // Throws Error(config) naming the first violated constraint.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline constexpr double kRevinEps = 1e-5;

// Per (batch, channel) window statistics removed before the network and
// restored on its output.
template <typename T>
struct RevinState {
  BasicTensor<T> mean;  // B x C
  BasicTensor<T> std;   // B x C, sqrt(var + eps)
};

// (B x L x C) -> normalized window and its statistics. Population variance.
template <typename T>
std::pair<BasicTensor<T>, RevinState<T>> revin_normalize(const BasicTensor<T>& x);

// (B x H x C) prediction * std + mean, per (batch, channel).
template <typename T>
BasicTensor<T> revin_denormalize(const BasicTensor<T>& y, const RevinState<T>& state);

// Series embedding -> N STAR blocks -> linear head, wrapped in reversible
// instance normalization. Maps (B x L x C) lookback windows to (B x H x C).
template <typename T>
class SoftsModel {
 public:
  struct Cache {
    RevinState<T> revin;
    BasicTensor<T> embed_input;  // B x C x L
    std::vector<typename StarBlock<T>::Cache> blocks;
    BasicTensor<T> head_input;   // B x C x d
  };

  explicit SoftsModel(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }

  // `replay` reuses the stochastic channel selections recorded in a previous
  // cache, making training-mode forward a deterministic function of the input.
  BasicTensor<T> forward(const BasicTensor<T>& x, bool training, Rng* rng, Cache* cache = nullptr,
                         const Cache* replay = nullptr) const;

  // Accumulates gradients of every parameter given dLoss/dPrediction.
  void backward(const Cache& cache, const BasicTensor<T>& grad_out);

  ParamList<T> parameters();
  std::size_t count_params() const;
  void zero_grad();

  LinearLayer<T>& embedding() { return embedding_; }
  LinearLayer<T>& head() { return head_; }
  std::vector<StarBlock<T>>& blocks() { return blocks_; }

 private:
  ModelConfig config_;
  LinearLayer<T> embedding_;
  std::vector<StarBlock<T>> blocks_;
  LinearLayer<T> head_;
};

// (B x R x C) <-> (B x C x R).
template <typename T>
BasicTensor<T> swap_last_axes(const BasicTensor<T>& x);

}  // namespace softs
