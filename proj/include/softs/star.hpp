#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "softs/nn.hpp"
#include "softs/rng.hpp"
#include "softs/tensor.hpp"

namespace softs {

enum class PoolingKind { mean, max, weighted, stochastic };

std::string_view to_string(PoolingKind kind);
std::optional<PoolingKind> parse_pooling(std::string_view name);

// Pooled summary of all channels: values[b, j] for each batch element b and
// core dimension j. `selected` records the channel that produced each value
// under max pooling and stochastic training (row-major B x d').
template <typename T>
struct CoreRepresentation {
  BasicTensor<T> values;
  std::vector<std::uint32_t> selected;
  BasicTensor<T> probs;  // softmax over channels; stochastic pooling only
  bool sampled = false;
};

// Channel aggregation for a (B x C x d') activation. Weighted pooling owns a
// learnable score per channel, normalized with a softmax over channels.
template <typename T>
class Pooling {
 public:
  Pooling() = default;
  Pooling(PoolingKind kind, std::size_t channels);

  PoolingKind kind() const { return kind_; }
  bool has_weights() const { return kind_ == PoolingKind::weighted; }

  BasicTensor<T>& scores() { return scores_; }
  const BasicTensor<T>& scores() const { return scores_; }

  // Effective channel weights softmax(scores); weighted pooling only.
  BasicTensor<T> channel_weights() const;

  // `replay`, when non-empty, fixes the stochastic-training channel choice per
  // (batch, dimension) instead of drawing from `rng`.
  CoreRepresentation<T> forward(const BasicTensor<T>& activations, bool training, Rng* rng,
                                std::span<const std::uint32_t> replay = {}) const;

  // Gradient w.r.t. the activations; accumulates the score gradient.
  BasicTensor<T> backward(const BasicTensor<T>& activations, const CoreRepresentation<T>& core,
                          const BasicTensor<T>& grad_core);

 private:
  PoolingKind kind_ = PoolingKind::mean;
  BasicTensor<T> scores_;
};

// Free-function form of Pooling::forward for the non-learnable kinds and for
// weighted pooling with uniform scores.
template <typename T>
CoreRepresentation<T> pool(const BasicTensor<T>& activations, PoolingKind kind, bool training,
                           Rng* rng);

// One STar Aggregate-Redistribute block on (B x C x d) series embeddings:
//   core = pool(mlp1(S));  F = [S | core repeated per channel];  S' = mlp2(F) + S.
// In baseline mode the block is channel independent: S' = mlp2(S) + S with a
// d -> d -> d MLP and no core.
template <typename T>
class StarBlock {
 public:
  struct Cache {
    typename TwoLayerMlp<T>::Cache mlp1;
    typename TwoLayerMlp<T>::Cache mlp2;
    BasicTensor<T> activations;  // mlp1 output, the pooling input
    CoreRepresentation<T> core;
  };

  StarBlock() = default;
  StarBlock(std::size_t hidden, std::size_t core, std::size_t channels, PoolingKind pooling,
            bool baseline);

  bool baseline() const { return baseline_; }
  std::size_t hidden() const { return hidden_; }
  std::size_t core_dim() const { return core_; }
  std::size_t param_count() const;

  void init(std::uint64_t seed);

  BasicTensor<T> forward(const BasicTensor<T>& series, bool training, Rng* rng,
                         Cache* cache = nullptr, const Cache* replay = nullptr) const;

  // Accumulates parameter gradients; returns the gradient w.r.t. the input.
  BasicTensor<T> backward(const Cache& cache, const BasicTensor<T>& grad_out);

  TwoLayerMlp<T>& mlp1() { return mlp1_; }
  TwoLayerMlp<T>& mlp2() { return mlp2_; }
  Pooling<T>& pooling() { return pooling_; }
  const Pooling<T>& pooling() const { return pooling_; }

  void collect(ParamList<T>& out, const std::string& prefix);

 private:
  std::size_t hidden_ = 0;
  std::size_t core_ = 0;
  bool baseline_ = false;
  TwoLayerMlp<T> mlp1_;
  TwoLayerMlp<T> mlp2_;
  Pooling<T> pooling_;
};

}  // namespace softs
