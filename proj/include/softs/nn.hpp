#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "softs/tensor.hpp"

namespace softs {

template <typename T>
struct NamedParam {
  std::string name;
  BasicTensor<T>* tensor;
};

template <typename T>
using ParamList = std::vector<NamedParam<T>>;

enum class InitScheme {
  uniform_fan_in,  // U(-1/sqrt(shape[0]), +1/sqrt(shape[0]))
  zeros,
};

template <typename T>
BasicTensor<T> init_params(Shape shape, InitScheme scheme, std::uint64_t seed);

// y = x * weight + bias applied to the trailing axis; leading axes are folded
// into rows, so rank-3 (B x C x in) inputs map to (B x C x out).
template <typename T>
class LinearLayer {
 public:
  LinearLayer() = default;
  LinearLayer(std::size_t in, std::size_t out);

  std::size_t in_features() const { return weight_.extent(0); }
  std::size_t out_features() const { return weight_.extent(1); }
  std::size_t param_count() const { return weight_.size() + bias_.size(); }

  void init(std::uint64_t seed);

  BasicTensor<T> forward(const BasicTensor<T>& x) const;

  // Accumulates weight/bias gradients; returns the gradient w.r.t. x.
  BasicTensor<T> backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_out);

  BasicTensor<T>& weight() { return weight_; }
  BasicTensor<T>& bias() { return bias_; }
  const BasicTensor<T>& weight() const { return weight_; }
  const BasicTensor<T>& bias() const { return bias_; }

  void collect(ParamList<T>& out, const std::string& prefix);

 private:
  BasicTensor<T> weight_;
  BasicTensor<T> bias_;
};

// second(gelu(first(x))).
template <typename T>
class TwoLayerMlp {
 public:
  struct Cache {
    BasicTensor<T> input;
    BasicTensor<T> hidden_pre;
    BasicTensor<T> hidden;
  };

  TwoLayerMlp() = default;
  TwoLayerMlp(std::size_t in, std::size_t hidden, std::size_t out);

  std::size_t param_count() const { return first_.param_count() + second_.param_count(); }

  // Seeds are derived per layer from `seed`.
  void init(std::uint64_t seed);

  BasicTensor<T> forward(const BasicTensor<T>& x, Cache* cache = nullptr) const;
  BasicTensor<T> backward(const Cache& cache, const BasicTensor<T>& grad_out);

  LinearLayer<T>& first() { return first_; }
  LinearLayer<T>& second() { return second_; }
  const LinearLayer<T>& first() const { return first_; }
  const LinearLayer<T>& second() const { return second_; }

  void collect(ParamList<T>& out, const std::string& prefix);

 private:
  LinearLayer<T> first_;
  LinearLayer<T> second_;
};

}  // namespace softs
