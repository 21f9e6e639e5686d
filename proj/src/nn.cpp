#include "softs/nn.hpp"

#include <cmath>

#include "softs/kernels.hpp"
#include "softs/rng.hpp"

namespace softs {

template <typename T>
BasicTensor<T> init_params(Shape shape, InitScheme scheme, std::uint64_t seed) {
  BasicTensor<T> t(shape);
  if (scheme == InitScheme::zeros) return t;
  const double bound = 1.0 / std::sqrt(static_cast<double>(shape[0]));
  Rng rng(seed);
  for (T& v : t.data()) v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

template <typename T>
LinearLayer<T>::LinearLayer(std::size_t in, std::size_t out)
    : weight_(Shape{in, out}), bias_(Shape{out}) {}

template <typename T>
void LinearLayer<T>::init(std::uint64_t seed) {
  weight_ = init_params<T>(weight_.shape(), InitScheme::uniform_fan_in, seed);
  bias_ = init_params<T>(bias_.shape(), InitScheme::zeros, seed);
}

template <typename T>
BasicTensor<T> LinearLayer<T>::forward(const BasicTensor<T>& x) const {
  if (x.shape().back() != in_features()) {
    throw Error(ErrorCode::dimension, "linear: input " + x.shape().str() +
                                          " does not match weight " + weight_.shape().str());
  }
  const std::size_t rows = x.shape().leading();
  const std::size_t out = out_features();
  BasicTensor<T> y(x.shape().with_back(out));
  T* dst = y.raw();
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(bias_.raw(), out, dst + r * out);
  kernels::gemm<T>(kernels::Op::none, kernels::Op::none, {x.raw(), rows, in_features(), in_features()},
                   {weight_.raw(), in_features(), out, out}, {dst, rows, out, out}, true);
  debug_check_finite(y, "linear");
  return y;
}

template <typename T>
BasicTensor<T> LinearLayer<T>::backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_out) {
  const std::size_t rows = x.shape().leading();
  const std::size_t in = in_features(), out = out_features();
  if (grad_out.shape().back() != out || grad_out.shape().leading() != rows) {
    throw Error(ErrorCode::dimension, "linear backward: gradient " + grad_out.shape().str() +
                                          " does not match input " + x.shape().str());
  }
  kernels::MatrixRef<const T> xm{x.raw(), rows, in, in};
  kernels::MatrixRef<const T> gm{grad_out.raw(), rows, out, out};
  kernels::gemm<T>(kernels::Op::transpose, kernels::Op::none, xm, gm,
                   {weight_.grad().data(), in, out, out}, true);
  kernels::accumulate_column_sums<T>(gm, bias_.grad().data());

  BasicTensor<T> dx(x.shape());
  kernels::gemm<T>(kernels::Op::none, kernels::Op::transpose, gm,
                   {weight_.raw(), in, out, out}, {dx.raw(), rows, in, in}, false);
  return dx;
}

template <typename T>
void LinearLayer<T>::collect(ParamList<T>& out, const std::string& prefix) {
  out.push_back({prefix + ".weight", &weight_});
  out.push_back({prefix + ".bias", &bias_});
}

template <typename T>
TwoLayerMlp<T>::TwoLayerMlp(std::size_t in, std::size_t hidden, std::size_t out)
    : first_(in, hidden), second_(hidden, out) {}

template <typename T>
void TwoLayerMlp<T>::init(std::uint64_t seed) {
  first_.init(mix_seed(seed, 0));
  second_.init(mix_seed(seed, 1));
}

template <typename T>
BasicTensor<T> TwoLayerMlp<T>::forward(const BasicTensor<T>& x, Cache* cache) const {
  BasicTensor<T> pre = first_.forward(x);
  BasicTensor<T> act = gelu(pre);
  BasicTensor<T> y = second_.forward(act);
  if (cache != nullptr) {
    cache->input = x;
    cache->hidden_pre = std::move(pre);
    cache->hidden = std::move(act);
  }
  return y;
}

template <typename T>
BasicTensor<T> TwoLayerMlp<T>::backward(const Cache& cache, const BasicTensor<T>& grad_out) {
  BasicTensor<T> d_hidden = second_.backward(cache.hidden, grad_out);
  BasicTensor<T> d_pre = gelu_backward(cache.hidden_pre, d_hidden);
  return first_.backward(cache.input, d_pre);
}

template <typename T>
void TwoLayerMlp<T>::collect(ParamList<T>& out, const std::string& prefix) {
  first_.collect(out, prefix + ".0");
  second_.collect(out, prefix + ".1");
}

template BasicTensor<float> init_params<float>(Shape, InitScheme, std::uint64_t);
template BasicTensor<double> init_params<double>(Shape, InitScheme, std::uint64_t);
template class LinearLayer<float>;
template class LinearLayer<double>;
template class TwoLayerMlp<float>;
template class TwoLayerMlp<double>;

}  // namespace softs
