#include "softs/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <sstream>

#include "softs/kernels.hpp"

namespace softs {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::dimension: return "E_DIMENSION";
    case ErrorCode::non_finite: return "E_NON_FINITE";
    case ErrorCode::empty_channels: return "E_EMPTY_CHANNELS";
    case ErrorCode::parse: return "E_PARSE";
    case ErrorCode::format: return "E_FORMAT";
    case ErrorCode::data: return "E_DATA";
    case ErrorCode::config: return "E_CONFIG";
    case ErrorCode::corruption: return "E_CORRUPTION";
    case ErrorCode::io: return "E_IO";
    case ErrorCode::divergence: return "E_DIVERGENCE";
  }
  return "E_UNKNOWN";
}

// --- Shape -------------------------------------------------------------------

Shape::Shape(std::initializer_list<std::size_t> dims) {
  if (dims.size() == 0 || dims.size() > kMaxRank) {
    throw Error(ErrorCode::dimension,
                "tensor rank must be 1-3, got " + std::to_string(dims.size()));
  }
  std::copy(dims.begin(), dims.end(), dims_.begin());
  rank_ = dims.size();
}

std::size_t Shape::numel() const noexcept {
  if (rank_ == 0) return 0;
  std::size_t n = 1;
  for (std::size_t i = 0; i < rank_; ++i) n *= dims_[i];
  return n;
}

std::size_t Shape::leading() const noexcept {
  std::size_t n = 1;
  for (std::size_t i = 0; i + 1 < rank_; ++i) n *= dims_[i];
  return n;
}

Shape Shape::with_back(std::size_t extent) const {
  Shape s = *this;
  s.dims_[rank_ - 1] = extent;
  return s;
}

std::string Shape::str() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < rank_; ++i) os << (i ? "x" : "") << dims_[i];
  os << ']';
  return os.str();
}

// --- BasicTensor ---------------------------------------------------------------

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, T fill) : shape_(shape), data_(shape.numel(), fill) {}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> values)
    : shape_(shape), data_(std::move(values)) {
  if (data_.size() != shape_.numel()) {
    throw Error(ErrorCode::dimension, "tensor of shape " + shape_.str() + " given " +
                                          std::to_string(data_.size()) + " values");
  }
}

template <typename T>
std::span<T> BasicTensor<T>::grad() {
  if (grad_.size() != data_.size()) grad_.assign(data_.size(), T(0));
  return grad_;
}

template <typename T>
void BasicTensor<T>::zero_grad() {
  grad_.assign(data_.size(), T(0));
}

template <typename T>
void BasicTensor<T>::reshape(Shape shape) {
  if (shape.numel() != data_.size()) {
    throw Error(ErrorCode::dimension,
                "cannot reshape " + shape_.str() + " to " + shape.str());
  }
  shape_ = shape;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape shape) const {
  BasicTensor out = *this;
  out.reshape(shape);
  return out;
}

// --- finiteness ----------------------------------------------------------------

namespace {

std::atomic<int>& nan_check_flag() {
  static std::atomic<int> flag = [] {
#ifndef NDEBUG
    return 1;
#else
    const char* env = std::getenv("SOFTS_DEBUG_NANCHECK");
    return (env != nullptr && std::string_view(env) == "1") ? 1 : 0;
#endif
  }();
  return flag;
}

}  // namespace

bool nan_check_enabled() { return nan_check_flag().load(std::memory_order_relaxed) != 0; }

void set_nan_check(bool enabled) { nan_check_flag().store(enabled ? 1 : 0); }

template <typename T>
void check_finite(const BasicTensor<T>& t, const char* op) {
  const auto values = t.data();
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw Error(ErrorCode::non_finite, std::string(op) + ": non-finite value at flat index " +
                                             std::to_string(i) + " of " + t.shape().str());
    }
  }
}

// --- operations ----------------------------------------------------------------

namespace {

template <typename T>
kernels::MatrixRef<const T> as_matrix(const BasicTensor<T>& t) {
  return {t.raw(), t.extent(0), t.extent(1), t.extent(1)};
}

template <typename T>
kernels::MatrixRef<const T> as_matrix(std::span<const T> data, std::size_t rows, std::size_t cols) {
  return {data.data(), rows, cols, cols};
}

template <typename T>
kernels::MatrixRef<T> as_matrix(std::span<T> data, std::size_t rows, std::size_t cols) {
  return {data.data(), rows, cols, cols};
}

template <typename T>
void require_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* op) {
  if (!(a.shape() == b.shape())) {
    throw Error(ErrorCode::dimension,
                std::string(op) + ": shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  }
}

}  // namespace

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(0)) {
    throw Error(ErrorCode::dimension,
                "matmul: cannot multiply " + a.shape().str() + " by " + b.shape().str());
  }
  BasicTensor<T> c(Shape{a.extent(0), b.extent(1)});
  kernels::gemm<T>(kernels::Op::none, kernels::Op::none, as_matrix(a), as_matrix(b),
                   as_matrix(c.data(), c.extent(0), c.extent(1)), false);
  debug_check_finite(c, "matmul");
  return c;
}

template <typename T>
void matmul_backward(BasicTensor<T>& a, BasicTensor<T>& b, const BasicTensor<T>& grad_out) {
  const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  if (grad_out.rank() != 2 || grad_out.extent(0) != m || grad_out.extent(1) != n) {
    throw Error(ErrorCode::dimension, "matmul_backward: gradient " + grad_out.shape().str() +
                                          " does not match " + a.shape().str() + " * " +
                                          b.shape().str());
  }
  kernels::gemm<T>(kernels::Op::none, kernels::Op::transpose, as_matrix(grad_out), as_matrix(b),
                   as_matrix(a.grad(), m, k), true);
  kernels::gemm<T>(kernels::Op::transpose, kernels::Op::none, as_matrix(a), as_matrix(grad_out),
                   as_matrix(b.grad(), k, n), true);
}

template <typename T>
T gelu_scalar(T x) {
  return x * T(0.5) * (T(1) + std::erf(x * (T(1) / std::numbers::sqrt2_v<T>)));
}

template <typename T>
BasicTensor<T> gelu(const BasicTensor<T>& x) {
  BasicTensor<T> y(x.shape());
  const T* in = x.raw();
  T* out = y.raw();
  const std::size_t n = x.size();
#pragma omp parallel for schedule(static) if (n > (1 << 16))
  for (std::size_t i = 0; i < n; ++i) out[i] = gelu_scalar(in[i]);
  debug_check_finite(y, "gelu");
  return y;
}

template <typename T>
BasicTensor<T> gelu_backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_out) {
  require_same_shape(x, grad_out, "gelu_backward");
  constexpr T inv_sqrt_2pi = std::numbers::inv_sqrtpi_v<T> * (T(1) / std::numbers::sqrt2_v<T>);
  BasicTensor<T> dx(x.shape());
  const T* in = x.raw();
  const T* g = grad_out.raw();
  T* out = dx.raw();
  const std::size_t n = x.size();
#pragma omp parallel for schedule(static) if (n > (1 << 16))
  for (std::size_t i = 0; i < n; ++i) {
    const T v = in[i];
    const T cdf = T(0.5) * (T(1) + std::erf(v * (T(1) / std::numbers::sqrt2_v<T>)));
    const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
    out[i] = g[i] * (cdf + v * pdf);
  }
  return dx;
}

namespace {

// Visits every 1-D slice along `axis`: fn(offset, stride, length).
template <typename Fn>
void for_each_slice(const Shape& shape, std::size_t axis, Fn&& fn) {
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.rank(); ++i) inner *= shape[i];
  const std::size_t len = shape[axis];
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) fn(o * len * inner + in, inner, len);
}

}  // namespace

template <typename T>
BasicTensor<T> softmax_over_axis(const BasicTensor<T>& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw Error(ErrorCode::dimension, "softmax: axis " + std::to_string(axis) +
                                          " out of range for " + x.shape().str());
  }
  BasicTensor<T> y(x.shape());
  const T* in = x.raw();
  T* out = y.raw();
  for_each_slice(x.shape(), axis, [&](std::size_t off, std::size_t stride, std::size_t len) {
    T max = in[off];
    for (std::size_t i = 1; i < len; ++i) max = std::max(max, in[off + i * stride]);
    T sum = T(0);
    for (std::size_t i = 0; i < len; ++i) {
      const T e = std::exp(in[off + i * stride] - max);
      out[off + i * stride] = e;
      sum += e;
    }
    for (std::size_t i = 0; i < len; ++i) out[off + i * stride] /= sum;
  });
  debug_check_finite(y, "softmax");
  return y;
}

template <typename T>
BasicTensor<T> softmax_backward(const BasicTensor<T>& y, const BasicTensor<T>& grad_out,
                                std::size_t axis) {
  require_same_shape(y, grad_out, "softmax_backward");
  if (axis >= y.rank()) {
    throw Error(ErrorCode::dimension, "softmax_backward: axis out of range");
  }
  BasicTensor<T> dx(y.shape());
  for_each_slice(y.shape(), axis, [&](std::size_t off, std::size_t stride, std::size_t len) {
    T dot = T(0);
    for (std::size_t i = 0; i < len; ++i) dot += y[off + i * stride] * grad_out[off + i * stride];
    for (std::size_t i = 0; i < len; ++i) {
      const std::size_t at = off + i * stride;
      dx[at] = y[at] * (grad_out[at] - dot);
    }
  });
  return dx;
}

// --- gradient checking -----------------------------------------------------------

namespace {

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / (std::abs(analytic) + std::abs(numeric) + 1e-8);
}

}  // namespace

double grad_check(const ScalarFunction& f, const Tensor64& x, double h) {
  Tensor64 analytic(x.shape());
  f(x, &analytic);
  Tensor64 probe = x;
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + h;
    const double up = f(probe, nullptr);
    probe[i] = saved - h;
    const double down = f(probe, nullptr);
    probe[i] = saved;
    worst = std::max(worst, relative_error(analytic[i], (up - down) / (2.0 * h)));
  }
  return worst;
}

double grad_check_parameters(std::span<Tensor64* const> params,
                             const std::function<double()>& loss,
                             const std::function<void()>& backward, double h) {
  for (Tensor64* p : params) p->zero_grad();
  backward();
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (Tensor64* p : params) analytic.emplace_back(p->grad().begin(), p->grad().end());

  double worst = 0.0;
  for (std::size_t t = 0; t < params.size(); ++t) {
    Tensor64& p = *params[t];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double saved = p[i];
      p[i] = saved + h;
      const double up = loss();
      p[i] = saved - h;
      const double down = loss();
      p[i] = saved;
      worst = std::max(worst, relative_error(analytic[t][i], (up - down) / (2.0 * h)));
    }
  }
  return worst;
}

#define SOFTS_INSTANTIATE(T)                                                                    \
  template class BasicTensor<T>;                                                                \
  template void check_finite<T>(const BasicTensor<T>&, const char*);                            \
  template BasicTensor<T> matmul<T>(const BasicTensor<T>&, const BasicTensor<T>&);              \
  template void matmul_backward<T>(BasicTensor<T>&, BasicTensor<T>&, const BasicTensor<T>&);    \
  template T gelu_scalar<T>(T);                                                                 \
  template BasicTensor<T> gelu<T>(const BasicTensor<T>&);                                       \
  template BasicTensor<T> gelu_backward<T>(const BasicTensor<T>&, const BasicTensor<T>&);       \
  template BasicTensor<T> softmax_over_axis<T>(const BasicTensor<T>&, std::size_t);             \
  template BasicTensor<T> softmax_backward<T>(const BasicTensor<T>&, const BasicTensor<T>&,     \
                                              std::size_t);

SOFTS_INSTANTIATE(float)
SOFTS_INSTANTIATE(double)

#undef SOFTS_INSTANTIATE

}  // namespace softs
