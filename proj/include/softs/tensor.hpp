#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "softs/error.hpp"

namespace softs {

// Extents of a rank 1-3 tensor.
class Shape {
 public:
  static constexpr std::size_t kMaxRank = 3;

  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims);

  std::size_t rank() const noexcept { return rank_; }
  std::size_t operator[](std::size_t axis) const { return dims_[axis]; }
  std::size_t back() const { return dims_[rank_ - 1]; }
  std::size_t numel() const noexcept;

  // Product of every extent except the last; the row count of the folded
  // two-dimensional view used by affine maps.
  std::size_t leading() const noexcept;

  // Same extents with the trailing one replaced.
  Shape with_back(std::size_t extent) const;

  std::string str() const;

  friend bool operator==(const Shape& a, const Shape& b) noexcept {
    return a.rank_ == b.rank_ && a.dims_ == b.dims_;
  }

 private:
  std::array<std::size_t, kMaxRank> dims_{};
  std::size_t rank_ = 0;
};

// Dense row-major tensor with a lazily allocated gradient buffer.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T(0));
  BasicTensor(Shape shape, std::vector<T> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.rank(); }
  std::size_t extent(std::size_t axis) const { return shape_[axis]; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  T* raw() noexcept { return data_.data(); }
  const T* raw() const noexcept { return data_.data(); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  const T& at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  T& at(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  const T& at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  bool has_grad() const noexcept { return !grad_.empty(); }
  // Allocates a zeroed gradient on first access.
  std::span<T> grad();
  std::span<const T> grad() const noexcept { return grad_; }
  void zero_grad();

  // Reinterprets the extents; element count must be unchanged.
  void reshape(Shape shape);
  BasicTensor reshaped(Shape shape) const;

  template <typename U>
  BasicTensor<U> cast() const {
    BasicTensor<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
  std::vector<T> grad_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

// --- finiteness diagnostics -------------------------------------------------

// True when per-op finiteness checks are active: always in builds without
// NDEBUG, otherwise when SOFTS_DEBUG_NANCHECK=1 is set in the environment.
bool nan_check_enabled();
void set_nan_check(bool enabled);

template <typename T>
void check_finite(const BasicTensor<T>& t, const char* op);

template <typename T>
inline void debug_check_finite(const BasicTensor<T>& t, const char* op) {
  if (nan_check_enabled()) check_finite(t, op);
}

// --- operations with analytic backward rules --------------------------------

// [m x k] * [k x n]
template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);

// Accumulates operand gradients: a.grad += g * b^T, b.grad += a^T * g.
template <typename T>
void matmul_backward(BasicTensor<T>& a, BasicTensor<T>& b, const BasicTensor<T>& grad_out);

// x * Phi(x) with the exact (erf-based) normal CDF.
template <typename T>
BasicTensor<T> gelu(const BasicTensor<T>& x);

// grad_out * (Phi(x) + x * phi(x)).
template <typename T>
BasicTensor<T> gelu_backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_out);

template <typename T>
T gelu_scalar(T x);

template <typename T>
BasicTensor<T> softmax_over_axis(const BasicTensor<T>& x, std::size_t axis);

// Backward through softmax given its output y.
template <typename T>
BasicTensor<T> softmax_backward(const BasicTensor<T>& y, const BasicTensor<T>& grad_out,
                                std::size_t axis);

// --- finite-difference oracle -----------------------------------------------

// Scalar function of a tensor. When `grad` is non-null it must be filled with
// the analytic gradient (same shape as x).
using ScalarFunction = std::function<double(const Tensor64& x, Tensor64* grad)>;

// Max over components of |analytic - central| / (|analytic| + |central| + 1e-8).
double grad_check(const ScalarFunction& f, const Tensor64& x, double h);

// Same measure over every component of a set of parameter tensors. `loss`
// evaluates the objective; `backward` zeroes and repopulates parameter grads.
double grad_check_parameters(std::span<Tensor64* const> params,
                             const std::function<double()>& loss,
                             const std::function<void()>& backward, double h);

}  // namespace softs
