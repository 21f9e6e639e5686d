#pragma once

#include <cstddef>

namespace softs::kernels {

// Strided view of a row-major matrix.
template <typename T>
struct MatrixRef {
  T* data;
  std::size_t rows;
  std::size_t cols;
  std::size_t stride;
};

enum class Op { none, transpose };

// C = op(A) * op(B), or C += op(A) * op(B) when `accumulate` is set.
// op(A) is m x k, op(B) is k x n, C is m x n.
//
// Each output element is reduced over k in a fixed order that depends only on
// k, so results are independent of m, of the thread count and of how rows are
// partitioned across threads.
template <typename T>
void gemm(Op op_a, Op op_b, MatrixRef<const T> a, MatrixRef<const T> b, MatrixRef<T> c,
          bool accumulate);

// Column sums of a (rows x cols) block added into out[cols].
template <typename T>
void accumulate_column_sums(MatrixRef<const T> a, T* out);

namespace reference {

// Serial triple loop; the oracle the packed kernel is tested against.
template <typename T>
void gemm(Op op_a, Op op_b, MatrixRef<const T> a, MatrixRef<const T> b, MatrixRef<T> c,
          bool accumulate);

template <typename T>
void accumulate_column_sums(MatrixRef<const T> a, T* out);

}  // namespace reference

// Number of OpenMP threads kernels will use; 0 restores the runtime default.
void set_num_threads(int threads);
int num_threads();

}  // namespace softs::kernels
