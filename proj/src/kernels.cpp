#include "softs/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cstring>
#include <string>
#include <vector>

#include "softs/error.hpp"

namespace softs::kernels {
namespace {

// Register tile: mr rows of op(A) against two vectors worth of op(B) columns.
template <typename T>
struct Tile {
  static constexpr std::size_t lanes = 64 / sizeof(T);
  static constexpr std::size_t mr = 6;
  static constexpr std::size_t nr = 2 * lanes;
};

constexpr std::size_t kKc = 256;
constexpr std::size_t kMc = 120;
constexpr std::size_t kNc = 1536;

template <typename T>
inline T elem(const MatrixRef<const T>& m, Op op, std::size_t i, std::size_t j) {
  return op == Op::none ? m.data[i * m.stride + j] : m.data[j * m.stride + i];
}

// Packs op(A)[ic:ic+mc, pc:pc+kc] into mr-row panels, zero padded.
template <typename T>
void pack_a(const MatrixRef<const T>& a, Op op, std::size_t ic, std::size_t mc, std::size_t pc,
            std::size_t kc, T* out) {
  constexpr std::size_t mr = Tile<T>::mr;
  for (std::size_t panel = 0; panel < mc; panel += mr) {
    const std::size_t rows = std::min(mr, mc - panel);
    for (std::size_t p = 0; p < kc; ++p) {
      T* dst = out + (panel / mr) * kc * mr + p * mr;
      std::size_t r = 0;
      for (; r < rows; ++r) dst[r] = elem(a, op, ic + panel + r, pc + p);
      for (; r < mr; ++r) dst[r] = T(0);
    }
  }
}

// Packs op(B)[pc:pc+kc, jc:jc+nc] into nr-column panels, zero padded.
template <typename T>
void pack_b(const MatrixRef<const T>& b, Op op, std::size_t pc, std::size_t kc, std::size_t jc,
            std::size_t nc, T* out) {
  constexpr std::size_t nr = Tile<T>::nr;
  const std::size_t panels = (nc + nr - 1) / nr;
#pragma omp parallel for schedule(static)
  for (std::size_t panel = 0; panel < panels; ++panel) {
    const std::size_t col0 = panel * nr;
    const std::size_t cols = std::min(nr, nc - col0);
    T* base = out + panel * kc * nr;
    for (std::size_t p = 0; p < kc; ++p) {
      T* dst = base + p * nr;
      if (op == Op::none) {
        const T* src = b.data + (pc + p) * b.stride + jc + col0;
        std::memcpy(dst, src, cols * sizeof(T));
      } else {
        for (std::size_t j = 0; j < cols; ++j) dst[j] = b.data[(jc + col0 + j) * b.stride + pc + p];
      }
      for (std::size_t j = cols; j < nr; ++j) dst[j] = T(0);
    }
  }
}

template <typename T>
void micro_kernel(std::size_t kc, const T* ap, const T* bp, T* acc) {
  constexpr std::size_t mr = Tile<T>::mr;
  constexpr std::size_t nr = Tile<T>::nr;
  constexpr std::size_t lanes = Tile<T>::lanes;
  typedef T Vec __attribute__((vector_size(64)));

  Vec c[mr][2];
  for (std::size_t r = 0; r < mr; ++r) c[r][0] = c[r][1] = Vec{};
  for (std::size_t p = 0; p < kc; ++p) {
    Vec b0, b1;
    std::memcpy(&b0, bp, sizeof(Vec));
    std::memcpy(&b1, bp + lanes, sizeof(Vec));
    for (std::size_t r = 0; r < mr; ++r) {
      const T av = ap[r];
      c[r][0] += av * b0;
      c[r][1] += av * b1;
    }
    ap += mr;
    bp += nr;
  }
  for (std::size_t r = 0; r < mr; ++r) {
    std::memcpy(acc + r * nr, &c[r][0], sizeof(Vec));
    std::memcpy(acc + r * nr + lanes, &c[r][1], sizeof(Vec));
  }
}

template <typename T>
void check_dims(Op op_a, Op op_b, const MatrixRef<const T>& a, const MatrixRef<const T>& b,
                const MatrixRef<T>& c, std::size_t& m, std::size_t& n, std::size_t& k) {
  m = op_a == Op::none ? a.rows : a.cols;
  k = op_a == Op::none ? a.cols : a.rows;
  const std::size_t kb = op_b == Op::none ? b.rows : b.cols;
  n = op_b == Op::none ? b.cols : b.rows;
  if (k != kb || c.rows != m || c.cols != n) {
    throw Error(ErrorCode::dimension,
                "gemm: incompatible operands (" + std::to_string(m) + "x" + std::to_string(k) +
                    ") * (" + std::to_string(kb) + "x" + std::to_string(n) + ") -> (" +
                    std::to_string(c.rows) + "x" + std::to_string(c.cols) + ")");
  }
}

}  // namespace

template <typename T>
void gemm(Op op_a, Op op_b, MatrixRef<const T> a, MatrixRef<const T> b, MatrixRef<T> c,
          bool accumulate) {
  constexpr std::size_t mr = Tile<T>::mr;
  constexpr std::size_t nr = Tile<T>::nr;
  std::size_t m, n, k;
  check_dims(op_a, op_b, a, b, c, m, n, k);
  if (m == 0 || n == 0) return;
  if (k == 0) {
    if (!accumulate)
      for (std::size_t i = 0; i < m; ++i) std::fill_n(c.data + i * c.stride, n, T(0));
    return;
  }

  const int threads = omp_get_max_threads();
  std::size_t mc = kMc;
  if (threads > 1) {
    const std::size_t per_thread = (m + threads - 1) / threads;
    mc = std::clamp<std::size_t>((per_thread + mr - 1) / mr * mr, mr, kMc);
  }

  std::vector<T> bpack;
  for (std::size_t jc = 0; jc < n; jc += kNc) {
    const std::size_t nc = std::min(kNc, n - jc);
    const std::size_t npanels = (nc + nr - 1) / nr;
    for (std::size_t pc = 0; pc < k; pc += kKc) {
      const std::size_t kc = std::min(kKc, k - pc);
      const bool overwrite = !accumulate && pc == 0;
      bpack.resize(npanels * kc * nr);
      pack_b(b, op_b, pc, kc, jc, nc, bpack.data());

      const std::size_t mblocks = (m + mc - 1) / mc;
#pragma omp parallel
      {
        std::vector<T> apack(((mc + mr - 1) / mr) * mr * kc);
        alignas(64) T acc[mr * nr];
#pragma omp for schedule(static)
        for (std::size_t blk = 0; blk < mblocks; ++blk) {
          const std::size_t ic = blk * mc;
          const std::size_t mcur = std::min(mc, m - ic);
          pack_a(a, op_a, ic, mcur, pc, kc, apack.data());
          for (std::size_t jp = 0; jp < npanels; ++jp) {
            const std::size_t j0 = jc + jp * nr;
            const std::size_t cols = std::min(nr, n - j0);
            const T* bp = bpack.data() + jp * kc * nr;
            for (std::size_t ip = 0; ip * mr < mcur; ++ip) {
              const std::size_t i0 = ic + ip * mr;
              const std::size_t rows = std::min(mr, m - i0);
              micro_kernel<T>(kc, apack.data() + ip * kc * mr, bp, acc);
              for (std::size_t r = 0; r < rows; ++r) {
                T* dst = c.data + (i0 + r) * c.stride + j0;
                const T* src = acc + r * nr;
                if (overwrite) {
                  for (std::size_t j = 0; j < cols; ++j) dst[j] = src[j];
                } else {
                  for (std::size_t j = 0; j < cols; ++j) dst[j] += src[j];
                }
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void accumulate_column_sums(MatrixRef<const T> a, T* out) {
  constexpr std::size_t kChunk = 64;
  const std::size_t chunks = (a.cols + kChunk - 1) / kChunk;
#pragma omp parallel for schedule(static)
  for (std::size_t chunk = 0; chunk < chunks; ++chunk) {
    const std::size_t j0 = chunk * kChunk;
    const std::size_t j1 = std::min(a.cols, j0 + kChunk);
    T sums[kChunk] = {};
    for (std::size_t i = 0; i < a.rows; ++i) {
      const T* row = a.data + i * a.stride;
      for (std::size_t j = j0; j < j1; ++j) sums[j - j0] += row[j];
    }
    for (std::size_t j = j0; j < j1; ++j) out[j] += sums[j - j0];
  }
}

namespace reference {

template <typename T>
void gemm(Op op_a, Op op_b, MatrixRef<const T> a, MatrixRef<const T> b, MatrixRef<T> c,
          bool accumulate) {
  std::size_t m, n, k;
  check_dims(op_a, op_b, a, b, c, m, n, k);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T sum = T(0);
      for (std::size_t p = 0; p < k; ++p) sum += elem(a, op_a, i, p) * elem(b, op_b, p, j);
      T& dst = c.data[i * c.stride + j];
      dst = accumulate ? dst + sum : sum;
    }
  }
}

template <typename T>
void accumulate_column_sums(MatrixRef<const T> a, T* out) {
  for (std::size_t j = 0; j < a.cols; ++j) {
    T sum = T(0);
    for (std::size_t i = 0; i < a.rows; ++i) sum += a.data[i * a.stride + j];
    out[j] += sum;
  }
}

}  // namespace reference

void set_num_threads(int threads) {
  static const int default_threads = omp_get_max_threads();
  omp_set_num_threads(threads > 0 ? threads : default_threads);
}

int num_threads() { return omp_get_max_threads(); }

#define SOFTS_INSTANTIATE(T)                                                                 \
  template void gemm<T>(Op, Op, MatrixRef<const T>, MatrixRef<const T>, MatrixRef<T>, bool); \
  template void accumulate_column_sums<T>(MatrixRef<const T>, T*);                           \
  template void reference::gemm<T>(Op, Op, MatrixRef<const T>, MatrixRef<const T>,           \
                                   MatrixRef<T>, bool);                                       \
  template void reference::accumulate_column_sums<T>(MatrixRef<const T>, T*);

SOFTS_INSTANTIATE(float)
SOFTS_INSTANTIATE(double)

#undef SOFTS_INSTANTIATE

}  // namespace softs::kernels
