// Packed OpenMP GEMM against the serial reference on the shapes a SOFTS
// training step spends its time in.
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <vector>

#include "softs/kernels.hpp"
#include "softs/rng.hpp"

namespace {

using softs::kernels::MatrixRef;
using softs::kernels::Op;

struct Case {
  const char* name;
  Op op_a, op_b;
  std::size_t m, n, k;
};

template <typename Fn>
double best_ms(Fn&& fn, int repeats) {
  double best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

}  // namespace

int main(int argc, char** argv) {
  const bool with_reference = !(argc > 1 && std::string_view(argv[1]) == "--packed-only");
  const Case cases[] = {
      {"embed fwd   X*W     ", Op::none, Op::none, 4096, 256, 96},
      {"mlp fwd     X*W     ", Op::none, Op::none, 4096, 256, 256},
      {"fuse fwd    F*W     ", Op::none, Op::none, 4096, 256, 384},
      {"head fwd    S*W     ", Op::none, Op::none, 4096, 720, 256},
      {"input grad  G*W^T   ", Op::none, Op::transpose, 4096, 256, 720},
      {"weight grad X^T*G   ", Op::transpose, Op::none, 256, 720, 4096},
  };

  softs::Rng rng(7);
  std::printf("threads=%d\n", softs::kernels::num_threads());
  std::printf("%-22s %10s %10s %10s %10s\n", "case", "packed ms", "GFLOP/s", "serial ms", "speedup");
  for (const Case& c : cases) {
    const std::size_t a_rows = c.op_a == Op::none ? c.m : c.k;
    const std::size_t a_cols = c.op_a == Op::none ? c.k : c.m;
    const std::size_t b_rows = c.op_b == Op::none ? c.k : c.n;
    const std::size_t b_cols = c.op_b == Op::none ? c.n : c.k;
    std::vector<float> a(a_rows * a_cols), b(b_rows * b_cols), out(c.m * c.n);
    for (float& v : a) v = static_cast<float>(rng.uniform(-1, 1));
    for (float& v : b) v = static_cast<float>(rng.uniform(-1, 1));
    MatrixRef<const float> ar{a.data(), a_rows, a_cols, a_cols};
    MatrixRef<const float> br{b.data(), b_rows, b_cols, b_cols};
    MatrixRef<float> cr{out.data(), c.m, c.n, c.n};

    const double flops = 2.0 * c.m * c.n * c.k;
    const double packed =
        best_ms([&] { softs::kernels::gemm(c.op_a, c.op_b, ar, br, cr, false); }, 5);
    if (with_reference) {
      const double serial =
          best_ms([&] { softs::kernels::reference::gemm(c.op_a, c.op_b, ar, br, cr, false); }, 1);
      std::printf("%-22s %10.2f %10.1f %10.1f %9.1fx\n", c.name, packed, flops / packed / 1e6,
                  serial, serial / packed);
    } else {
      std::printf("%-22s %10.2f %10.1f\n", c.name, packed, flops / packed / 1e6);
    }
  }
  return 0;
}
