// Rough throughput check for the convolution engines; not part of ctest.
#include <chrono>
#include <cstdio>

#include "multiprior/ops.hpp"
#include "multiprior/rng.hpp"

using namespace multiprior;
using clk = std::chrono::steady_clock;

static Tensor rnd(std::vector<int> s, uint64_t seed) {
  Tensor t(std::move(s));
  Rng r(seed);
  for (float& v : t.data) v = float(r.normal());
  return t;
}

static void bench(const char* name, int ci, int co, int n, bool gemm,
                  bool par, int reps) {
  Tensor in = rnd({ci, n, n, n}, 1);
  Tensor k = rnd({co, ci, 3, 3, 3}, 2);
  Tensor b = rnd({co}, 3);
  // warmup
  Tensor out = gemm ? conv3d_valid_gemm(in, k, b) : conv3d_valid(in, k, b, par);
  auto t0 = clk::now();
  for (int r = 0; r < reps; ++r)
    out = gemm ? conv3d_valid_gemm(in, k, b) : conv3d_valid(in, k, b, par);
  double s = std::chrono::duration<double>(clk::now() - t0).count() / reps;
  double flops = 2.0 * 27.0 * ci * co * double(out.spatial());
  std::printf("%-28s ci=%2d co=%2d n=%3d  %7.2f ms  %6.1f GF/s\n", name, ci,
              co, n, 1e3 * s, flops / s / 1e9);
}

static void bench_bwd(int ci, int co, int n, int reps) {
  Tensor in = rnd({ci, n, n, n}, 1);
  Tensor k = rnd({co, ci, 3, 3, 3}, 2);
  Tensor gout = rnd({co, n - 2, n - 2, n - 2}, 4);
  Tensor gk(k.shape), gb(std::vector<int>{co});
  auto t0 = clk::now();
  for (int r = 0; r < reps; ++r) {
    Tensor gin = conv3d_backward_input(in.shape, k, gout);
    conv3d_backward_params(in, gout, gk, gb);
  }
  double s = std::chrono::duration<double>(clk::now() - t0).count() / reps;
  double flops = 2.0 * 2.0 * 27.0 * ci * co * double(gout.spatial());
  std::printf("backward (gemm)              ci=%2d co=%2d n=%3d  %7.2f ms  %6.1f GF/s\n",
              ci, co, n, 1e3 * s, flops / s / 1e9);
}

int main() {
  set_num_threads(0);
  std::printf("== training-like shapes (single patch) ==\n");
  bench("direct serial", 30, 30, 23, false, false, 10);
  bench("gemm", 30, 30, 23, true, false, 10);
  bench("gemm", 30, 40, 17, true, false, 10);
  bench_bwd(30, 30, 23, 10);
  std::printf("== inference-like shapes ==\n");
  bench("direct serial", 30, 30, 64, false, false, 3);
  bench("direct parallel", 30, 30, 64, false, true, 3);
  bench("gemm", 30, 30, 64, true, false, 3);
  bench("direct parallel", 50, 50, 48, false, true, 3);
  return 0;
}
