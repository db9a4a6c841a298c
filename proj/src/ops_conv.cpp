#include <cblas.h>
#include <cstdlib>
#include <cmath>

#include <algorithm>
#include <cstring>

#include "multiprior/ops.hpp"

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace multiprior {

namespace {

// OpenBLAS picks its kernel set from CPUID at load time. Some hypervisors
// mask the model id, which lands the dispatcher on the SSE3-era fallback
// even when AVX-512 is available. Force a matching core type before the
// OpenBLAS constructor runs (requires static linking; priority 102 runs
// ahead of default-priority constructors but after libgcc's CPU feature
// probe at 101). An explicit user-set OPENBLAS_CORETYPE always wins.
__attribute__((constructor(102))) void pick_openblas_coretype() {
  if (__builtin_cpu_supports("avx512f"))
    ::setenv("OPENBLAS_CORETYPE", "SKYLAKEX", /*overwrite=*/0);
  else if (__builtin_cpu_supports("avx2"))
    ::setenv("OPENBLAS_CORETYPE", "HASWELL", /*overwrite=*/0);
}

int g_threads = 0;  // 0 = hardware default

void check_conv_shapes(const Tensor& in, const Tensor& kernel,
                       const Tensor& bias) {
  if (in.shape.size() != 4 || kernel.shape.size() != 5)
    throw shape_error("conv3d: expected {C,X,Y,Z} input, {Co,Ci,3,3,3} kernel");
  if (kernel.shape[2] != 3 || kernel.shape[3] != 3 || kernel.shape[4] != 3)
    throw shape_error("conv3d: only 3x3x3 kernels");
  if (kernel.shape[1] != in.shape[0])
    throw shape_error("conv3d: input channel mismatch");
  if (bias.numel() != kernel.shape[0])
    throw shape_error("conv3d: bias length mismatch");
  if (in.shape[1] < 3 || in.shape[2] < 3 || in.shape[3] < 3)
    throw shape_error("conv3d: spatial extents must be >= 3");
}

// Fused 3-tap accumulation for a block of NB output channels over an
// x-chunk of fixed width 16 (or a variable remnant below). Every element
// follows the exact fmaf chain w0,w1,w2 in tap order, so a voxel's result
// is bit-identical no matter which window extent or chunk position it is
// computed under.
constexpr int kChunk = 16;

template <int NB>
inline void tap_chunk(float* __restrict__ acc, const float* __restrict__ r,
                      const float* __restrict__ const* w) {
  for (int b = 0; b < NB; ++b) {
    const float w0 = w[b][0], w1 = w[b][1], w2 = w[b][2];
    float* __restrict__ a = acc + b * kChunk;
    for (int t = 0; t < kChunk; ++t)
      a[t] = std::fmaf(w2, r[t + 2],
                       std::fmaf(w1, r[t + 1], std::fmaf(w0, r[t], a[t])));
  }
}

template <int NB>
inline void tap_row_var(float* __restrict__ acc, const float* __restrict__ r,
                        const float* __restrict__ const* w, int n) {
  for (int b = 0; b < NB; ++b) {
    const float w0 = w[b][0], w1 = w[b][1], w2 = w[b][2];
    float* __restrict__ a = acc + b * kChunk;
    for (int t = 0; t < n; ++t)
      a[t] = std::fmaf(w2, r[t + 2],
                       std::fmaf(w1, r[t + 1], std::fmaf(w0, r[t], a[t])));
  }
}

using ChunkFn = void (*)(float* __restrict__, const float* __restrict__,
                         const float* __restrict__ const*);
using RowFn = void (*)(float* __restrict__, const float* __restrict__,
                       const float* __restrict__ const*, int);
constexpr ChunkFn kChunkFns[4] = {tap_chunk<1>, tap_chunk<2>, tap_chunk<3>,
                                  tap_chunk<4>};
constexpr RowFn kRowFns[4] = {tap_row_var<1>, tap_row_var<2>, tap_row_var<3>,
                              tap_row_var<4>};

struct Scratch {
  std::vector<float> buf;
  float* get(size_t n) {
    if (buf.size() < n) buf.resize(n);
    return buf.data();
  }
};
thread_local Scratch tls_col;

// Cap on the im2col slab (floats); keeps transient memory bounded.
constexpr size_t kColCap = size_t(12) << 20;

// Fill the im2col slab for output slices [z0, z1).
// col is K x Ns with K = Ci*27 ordered (ci,kz,ky,kx), matching the kernel
// row layout; Ns = Xo*Yo*(z1-z0).
void im2col_slab(const Tensor& in, int Xo, int Yo, int z0, int z1,
                 float* col) {
  const int Ci = in.shape[0], X = in.shape[1], Y = in.shape[2];
  const size_t ns = size_t(Xo) * Yo * size_t(z1 - z0);
  size_t k = 0;
  for (int ci = 0; ci < Ci; ++ci)
    for (int kz = 0; kz < 3; ++kz)
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx, ++k) {
          float* dst = col + k * ns;
          for (int z = z0; z < z1; ++z)
            for (int y = 0; y < Yo; ++y) {
              const float* src =
                  &in.data[in.idx4(ci, kx, y + ky, z + kz)];
              std::memcpy(dst, src, sizeof(float) * size_t(Xo));
              dst += Xo;
            }
        }
}

}  // namespace

void set_num_threads(int n) {
  g_threads = n;
#if defined(_OPENMP)
  if (n > 0) omp_set_num_threads(n);
#endif
  openblas_set_num_threads(1);
}

int num_threads() {
#if defined(_OPENMP)
  return g_threads > 0 ? g_threads : omp_get_max_threads();
#else
  return 1;
#endif
}

Tensor conv3d_valid(const Tensor& in, const Tensor& kernel, const Tensor& bias,
                    bool allow_parallel) {
  check_conv_shapes(in, kernel, bias);
  const int Ci = in.shape[0];
  const int Xo = in.shape[1] - 2, Yo = in.shape[2] - 2, Zo = in.shape[3] - 2;
  const int Co = kernel.shape[0];
  Tensor out = tensor4(Co, Xo, Yo, Zo);
  const float* W = kernel.data.data();

#pragma omp parallel for schedule(static) if (allow_parallel && Zo > 1)
  for (int zo = 0; zo < Zo; ++zo) {
    alignas(64) float acc[4 * kChunk];
    for (int yo = 0; yo < Yo; ++yo) {
      for (int cb = 0; cb < Co; cb += 4) {
        const int nb = std::min(4, Co - cb);
        const float* w[4];
        // Full 16-wide chunks; the final chunk steps back to Xo-16 and
        // recomputes the overlap (identical values).
        int x0 = 0;
        while (true) {
          const int width = std::min(kChunk, Xo - x0);
          const bool full = width == kChunk;
          for (int b = 0; b < nb; ++b) {
            const float bv = bias.data[cb + b];
            for (int t = 0; t < kChunk; ++t) acc[b * kChunk + t] = bv;
          }
          for (int ci = 0; ci < Ci; ++ci)
            for (int kz = 0; kz < 3; ++kz)
              for (int ky = 0; ky < 3; ++ky) {
                const float* r =
                    &in.data[in.idx4(ci, x0, yo + ky, zo + kz)];
                for (int b = 0; b < nb; ++b)
                  w[b] = W +
                         ((((size_t(cb + b) * Ci + ci) * 3 + kz) * 3 + ky) * 3);
                if (full)
                  kChunkFns[nb - 1](acc, r, w);
                else
                  kRowFns[nb - 1](acc, r, w, width);
              }
          for (int b = 0; b < nb; ++b)
            std::memcpy(&out.data[out.idx4(cb + b, x0, yo, zo)],
                        acc + b * kChunk, sizeof(float) * size_t(width));
          if (x0 + width >= Xo) break;
          x0 += kChunk;
          if (x0 + kChunk > Xo && Xo >= kChunk) x0 = Xo - kChunk;
        }
      }
    }
  }
  return out;
}

Tensor conv3d_valid_gemm(const Tensor& in, const Tensor& kernel,
                         const Tensor& bias) {
  check_conv_shapes(in, kernel, bias);
  const int Ci = in.shape[0];
  const int Xo = in.shape[1] - 2, Yo = in.shape[2] - 2, Zo = in.shape[3] - 2;
  const int Co = kernel.shape[0];
  const int K = Ci * 27;
  Tensor out = tensor4(Co, Xo, Yo, Zo);
  const size_t N = out.spatial();

  const size_t slice = size_t(Xo) * Yo;
  const int zstep = int(std::clamp<size_t>(kColCap / (size_t(K) * slice), 1, size_t(Zo)));
  float* col = tls_col.get(size_t(K) * slice * size_t(zstep));

  for (int z0 = 0; z0 < Zo; z0 += zstep) {
    const int z1 = std::min(Zo, z0 + zstep);
    const size_t ns = slice * size_t(z1 - z0);
    im2col_slab(in, Xo, Yo, z0, z1, col);
    cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, Co, int(ns), K,
                1.0f, kernel.data.data(), K, col, int(ns), 0.0f,
                out.data.data() + z0 * slice, int(N));
  }
  for (int co = 0; co < Co; ++co) {
    float* o = out.data.data() + size_t(co) * N;
    const float bv = bias.data[co];
    for (size_t i = 0; i < N; ++i) o[i] += bv;
  }
  return out;
}

Tensor conv3d_backward_input(const std::vector<int>& input_shape,
                             const Tensor& kernel, const Tensor& grad_out) {
  const int Ci = input_shape[0];
  const int Xo = grad_out.shape[1], Yo = grad_out.shape[2],
            Zo = grad_out.shape[3];
  const int Co = kernel.shape[0];
  const int K = Ci * 27;
  Tensor gin(input_shape, 0.0f);
  const size_t N = grad_out.spatial();

  const size_t slice = size_t(Xo) * Yo;
  const int zstep = int(std::clamp<size_t>(kColCap / (size_t(K) * slice), 1, size_t(Zo)));
  float* col = tls_col.get(size_t(K) * slice * size_t(zstep));

  for (int z0 = 0; z0 < Zo; z0 += zstep) {
    const int z1 = std::min(Zo, z0 + zstep);
    const size_t ns = slice * size_t(z1 - z0);
    // colgrad = W^T * gout_slab
    cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, K, int(ns), Co, 1.0f,
                kernel.data.data(), K, grad_out.data.data() + z0 * slice,
                int(N), 0.0f, col, int(ns));
    // col2im scatter-add
    size_t k = 0;
    for (int ci = 0; ci < Ci; ++ci)
      for (int kz = 0; kz < 3; ++kz)
        for (int ky = 0; ky < 3; ++ky)
          for (int kx = 0; kx < 3; ++kx, ++k) {
            const float* src = col + k * ns;
            for (int z = z0; z < z1; ++z)
              for (int y = 0; y < Yo; ++y) {
                float* dst = &gin.data[gin.idx4(ci, kx, y + ky, z + kz)];
                for (int x = 0; x < Xo; ++x) dst[x] += src[x];
                src += Xo;
              }
          }
  }
  return gin;
}

void conv3d_backward_params(const Tensor& in, const Tensor& grad_out,
                            Tensor& grad_kernel, Tensor& grad_bias) {
  const int Ci = in.shape[0];
  const int Xo = grad_out.shape[1], Yo = grad_out.shape[2],
            Zo = grad_out.shape[3];
  const int Co = grad_out.shape[0];
  const int K = Ci * 27;
  const size_t N = grad_out.spatial();

  const size_t slice = size_t(Xo) * Yo;
  const int zstep = int(std::clamp<size_t>(kColCap / (size_t(K) * slice), 1, size_t(Zo)));
  float* col = tls_col.get(size_t(K) * slice * size_t(zstep));

  for (int z0 = 0; z0 < Zo; z0 += zstep) {
    const int z1 = std::min(Zo, z0 + zstep);
    const size_t ns = slice * size_t(z1 - z0);
    im2col_slab(in, Xo, Yo, z0, z1, col);
    // dW += gout_slab * col^T
    cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, Co, K, int(ns), 1.0f,
                grad_out.data.data() + z0 * slice, int(N), col, int(ns), 1.0f,
                grad_kernel.data.data(), K);
  }
  for (int co = 0; co < Co; ++co) {
    const float* g = grad_out.data.data() + size_t(co) * N;
    double s = 0.0;
    for (size_t i = 0; i < N; ++i) s += g[i];
    grad_bias.data[co] += float(s);
  }
}

}  // namespace multiprior
