#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "multiprior/ops.hpp"

namespace multiprior {

Tensor leaky_relu(const Tensor& x, float alpha) {
  Tensor y = x;
  for (float& v : y.data) v = v > 0.0f ? v : alpha * v;
  return y;
}

Tensor leaky_relu_backward(const Tensor& pre_act, const Tensor& grad_y,
                           float alpha) {
  if (pre_act.data.size() != grad_y.data.size())
    throw shape_error("leaky_relu_backward: shape mismatch");
  Tensor gx = grad_y;
  for (size_t i = 0; i < gx.data.size(); ++i)
    if (!(pre_act.data[i] > 0.0f)) gx.data[i] *= alpha;
  return gx;
}

Tensor softmax_channels(const Tensor& x) {
  const int C = x.shape[0];
  const size_t n = size_t(x.spatial());
  Tensor y = x;
  for (size_t i = 0; i < n; ++i) {
    float m = x.data[i];
    for (int c = 1; c < C; ++c) m = std::max(m, x.data[size_t(c) * n + i]);
    float s = 0.0f;
    for (int c = 0; c < C; ++c) {
      float e = std::exp(x.data[size_t(c) * n + i] - m);
      y.data[size_t(c) * n + i] = e;
      s += e;
    }
    const float inv = 1.0f / s;
    for (int c = 0; c < C; ++c) y.data[size_t(c) * n + i] *= inv;
  }
  return y;
}

Tensor softmax_backward(const Tensor& y, const Tensor& grad_y) {
  const int C = y.shape[0];
  const size_t n = size_t(y.spatial());
  Tensor gx = grad_y;
  for (size_t i = 0; i < n; ++i) {
    float dot = 0.0f;
    for (int c = 0; c < C; ++c)
      dot += grad_y.data[size_t(c) * n + i] * y.data[size_t(c) * n + i];
    for (int c = 0; c < C; ++c)
      gx.data[size_t(c) * n + i] =
          y.data[size_t(c) * n + i] * (grad_y.data[size_t(c) * n + i] - dot);
  }
  return gx;
}

Tensor upsample_replicate(const Tensor& x, int factor) {
  if (factor < 1) throw shape_error("upsample_replicate: factor must be >= 1");
  const int C = x.shape[0], X = x.shape[1], Y = x.shape[2], Z = x.shape[3];
  Tensor y = tensor4(C, X * factor, Y * factor, Z * factor);
  for (int c = 0; c < C; ++c)
    for (int z = 0; z < Z * factor; ++z)
      for (int yy = 0; yy < Y * factor; ++yy) {
        const float* src = &x.data[x.idx4(c, 0, yy / factor, z / factor)];
        float* dst = &y.data[y.idx4(c, 0, yy, z)];
        for (int xx = 0; xx < X * factor; ++xx) dst[xx] = src[xx / factor];
      }
  return y;
}

Tensor upsample_replicate_backward(const Tensor& grad_y, int factor) {
  const int C = grad_y.shape[0];
  const int X = grad_y.shape[1] / factor, Y = grad_y.shape[2] / factor,
            Z = grad_y.shape[3] / factor;
  Tensor gx = tensor4(C, X, Y, Z);
  for (int c = 0; c < C; ++c)
    for (int z = 0; z < grad_y.shape[3]; ++z)
      for (int yy = 0; yy < grad_y.shape[2]; ++yy) {
        const float* src = &grad_y.data[grad_y.idx4(c, 0, yy, z)];
        float* dst = &gx.data[gx.idx4(c, 0, yy / factor, z / factor)];
        for (int xx = 0; xx < grad_y.shape[1]; ++xx) dst[xx / factor] += src[xx];
      }
  return gx;
}

namespace {

std::vector<float> gauss_taps(double sigma) {
  const int radius = int(3.0 * sigma);
  std::vector<float> taps(size_t(2 * radius + 1));
  double sum = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    double v = std::exp(-0.5 * double(k) * double(k) / (sigma * sigma));
    taps[size_t(k + radius)] = float(v);
    sum += v;
  }
  for (float& t : taps) t = float(t / sum);
  return taps;
}

// 1D pass along one axis with replicate borders.
void blur_axis(const float* in, float* out, Vec3i dims,
               const std::vector<float>& taps, int axis) {
  const int radius = int(taps.size() / 2);
  const int ext[3] = {dims.x, dims.y, dims.z};
  const size_t stride[3] = {1, size_t(dims.x), size_t(dims.x) * dims.y};
  const int n = ext[axis];
  const size_t s = stride[axis];
  const int o1 = (axis + 1) % 3, o2 = (axis + 2) % 3;
  for (int j = 0; j < ext[o2]; ++j)
    for (int i = 0; i < ext[o1]; ++i) {
      const size_t base = size_t(i) * stride[o1] + size_t(j) * stride[o2];
      for (int p = 0; p < n; ++p) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          int q = std::clamp(p + k, 0, n - 1);
          acc += double(taps[size_t(k + radius)]) * in[base + size_t(q) * s];
        }
        out[base + size_t(p) * s] = float(acc);
      }
    }
}

void blur3(const float* in, float* out, Vec3i dims,
           const std::vector<float>& taps) {
  std::vector<float> tmp(size_t(voxel_count(dims)));
  blur_axis(in, out, dims, taps, 0);
  blur_axis(out, tmp.data(), dims, taps, 1);
  blur_axis(tmp.data(), out, dims, taps, 2);
}

}  // namespace

void gaussian_blur3d(const float* in, float* out, Vec3i dims, double sigma) {
  blur3(in, out, dims, gauss_taps(sigma));
}

namespace {

// Blur + block-center subsampling of one scalar field. Fields whose
// extents are not multiples of factor are replicate-padded up first.
std::vector<float> downsample_field(const float* in, Vec3i dims, int factor,
                                    Vec3i& out_dims) {
  Vec3i padded{(dims.x + factor - 1) / factor * factor,
               (dims.y + factor - 1) / factor * factor,
               (dims.z + factor - 1) / factor * factor};
  std::vector<float> work;
  const float* src = in;
  if (!(padded == dims)) {
    work.resize(size_t(voxel_count(padded)));
    for (int z = 0; z < padded.z; ++z)
      for (int y = 0; y < padded.y; ++y)
        for (int x = 0; x < padded.x; ++x) {
          int sx = std::min(x, dims.x - 1), sy = std::min(y, dims.y - 1),
              sz = std::min(z, dims.z - 1);
          work[(size_t(z) * padded.y + y) * padded.x + x] =
              in[(size_t(sz) * dims.y + sy) * dims.x + sx];
        }
    src = work.data();
  }
  std::vector<float> blurred(size_t(voxel_count(padded)));
  blur3(src, blurred.data(), padded, gauss_taps(double(factor) / 2.0));

  out_dims = {padded.x / factor, padded.y / factor, padded.z / factor};
  std::vector<float> out(size_t(voxel_count(out_dims)));
  const int c = factor / 2;  // block center
  for (int z = 0; z < out_dims.z; ++z)
    for (int y = 0; y < out_dims.y; ++y)
      for (int x = 0; x < out_dims.x; ++x)
        out[(size_t(z) * out_dims.y + y) * out_dims.x + x] =
            blurred[(size_t(z * factor + c) * padded.y + (y * factor + c)) *
                        padded.x +
                    (x * factor + c)];
  return out;
}

}  // namespace

Volume3D downsample_antialias(const Volume3D& vol, int factor) {
  if (factor < 1) throw shape_error("downsample: factor must be >= 1");
  if (factor == 1) return vol;
  Volume3D out;
  out.spacing = {vol.spacing[0] * factor, vol.spacing[1] * factor,
                 vol.spacing[2] * factor};
  out.data = downsample_field(vol.data.data(), vol.dims, factor, out.dims);
  return out;
}

Tensor downsample_antialias(const Tensor& x, int factor) {
  if (factor == 1) return x;
  const int C = x.shape[0];
  Vec3i dims{x.shape[1], x.shape[2], x.shape[3]};
  Vec3i od{};
  std::vector<std::vector<float>> chans;
  chans.resize(size_t(C));
  for (int c = 0; c < C; ++c)
    chans[size_t(c)] =
        downsample_field(x.data.data() + size_t(c) * x.spatial(), dims, factor,
                         od);
  Tensor out = tensor4(C, od.x, od.y, od.z);
  for (int c = 0; c < C; ++c)
    std::copy(chans[size_t(c)].begin(), chans[size_t(c)].end(),
              out.data.begin() + size_t(c) * out.spatial());
  return out;
}

// ---------------------------------------------------------------------------
// Pointwise dense across channels. Forward is a hand-rolled tiled matmul
// with a fixed per-element reduction order (ci ascending), so dense
// inference results do not depend on the tile extents. Backward runs on
// the training path only and uses BLAS.
// ---------------------------------------------------------------------------

Tensor pointwise_dense(const Tensor& in, const Tensor& weights,
                       const Tensor& bias) {
  if (weights.shape.size() != 2 || weights.shape[1] != in.shape[0])
    throw shape_error("pointwise_dense: weight shape mismatch");
  const int Ci = in.shape[0], Co = weights.shape[0];
  if (bias.numel() != Co) throw shape_error("pointwise_dense: bias mismatch");
  const size_t n = size_t(in.spatial());
  Tensor out = tensor4(Co, in.shape[1], in.shape[2], in.shape[3]);

  constexpr size_t kTile = 4096;
  for (size_t t0 = 0; t0 < n; t0 += kTile) {
    const size_t tn = std::min(kTile, n - t0);
    for (int co = 0; co < Co; ++co) {
      float* __restrict__ o = out.data.data() + size_t(co) * n + t0;
      const float bv = bias.data[co];
      for (size_t i = 0; i < tn; ++i) o[i] = bv;
      for (int ci = 0; ci < Ci; ++ci) {
        const float w = weights.data[size_t(co) * Ci + ci];
        const float* __restrict__ p = in.data.data() + size_t(ci) * n + t0;
        for (size_t i = 0; i < tn; ++i) o[i] += w * p[i];
      }
    }
  }
  return out;
}

Tensor pointwise_dense_backward_input(const std::vector<int>& input_shape,
                                      const Tensor& weights,
                                      const Tensor& grad_out) {
  const int Ci = weights.shape[1], Co = weights.shape[0];
  Tensor gin(input_shape, 0.0f);
  const size_t n = size_t(gin.spatial());
  cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, Ci, int(n), Co, 1.0f,
              weights.data.data(), Ci, grad_out.data.data(), int(n), 0.0f,
              gin.data.data(), int(n));
  return gin;
}

void pointwise_dense_backward_params(const Tensor& in, const Tensor& grad_out,
                                     Tensor& grad_weights, Tensor& grad_bias) {
  const int Ci = in.shape[0], Co = grad_out.shape[0];
  const size_t n = size_t(in.spatial());
  cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, Co, Ci, int(n), 1.0f,
              grad_out.data.data(), int(n), in.data.data(), int(n), 1.0f,
              grad_weights.data.data(), Ci);
  for (int co = 0; co < Co; ++co) {
    const float* g = grad_out.data.data() + size_t(co) * n;
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) s += g[i];
    grad_bias.data[co] += float(s);
  }
}

Tensor avgpool2(const Tensor& x) {
  const int C = x.shape[0], X = x.shape[1], Y = x.shape[2], Z = x.shape[3];
  if (X % 2 || Y % 2 || Z % 2)
    throw shape_error("avgpool2: extents must be even");
  Tensor y = tensor4(C, X / 2, Y / 2, Z / 2);
  for (int c = 0; c < C; ++c)
    for (int z = 0; z < Z / 2; ++z)
      for (int yy = 0; yy < Y / 2; ++yy)
        for (int xx = 0; xx < X / 2; ++xx) {
          float s = 0.0f;
          for (int dz = 0; dz < 2; ++dz)
            for (int dy = 0; dy < 2; ++dy)
              for (int dx = 0; dx < 2; ++dx)
                s += x.at4(c, 2 * xx + dx, 2 * yy + dy, 2 * z + dz);
          y.at4(c, xx, yy, z) = s * 0.125f;
        }
  return y;
}

Tensor avgpool2_backward(const Tensor& grad_y) {
  const int C = grad_y.shape[0];
  Tensor gx = tensor4(C, grad_y.shape[1] * 2, grad_y.shape[2] * 2,
                      grad_y.shape[3] * 2);
  for (int c = 0; c < C; ++c)
    for (int z = 0; z < grad_y.shape[3]; ++z)
      for (int yy = 0; yy < grad_y.shape[2]; ++yy)
        for (int xx = 0; xx < grad_y.shape[1]; ++xx) {
          const float g = grad_y.at4(c, xx, yy, z) * 0.125f;
          for (int dz = 0; dz < 2; ++dz)
            for (int dy = 0; dy < 2; ++dy)
              for (int dx = 0; dx < 2; ++dx)
                gx.at4(c, 2 * xx + dx, 2 * yy + dy, 2 * z + dz) = g;
        }
  return gx;
}

Tensor tconv2(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  if (kernel.shape.size() != 5 || kernel.shape[0] != x.shape[0])
    throw shape_error("tconv2: kernel shape mismatch");
  const int Ci = x.shape[0], Co = kernel.shape[1];
  const int X = x.shape[1], Y = x.shape[2], Z = x.shape[3];
  Tensor y = tensor4(Co, 2 * X, 2 * Y, 2 * Z);
  for (int co = 0; co < Co; ++co) {
    const float bv = bias.data[co];
    float* d = y.data.data() + size_t(co) * y.spatial();
    for (int64_t i = 0; i < y.spatial(); ++i) d[i] = bv;
  }
  for (int co = 0; co < Co; ++co)
    for (int ci = 0; ci < Ci; ++ci)
      for (int dz = 0; dz < 2; ++dz)
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const float w =
                kernel.data[((((size_t(ci) * Co + co) * 2 + dz) * 2 + dy) * 2 +
                             dx)];
            for (int z = 0; z < Z; ++z)
              for (int yy = 0; yy < Y; ++yy) {
                const float* src = &x.data[x.idx4(ci, 0, yy, z)];
                float* dst =
                    &y.data[y.idx4(co, dx, 2 * yy + dy, 2 * z + dz)];
                for (int xx = 0; xx < X; ++xx) dst[2 * xx] += w * src[xx];
              }
          }
  return y;
}

Tensor tconv2_backward_input(const std::vector<int>& input_shape,
                             const Tensor& kernel, const Tensor& grad_out) {
  const int Ci = input_shape[0], Co = kernel.shape[1];
  Tensor gx(input_shape, 0.0f);
  const int X = input_shape[1], Y = input_shape[2], Z = input_shape[3];
  for (int ci = 0; ci < Ci; ++ci)
    for (int co = 0; co < Co; ++co)
      for (int dz = 0; dz < 2; ++dz)
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const float w =
                kernel.data[((((size_t(ci) * Co + co) * 2 + dz) * 2 + dy) * 2 +
                             dx)];
            for (int z = 0; z < Z; ++z)
              for (int yy = 0; yy < Y; ++yy) {
                float* dst = &gx.data[gx.idx4(ci, 0, yy, z)];
                const float* src =
                    &grad_out.data[grad_out.idx4(co, dx, 2 * yy + dy,
                                                 2 * z + dz)];
                for (int xx = 0; xx < X; ++xx) dst[xx] += w * src[2 * xx];
              }
          }
  return gx;
}

void tconv2_backward_params(const Tensor& in, const Tensor& grad_out,
                            Tensor& grad_kernel, Tensor& grad_bias) {
  const int Ci = in.shape[0], Co = grad_out.shape[0];
  const int X = in.shape[1], Y = in.shape[2], Z = in.shape[3];
  for (int ci = 0; ci < Ci; ++ci)
    for (int co = 0; co < Co; ++co)
      for (int dz = 0; dz < 2; ++dz)
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            double s = 0.0;
            for (int z = 0; z < Z; ++z)
              for (int yy = 0; yy < Y; ++yy) {
                const float* a = &in.data[in.idx4(ci, 0, yy, z)];
                const float* g =
                    &grad_out.data[grad_out.idx4(co, dx, 2 * yy + dy,
                                                 2 * z + dz)];
                for (int xx = 0; xx < X; ++xx) s += double(a[xx]) * g[2 * xx];
              }
            grad_kernel.data[((((size_t(ci) * Co + co) * 2 + dz) * 2 + dy) *
                                  2 +
                              dx)] += float(s);
          }
  for (int co = 0; co < Co; ++co) {
    const float* g = grad_out.data.data() + size_t(co) * grad_out.spatial();
    double s = 0.0;
    for (int64_t i = 0; i < grad_out.spatial(); ++i) s += g[i];
    grad_bias.data[co] += float(s);
  }
}

Tensor pad3d_zero(const Tensor& x, int margin) {
  const int C = x.shape[0], X = x.shape[1], Y = x.shape[2], Z = x.shape[3];
  Tensor y = tensor4(C, X + 2 * margin, Y + 2 * margin, Z + 2 * margin);
  for (int c = 0; c < C; ++c)
    for (int z = 0; z < Z; ++z)
      for (int yy = 0; yy < Y; ++yy)
        std::memcpy(&y.data[y.idx4(c, margin, yy + margin, z + margin)],
                    &x.data[x.idx4(c, 0, yy, z)], sizeof(float) * size_t(X));
  return y;
}

Tensor crop3d(const Tensor& x, int margin) {
  const int C = x.shape[0];
  const int X = x.shape[1] - 2 * margin, Y = x.shape[2] - 2 * margin,
            Z = x.shape[3] - 2 * margin;
  Tensor y = tensor4(C, X, Y, Z);
  for (int c = 0; c < C; ++c)
    for (int z = 0; z < Z; ++z)
      for (int yy = 0; yy < Y; ++yy)
        std::memcpy(&y.data[y.idx4(c, 0, yy, z)],
                    &x.data[x.idx4(c, margin, yy + margin, z + margin)],
                    sizeof(float) * size_t(X));
  return y;
}

}  // namespace multiprior
