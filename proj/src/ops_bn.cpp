#include <cmath>

#include "multiprior/ops.hpp"

namespace multiprior {

// Statistics and their reductions run per channel in a fixed order
// (batch item, then element) with double accumulators, so results do not
// depend on threading.

std::vector<Tensor> batch_norm_forward(std::span<const Tensor> xs,
                                       BatchNormState& state, Mode mode,
                                       bool update_running, BnCache* cache) {
  if (xs.empty()) throw shape_error("batch_norm: empty batch");
  const int C = xs[0].shape[0];
  if (state.gamma.value.numel() != C)
    throw shape_error("batch_norm: channel count mismatch");

  std::vector<Tensor> ys(xs.size());
  for (size_t e = 0; e < xs.size(); ++e) ys[e] = Tensor(xs[e].shape);
  if (cache) {
    cache->mode = mode;
    cache->inv_std.assign(size_t(C), 0.0f);
    if (mode == Mode::Train) {
      cache->xhat.resize(xs.size());
      for (size_t e = 0; e < xs.size(); ++e)
        cache->xhat[e] = Tensor(xs[e].shape);
    }
  }

  if (mode == Mode::Infer) {
#pragma omp parallel for schedule(static)
    for (int c = 0; c < C; ++c) {
      const float inv =
          1.0f / std::sqrt(state.running_var.data[c] + state.epsilon);
      const float a = state.gamma.value.data[c] * inv;
      const float b = state.beta.value.data[c] -
                      state.running_mean.data[c] * a;
      for (size_t e = 0; e < xs.size(); ++e) {
        const size_t n = size_t(xs[e].numel() / C);
        const float* x = xs[e].data.data() + size_t(c) * n;
        float* y = ys[e].data.data() + size_t(c) * n;
        for (size_t i = 0; i < n; ++i) y[i] = x[i] * a + b;
      }
      if (cache) cache->inv_std[c] = inv;
    }
    return ys;
  }

#pragma omp parallel for schedule(static)
  for (int c = 0; c < C; ++c) {
    double sum = 0.0;
    int64_t count = 0;
    for (size_t e = 0; e < xs.size(); ++e) {
      const size_t n = size_t(xs[e].numel() / C);
      const float* x = xs[e].data.data() + size_t(c) * n;
      for (size_t i = 0; i < n; ++i) sum += x[i];
      count += int64_t(n);
    }
    const double mean = sum / double(count);
    double ss = 0.0;
    for (size_t e = 0; e < xs.size(); ++e) {
      const size_t n = size_t(xs[e].numel() / C);
      const float* x = xs[e].data.data() + size_t(c) * n;
      for (size_t i = 0; i < n; ++i) {
        double d = double(x[i]) - mean;
        ss += d * d;
      }
    }
    const double var = ss / double(count);
    const float inv = float(1.0 / std::sqrt(var + double(state.epsilon)));
    const float g = state.gamma.value.data[c];
    const float b = state.beta.value.data[c];
    const float m = float(mean);
    for (size_t e = 0; e < xs.size(); ++e) {
      const size_t n = size_t(xs[e].numel() / C);
      const float* x = xs[e].data.data() + size_t(c) * n;
      float* y = ys[e].data.data() + size_t(c) * n;
      float* xh = cache ? cache->xhat[e].data.data() + size_t(c) * n : nullptr;
      for (size_t i = 0; i < n; ++i) {
        const float h = (x[i] - m) * inv;
        if (xh) xh[i] = h;
        y[i] = g * h + b;
      }
    }
    if (cache) cache->inv_std[c] = inv;
    if (update_running) {
      const float mom = state.momentum;
      state.running_mean.data[c] =
          mom * state.running_mean.data[c] + (1.0f - mom) * float(mean);
      state.running_var.data[c] =
          mom * state.running_var.data[c] + (1.0f - mom) * float(var);
    }
  }
  return ys;
}

Tensor batch_norm(const Tensor& x, BatchNormState& state, Mode mode,
                  bool update_running) {
  std::vector<Tensor> ys = batch_norm_forward(std::span(&x, 1), state, mode,
                                              update_running, nullptr);
  return std::move(ys[0]);
}

std::vector<Tensor> batch_norm_backward(std::span<const Tensor> grad_ys,
                                        const BnCache& cache,
                                        BatchNormState& state) {
  const int C = grad_ys[0].shape[0];
  std::vector<Tensor> gxs(grad_ys.size());
  for (size_t e = 0; e < grad_ys.size(); ++e)
    gxs[e] = Tensor(grad_ys[e].shape);

  if (cache.mode == Mode::Infer) {
#pragma omp parallel for schedule(static)
    for (int c = 0; c < C; ++c) {
      const float a = state.gamma.value.data[c] * cache.inv_std[c];
      for (size_t e = 0; e < grad_ys.size(); ++e) {
        const size_t n = size_t(grad_ys[e].numel() / C);
        const float* gy = grad_ys[e].data.data() + size_t(c) * n;
        float* gx = gxs[e].data.data() + size_t(c) * n;
        for (size_t i = 0; i < n; ++i) gx[i] = gy[i] * a;
      }
    }
    return gxs;
  }

#pragma omp parallel for schedule(static)
  for (int c = 0; c < C; ++c) {
    double s1 = 0.0, s2 = 0.0;
    int64_t count = 0;
    for (size_t e = 0; e < grad_ys.size(); ++e) {
      const size_t n = size_t(grad_ys[e].numel() / C);
      const float* gy = grad_ys[e].data.data() + size_t(c) * n;
      const float* xh = cache.xhat[e].data.data() + size_t(c) * n;
      for (size_t i = 0; i < n; ++i) {
        s1 += gy[i];
        s2 += double(gy[i]) * xh[i];
      }
      count += int64_t(n);
    }
    state.beta.grad.data[c] += float(s1);
    state.gamma.grad.data[c] += float(s2);
    const float g = state.gamma.value.data[c];
    const float inv = cache.inv_std[c];
    const float k1 = float(s1 / double(count));
    const float k2 = float(s2 / double(count));
    for (size_t e = 0; e < grad_ys.size(); ++e) {
      const size_t n = size_t(grad_ys[e].numel() / C);
      const float* gy = grad_ys[e].data.data() + size_t(c) * n;
      const float* xh = cache.xhat[e].data.data() + size_t(c) * n;
      float* gx = gxs[e].data.data() + size_t(c) * n;
      for (size_t i = 0; i < n; ++i)
        gx[i] = g * inv * (gy[i] - k1 - xh[i] * k2);
    }
  }
  return gxs;
}

}  // namespace multiprior
