#pragma once

#include <cassert>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "multiprior/common.hpp"

namespace multiprior {

/// Dense 32-bit tensor. Activations use layout {C, X, Y, Z} with x
/// fastest: index(c,x,y,z) = ((c*Z + z)*Y + y)*X + x.
struct Tensor {
  std::vector<int> shape;
  std::vector<float> data;
  std::vector<float> grad;  // optional; empty or data.size()

  Tensor() = default;
  explicit Tensor(std::vector<int> s, float fill = 0.0f) : shape(std::move(s)) {
    data.assign(size_t(numel()), fill);
  }

  int64_t numel() const {
    int64_t n = 1;
    for (int e : shape) n *= e;
    return n;
  }

  // {C, X, Y, Z} accessors
  int channels() const { return shape[0]; }
  int nx() const { return shape[1]; }
  int ny() const { return shape[2]; }
  int nz() const { return shape[3]; }
  int64_t spatial() const { return int64_t(nx()) * ny() * nz(); }

  size_t idx4(int c, int x, int y, int z) const {
    return ((size_t(c) * shape[3] + z) * shape[2] + y) * shape[1] + x;
  }
  float at4(int c, int x, int y, int z) const {
    return data[idx4(c, x, y, z)];
  }
  float& at4(int c, int x, int y, int z) { return data[idx4(c, x, y, z)]; }

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0f);
  }
};

inline Tensor tensor4(int c, int x, int y, int z, float fill = 0.0f) {
  return Tensor({c, x, y, z}, fill);
}

/// Learnable tensor with gradient buffer and Adam moment state.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor adam_m;
  Tensor adam_v;
  int64_t step = 0;

  Parameter() = default;
  Parameter(std::string n, std::vector<int> shape)
      : name(std::move(n)),
        value(shape),
        grad(shape),
        adam_m(shape),
        adam_v(std::move(shape)) {}

  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0f); }
};

struct BatchNormState {
  Parameter gamma;  // scale, init 1
  Parameter beta;   // shift, init 0
  Tensor running_mean;
  Tensor running_var;
  float momentum = 0.9f;
  float epsilon = 1e-5f;

  BatchNormState() = default;
  BatchNormState(const std::string& prefix, int channels)
      : gamma(prefix + ".gamma", {channels}),
        beta(prefix + ".beta", {channels}),
        running_mean(std::vector<int>{channels}),
        running_var(std::vector<int>{channels}) {
    std::fill(gamma.value.data.begin(), gamma.value.data.end(), 1.0f);
    std::fill(running_var.data.begin(), running_var.data.end(), 1.0f);
  }
};

struct AdamConfig {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  float weight_decay = 0.0f;
};

/// Standard Adam update with bias correction. The L2 penalty is added to
/// the gradient as weight_decay * value before the moment updates; grads
/// are cleared afterwards and each parameter's step counter increments.
void adam_step(const std::vector<Parameter*>& params, const AdamConfig& cfg);

}  // namespace multiprior
