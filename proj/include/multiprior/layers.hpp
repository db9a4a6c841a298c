#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "multiprior/ops.hpp"
#include "multiprior/rng.hpp"

namespace multiprior {

using Batch = std::vector<Tensor>;

/// conv3d(3^3, valid or same) + batch norm + leaky relu.
/// Forward over a whole minibatch so the normalization statistics span it.
class ConvBlock {
 public:
  ConvBlock(const std::string& name, int c_in, int c_out, float slope,
            bool same_pad = false);

  /// Train mode uses the gemm engine and caches activations for backward;
  /// infer mode uses the extent-invariant direct engine and keeps nothing.
  Batch forward(Batch&& x, Mode mode, bool update_running = true);
  /// Returns grads wrt the block inputs; accumulates parameter grads.
  Batch backward(const Batch& grad_y);

  void init(Rng& rng);
  void collect_params(std::vector<Parameter*>& out);
  void collect_state(std::vector<std::pair<std::string, Tensor*>>& out);
  int out_channels() const { return kernel_.value.shape[0]; }

 private:
  Parameter kernel_, bias_;
  BatchNormState bn_;
  float slope_;
  bool same_pad_;
  // train-mode caches
  Batch in_cache_;
  BnCache bn_cache_;
};

enum class Activation { LeakyRelu, Softmax, None };

/// pointwise (1^3) dense layer + optional batch norm + activation.
class DenseBlock {
 public:
  DenseBlock(const std::string& name, int c_in, int c_out, float slope,
             bool with_bn, Activation act);

  Batch forward(Batch&& x, Mode mode, bool update_running = true);
  Batch backward(const Batch& grad_y);

  void init(Rng& rng);
  void collect_params(std::vector<Parameter*>& out);
  void collect_state(std::vector<std::pair<std::string, Tensor*>>& out);

 private:
  Parameter weights_, bias_;
  std::optional<BatchNormState> bn_;
  float slope_;
  Activation act_;
  Batch in_cache_;
  Batch out_cache_;  // softmax output (needed for its backward)
  BnCache bn_cache_;
};

/// transposed conv 2^3 stride 2 + batch norm + leaky relu (U-Net upsampling).
class TConvBlock {
 public:
  TConvBlock(const std::string& name, int c_in, int c_out, float slope);

  Batch forward(Batch&& x, Mode mode, bool update_running = true);
  Batch backward(const Batch& grad_y);

  void init(Rng& rng);
  void collect_params(std::vector<Parameter*>& out);
  void collect_state(std::vector<std::pair<std::string, Tensor*>>& out);

 private:
  Parameter kernel_, bias_;
  BatchNormState bn_;
  float slope_;
  Batch in_cache_;
  BnCache bn_cache_;
};

/// He-style fan-in init adjusted for the leaky slope; bias stays zero.
/// Each parameter draws from a substream named after it, so values do not
/// depend on initialization order.
void he_init(Parameter& p, int fan_in, float slope, const Rng& base);

}  // namespace multiprior
