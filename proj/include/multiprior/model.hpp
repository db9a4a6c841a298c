#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "multiprior/layers.hpp"

namespace multiprior {

/// (detail_input_edge, context_input_edge) for a cubic target patch.
struct PatchGeometry {
  int target = 0;
  int detail_input = 0;   // target + 16 (8 valid conv layers)
  int context_input = 0;  // target + 48 (context reach before downsampling)
};

/// target must be >= 1 and divisible by the context downsampling factor so
/// the context path re-aligns after upsampling.
PatchGeometry patch_geometry(int target_size, int context_downsample = 3);

struct MultipriorConfig {
  int n_detail_layers = 8;
  std::vector<int> features = {30, 30, 30, 30, 40, 40, 50, 50};
  int context_downsample = 3;
  int n_tpm_channels = kNumTpmChannels;
  int n_classes = kNumClasses;
  std::vector<int> classifier_hidden = {100, 60};
  float leaky_slope = 0.3f;

  int detail_receptive_field() const { return 1 + 2 * n_detail_layers; }
  int context_receptive_field() const {
    return context_downsample * detail_receptive_field();
  }
  void check() const;
};

/// Detail + Context + TPM + Classification network.
/// Concatenation order at the classifier input: detail features, context
/// features, TPM channels.
class MultipriorModel {
 public:
  explicit MultipriorModel(MultipriorConfig cfg);

  void init(uint64_t seed);

  /// detail: {1, t+16, ...}; context_lowres: {1, (t+48)/3, ...} (already
  /// downsampled); tpm: {6, t, ...}. Returns {7, t, ...} probabilities.
  Batch forward(Batch&& detail, Batch&& context_lowres, Batch&& tpm, Mode mode,
                bool update_running = true);
  Tensor forward_one(Tensor detail, Tensor context_lowres, Tensor tpm,
                     Mode mode);

  /// Gradients wrt the three inputs: {detail, context_lowres, tpm}.
  std::array<Batch, 3> backward(const Batch& grad_probs);

  std::vector<Parameter*> parameters();
  std::vector<std::pair<std::string, Tensor*>> state_tensors();
  int64_t parameter_count();
  const MultipriorConfig& config() const { return cfg_; }

 private:
  MultipriorConfig cfg_;
  std::vector<ConvBlock> detail_;
  std::vector<ConvBlock> context_;
  std::vector<DenseBlock> classifier_;
  std::array<int, 3> concat_split_{};  // detail, context, tpm channel counts
  std::vector<std::vector<int>> ctx_pre_up_shapes_;
};

struct UNetConfig {
  int base_features = 42;  // lands the parameter count near 4e6
  int n_tpm_channels = kNumTpmChannels;
  int n_classes = kNumClasses;
  float leaky_slope = 0.3f;
  int patch_edge = 32;
};

/// Volumetric U-Net: 3 down blocks (two same-padded convs + avg pool) and
/// 3 up blocks (transposed conv + residual add from the matching encoder
/// scale + two convs). TPM channels concatenate before the classification
/// layer. 32^3 in, 32^3 out.
class UNetModel {
 public:
  explicit UNetModel(UNetConfig cfg);

  void init(uint64_t seed);
  Batch forward(Batch&& patch, Batch&& tpm, Mode mode,
                bool update_running = true);
  Tensor forward_one(Tensor patch, Tensor tpm, Mode mode);
  /// Gradients wrt {patch, tpm}.
  std::array<Batch, 2> backward(const Batch& grad_probs);

  std::vector<Parameter*> parameters();
  std::vector<std::pair<std::string, Tensor*>> state_tensors();
  int64_t parameter_count();
  const UNetConfig& config() const { return cfg_; }

 private:
  UNetConfig cfg_;
  std::vector<ConvBlock> enc_;   // 6 conv blocks (2 per scale)
  std::vector<TConvBlock> up_;   // 3
  std::vector<ConvBlock> dec_;   // 6
  DenseBlock head_;
  // saved activations for the residual adds and pool backwards
  Batch e1_, e2_, e3_;
};

}  // namespace multiprior
