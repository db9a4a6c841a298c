#pragma once

#include <span>
#include <vector>

#include "multiprior/tensor.hpp"
#include "multiprior/volume.hpp"

namespace multiprior {

enum class Mode { Train, Infer };

// ---------------------------------------------------------------------------
// 3D convolution, 3x3x3 kernels, valid (no padding).
//
// Two forward engines with identical semantics:
//  * direct: fixed per-voxel tap order, bit-identical results for a given
//    output voxel regardless of the surrounding window extents. Dense
//    inference relies on this for exact tiling invariance.
//  * gemm: im2col + sgemm, faster; used by the training path where only
//    run-to-run determinism is required.
// Kernel layout {C_out, C_in, 3, 3, 3}, kx fastest.
// ---------------------------------------------------------------------------

Tensor conv3d_valid(const Tensor& input, const Tensor& kernel,
                    const Tensor& bias, bool allow_parallel = false);
Tensor conv3d_valid_gemm(const Tensor& input, const Tensor& kernel,
                         const Tensor& bias);

/// grad wrt input, shape of `input_shape` = {C_in, X, Y, Z}.
Tensor conv3d_backward_input(const std::vector<int>& input_shape,
                             const Tensor& kernel, const Tensor& grad_out);
/// Accumulates (+=) into grad_kernel / grad_bias.
void conv3d_backward_params(const Tensor& input, const Tensor& grad_out,
                            Tensor& grad_kernel, Tensor& grad_bias);

// ---------------------------------------------------------------------------
// Pointwise (1x1x1) dense layer across channels.
// Weights {C_out, C_in}, bias {C_out}.
// ---------------------------------------------------------------------------

Tensor pointwise_dense(const Tensor& input, const Tensor& weights,
                       const Tensor& bias);
Tensor pointwise_dense_backward_input(const std::vector<int>& input_shape,
                                      const Tensor& weights,
                                      const Tensor& grad_out);
void pointwise_dense_backward_params(const Tensor& input,
                                     const Tensor& grad_out,
                                     Tensor& grad_weights, Tensor& grad_bias);

// ---------------------------------------------------------------------------
// Pointwise nonlinearities and channel softmax.
// ---------------------------------------------------------------------------

Tensor leaky_relu(const Tensor& x, float alpha);
/// grad via the pre-activation sign; pre_act is the input to the relu.
Tensor leaky_relu_backward(const Tensor& pre_act, const Tensor& grad_y,
                           float alpha);

/// Per-voxel softmax over the channel axis, max-stabilized.
Tensor softmax_channels(const Tensor& x);
Tensor softmax_backward(const Tensor& y, const Tensor& grad_y);

// ---------------------------------------------------------------------------
// Resolution changes.
// ---------------------------------------------------------------------------

/// Each voxel becomes a factor^3 block.
Tensor upsample_replicate(const Tensor& x, int factor);
/// Sums gradients over each block.
Tensor upsample_replicate_backward(const Tensor& grad_y, int factor);

/// Separable Gaussian blur, replicate borders, kernel truncated at
/// 3*sigma and normalized. Operates on a single x-fastest scalar field.
void gaussian_blur3d(const float* in, float* out, Vec3i dims, double sigma);

/// Anti-aliased factor-3 downsampling: Gaussian blur (sigma = factor/2)
/// followed by subsampling at block centers. Extents are replicate-padded
/// up to a multiple of factor if needed.
Volume3D downsample_antialias(const Volume3D& vol, int factor);
Tensor downsample_antialias(const Tensor& x, int factor);

/// 2x average pooling (extents must be even).
Tensor avgpool2(const Tensor& x);
Tensor avgpool2_backward(const Tensor& grad_y);

/// Transposed convolution, kernel 2^3, stride 2 (disjoint output blocks).
/// Kernel layout {C_in, C_out, 2, 2, 2}.
Tensor tconv2(const Tensor& x, const Tensor& kernel, const Tensor& bias);
Tensor tconv2_backward_input(const std::vector<int>& input_shape,
                             const Tensor& kernel, const Tensor& grad_out);
void tconv2_backward_params(const Tensor& input, const Tensor& grad_out,
                            Tensor& grad_kernel, Tensor& grad_bias);

/// Zero padding of the spatial axes of a {C,X,Y,Z} tensor.
Tensor pad3d_zero(const Tensor& x, int margin);
/// Adjoint of pad3d_zero: crop the interior.
Tensor crop3d(const Tensor& x, int margin);

// ---------------------------------------------------------------------------
// Batch normalization over a minibatch of {C,...} tensors. Statistics are
// taken over all non-channel axes of all batch items jointly (population
// convention). Placement in this codebase: after convolution, before the
// nonlinearity.
// ---------------------------------------------------------------------------

struct BnCache {
  std::vector<Tensor> xhat;       // per batch item
  std::vector<float> inv_std;     // per channel (train: batch, infer: running)
  Mode mode = Mode::Train;
};

std::vector<Tensor> batch_norm_forward(std::span<const Tensor> xs,
                                       BatchNormState& state, Mode mode,
                                       bool update_running, BnCache* cache);

/// Single-tensor convenience (batch of one).
Tensor batch_norm(const Tensor& x, BatchNormState& state, Mode mode,
                  bool update_running = true);

/// Accumulates dgamma/dbeta into the state's parameter grads.
std::vector<Tensor> batch_norm_backward(std::span<const Tensor> grad_ys,
                                        const BnCache& cache,
                                        BatchNormState& state);

/// Matches the global thread budget (0 = hardware default) and pins BLAS
/// to one thread per call site; call once at startup.
void set_num_threads(int n);
int num_threads();

}  // namespace multiprior
