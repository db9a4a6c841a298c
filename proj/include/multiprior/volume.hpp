#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

#include "multiprior/common.hpp"

namespace multiprior {

/// Raw NIfTI-1 header bytes carried through read->write round trips so
/// orientation/affine fields survive verbatim (they are not interpreted).
using NiftiHeaderCarry = std::array<unsigned char, 348>;

/// 3D scalar field. Storage is x-fastest: index (x,y,z) = (z*ny + y)*nx + x.
struct Volume3D {
  Vec3i dims;
  std::array<float, 3> spacing = {1.0f, 1.0f, 1.0f};
  std::vector<float> data;
  std::shared_ptr<const NiftiHeaderCarry> header_carry;  // optional

  Volume3D() = default;
  Volume3D(Vec3i d, float fill = 0.0f,
           std::array<float, 3> sp = {1.0f, 1.0f, 1.0f})
      : dims(d), spacing(sp), data(size_t(voxel_count(d)), fill) {}

  size_t index(int x, int y, int z) const {
    return (size_t(z) * dims.y + y) * dims.x + x;
  }
  float at(int x, int y, int z) const { return data[index(x, y, z)]; }
  float& at(int x, int y, int z) { return data[index(x, y, z)]; }
};

/// Per-voxel class labels in 0..6, same layout as Volume3D.
struct LabelVolume {
  Vec3i dims;
  std::array<float, 3> spacing = {1.0f, 1.0f, 1.0f};
  std::vector<uint8_t> labels;
  std::shared_ptr<const NiftiHeaderCarry> header_carry;

  LabelVolume() = default;
  LabelVolume(Vec3i d, uint8_t fill = 0,
              std::array<float, 3> sp = {1.0f, 1.0f, 1.0f})
      : dims(d), spacing(sp), labels(size_t(voxel_count(d)), fill) {}

  size_t index(int x, int y, int z) const {
    return (size_t(z) * dims.y + y) * dims.x + x;
  }
  uint8_t at(int x, int y, int z) const { return labels[index(x, y, z)]; }
  uint8_t& at(int x, int y, int z) { return labels[index(x, y, z)]; }
};

/// Channel-major multi-channel volume: channel c starts at c * nvox.
struct ChannelVolume {
  Vec3i dims;
  std::array<float, 3> spacing = {1.0f, 1.0f, 1.0f};
  int channels = 0;
  std::vector<float> data;

  ChannelVolume() = default;
  ChannelVolume(int nch, Vec3i d, float fill = 0.0f,
                std::array<float, 3> sp = {1.0f, 1.0f, 1.0f})
      : dims(d),
        spacing(sp),
        channels(nch),
        data(size_t(nch) * size_t(voxel_count(d)), fill) {}

  size_t nvox() const { return size_t(voxel_count(dims)); }
  float* channel(int c) { return data.data() + size_t(c) * nvox(); }
  const float* channel(int c) const { return data.data() + size_t(c) * nvox(); }
  size_t vindex(int x, int y, int z) const {
    return (size_t(z) * dims.y + y) * dims.x + x;
  }
  float at(int c, int x, int y, int z) const {
    return data[size_t(c) * nvox() + vindex(x, y, z)];
  }
  float& at(int c, int x, int y, int z) {
    return data[size_t(c) * nvox() + vindex(x, y, z)];
  }
};

/// 6 tissue prior channels (skin, bone, CSF, GM, WM, air), each in [0,1],
/// per-voxel channel sum <= 1 + 1e-4.
struct TissueProbabilityMap : ChannelVolume {
  TissueProbabilityMap() { channels = kNumTpmChannels; }
  explicit TissueProbabilityMap(Vec3i d, float fill = 0.0f,
                                std::array<float, 3> sp = {1.0f, 1.0f, 1.0f})
      : ChannelVolume(kNumTpmChannels, d, fill, sp) {}
};

/// 7 class-probability channels summing to 1 per voxel (within 1e-5).
struct ProbabilityVolume : ChannelVolume {
  ProbabilityVolume() { channels = kNumClasses; }
  explicit ProbabilityVolume(Vec3i d, float fill = 0.0f,
                             std::array<float, 3> sp = {1.0f, 1.0f, 1.0f})
      : ChannelVolume(kNumClasses, d, fill, sp) {}
};

/// Per-scan z-scoring (population convention, divisor N).
/// Throws degenerate_error on fewer than 2 voxels or zero variance.
Volume3D zscore_normalize(const Volume3D& vol);

/// Grow every axis by 2*margin, zero-filled border, input copied to the
/// interior.
Volume3D zero_pad(const Volume3D& vol, int margin);

/// General asymmetric zero padding (lo/hi voxels per axis).
Volume3D zero_pad(const Volume3D& vol, Vec3i lo, Vec3i hi);

/// One-hot encoding into n_classes channels.
ProbabilityVolume one_hot_encode(const LabelVolume& labels,
                                 int n_classes = kNumClasses);

/// Per-voxel argmax over channels; ties break toward the lower index.
LabelVolume argmax_labels(const ChannelVolume& probs);

/// Throws shape_error/degenerate_error if invariants are violated.
void validate(const Volume3D& v);
void validate(const LabelVolume& v);
void validate(const TissueProbabilityMap& v);
void validate(const ProbabilityVolume& v);

}  // namespace multiprior
