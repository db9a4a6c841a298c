#include "multiprior/volume.hpp"

#include <cmath>
#include <cstring>

namespace multiprior {

Volume3D zscore_normalize(const Volume3D& vol) {
  const int64_t n = voxel_count(vol.dims);
  if (n < 2) throw degenerate_error("zscore: volume has fewer than 2 voxels");
  double sum = 0.0;
  for (float v : vol.data) sum += v;
  const double mean = sum / double(n);
  double ss = 0.0;
  for (float v : vol.data) {
    double d = double(v) - mean;
    ss += d * d;
  }
  const double var = ss / double(n);
  if (!(var > 0.0))
    throw degenerate_error("zscore: zero variance (corrupt or constant input)");
  const double inv_std = 1.0 / std::sqrt(var);
  Volume3D out = vol;
  for (float& v : out.data) v = float((double(v) - mean) * inv_std);
  return out;
}

Volume3D zero_pad(const Volume3D& vol, int margin) {
  if (margin < 0) throw shape_error("zero_pad: negative margin");
  return zero_pad(vol, {margin, margin, margin}, {margin, margin, margin});
}

Volume3D zero_pad(const Volume3D& vol, Vec3i lo, Vec3i hi) {
  Vec3i nd{vol.dims.x + lo.x + hi.x, vol.dims.y + lo.y + hi.y,
           vol.dims.z + lo.z + hi.z};
  Volume3D out(nd, 0.0f, vol.spacing);
  for (int z = 0; z < vol.dims.z; ++z)
    for (int y = 0; y < vol.dims.y; ++y) {
      const float* src = &vol.data[vol.index(0, y, z)];
      float* dst = &out.data[out.index(lo.x, y + lo.y, z + lo.z)];
      std::memcpy(dst, src, sizeof(float) * size_t(vol.dims.x));
    }
  return out;
}

ProbabilityVolume one_hot_encode(const LabelVolume& labels, int n_classes) {
  ProbabilityVolume out(labels.dims, 0.0f, labels.spacing);
  out.channels = n_classes;
  out.data.assign(size_t(n_classes) * out.nvox(), 0.0f);
  const size_t nv = out.nvox();
  for (size_t i = 0; i < nv; ++i) {
    uint8_t l = labels.labels[i];
    if (l >= n_classes)
      throw shape_error("one_hot_encode: label out of range");
    out.data[size_t(l) * nv + i] = 1.0f;
  }
  return out;
}

LabelVolume argmax_labels(const ChannelVolume& probs) {
  LabelVolume out(probs.dims, 0, probs.spacing);
  const size_t nv = probs.nvox();
  for (size_t i = 0; i < nv; ++i) {
    float best = probs.data[i];
    int arg = 0;
    for (int c = 1; c < probs.channels; ++c) {
      float v = probs.data[size_t(c) * nv + i];
      if (v > best) {  // ties stay on the lower index
        best = v;
        arg = c;
      }
    }
    out.labels[i] = uint8_t(arg);
  }
  return out;
}

void validate(const Volume3D& v) {
  if (v.dims.x <= 0 || v.dims.y <= 0 || v.dims.z <= 0)
    throw shape_error("Volume3D: non-positive dims");
  if (v.data.size() != size_t(voxel_count(v.dims)))
    throw shape_error("Volume3D: data length mismatch");
  for (float s : v.spacing)
    if (!(s > 0.0f)) throw shape_error("Volume3D: non-positive spacing");
  for (float x : v.data)
    if (!std::isfinite(x)) throw degenerate_error("Volume3D: non-finite value");
}

void validate(const LabelVolume& v) {
  if (v.labels.size() != size_t(voxel_count(v.dims)))
    throw shape_error("LabelVolume: length mismatch");
  for (uint8_t l : v.labels)
    if (l >= kNumClasses) throw shape_error("LabelVolume: label out of range");
}

void validate(const TissueProbabilityMap& v) {
  if (v.channels != kNumTpmChannels)
    throw shape_error("TPM: expected 6 channels");
  if (v.data.size() != size_t(v.channels) * v.nvox())
    throw shape_error("TPM: length mismatch");
  const size_t nv = v.nvox();
  for (size_t i = 0; i < nv; ++i) {
    double s = 0.0;
    for (int c = 0; c < v.channels; ++c) {
      float p = v.data[size_t(c) * nv + i];
      if (!(p >= 0.0f && p <= 1.0f + 1e-4f))
        throw degenerate_error("TPM: probability outside [0,1]");
      s += p;
    }
    if (s > 1.0 + 1e-4) throw degenerate_error("TPM: channel sum exceeds 1");
  }
}

void validate(const ProbabilityVolume& v) {
  if (v.channels != kNumClasses)
    throw shape_error("ProbabilityVolume: expected 7 channels");
  if (v.data.size() != size_t(v.channels) * v.nvox())
    throw shape_error("ProbabilityVolume: length mismatch");
  const size_t nv = v.nvox();
  for (size_t i = 0; i < nv; ++i) {
    double s = 0.0;
    for (int c = 0; c < v.channels; ++c) {
      float p = v.data[size_t(c) * nv + i];
      if (!(p >= 0.0f && p <= 1.0f + 1e-5f))
        throw degenerate_error("ProbabilityVolume: value outside [0,1]");
      s += p;
    }
    if (std::abs(s - 1.0) > 1e-5)
      throw degenerate_error("ProbabilityVolume: per-voxel sum != 1");
  }
}

}  // namespace multiprior
