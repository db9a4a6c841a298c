#pragma once

#include <string>

#include "multiprior/volume.hpp"

namespace multiprior {

// NIfTI-1 subset: single-file .nii, dim[0]=3 (or 4 for the channel
// volumes below), datatype uint8 / int16 / float32, endianness detected
// via sizeof_hdr. Orientation and affine fields are carried through
// round trips verbatim but never interpreted.

Volume3D read_nifti(const std::string& path);
LabelVolume read_nifti_labels(const std::string& path);

void write_nifti(const Volume3D& vol, const std::string& path);
void write_nifti(const LabelVolume& labels, const std::string& path);

/// 4D variants used for tissue probability maps (6 channels) and class
/// probability volumes (7 channels); dim[0]=4, channels in dim[4].
ChannelVolume read_nifti_channels(const std::string& path);
void write_nifti_channels(const ChannelVolume& vol, const std::string& path);

TissueProbabilityMap read_tpm(const std::string& path);
ProbabilityVolume read_probability_volume(const std::string& path);

/// Auxiliary raw format for tests: <path>.json sidecar with
/// {dims, spacing, dtype} plus little-endian raw data at <path>.
Volume3D read_raw(const std::string& raw_path);
void write_raw(const Volume3D& vol, const std::string& raw_path);

}  // namespace multiprior
