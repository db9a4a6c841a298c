#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace multiprior {

inline constexpr const char* kVersion = "0.1.0";

// Tissue classes, in label order.
inline constexpr int kNumClasses = 7;
inline constexpr int kNumTpmChannels = 6;

enum class TissueClass : uint8_t {
  Background = 0,
  AirCavity = 1,
  Skin = 2,
  Bone = 3,
  Csf = 4,
  GrayMatter = 5,
  WhiteMatter = 6,
};

inline constexpr std::array<const char*, kNumClasses> kClassNames = {
    "background", "air_cavity", "skin", "bone",
    "csf",        "gray_matter", "white_matter"};

// TPM channel order: skin, bone, CSF, GM, WM, air.
inline constexpr std::array<const char*, kNumTpmChannels> kTpmChannelNames = {
    "skin", "bone", "csf", "gray_matter", "white_matter", "air"};

// Label corresponding to each TPM channel. The air channel stands for
// air cavities (label 1); exterior background has no TPM channel.
inline constexpr std::array<int, kNumTpmChannels> kTpmChannelLabel = {2, 3, 4,
                                                                      5, 6, 1};

struct Vec3i {
  int x = 0, y = 0, z = 0;
  friend bool operator==(const Vec3i&, const Vec3i&) = default;
};

inline std::int64_t voxel_count(const Vec3i& d) {
  return std::int64_t(d.x) * d.y * d.z;
}

// Error categories. The CLI maps usage errors to exit 1 and any of
// these to exit 2.
struct format_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct unsupported_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct shape_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct degenerate_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace multiprior
