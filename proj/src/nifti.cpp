#include "multiprior/nifti.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace multiprior {

namespace {

// nifti_1_header, 348 bytes. Field offsets follow the standard layout.
#pragma pack(push, 1)
struct NiftiHeader {
  int32_t sizeof_hdr;     // 0
  char data_type[10];     // 4
  char db_name[18];       // 14
  int32_t extents;        // 32
  int16_t session_error;  // 36
  char regular;           // 38
  char dim_info;          // 39
  int16_t dim[8];         // 40
  float intent_p1;        // 56
  float intent_p2;        // 60
  float intent_p3;        // 64
  int16_t intent_code;    // 68
  int16_t datatype;       // 70
  int16_t bitpix;         // 72
  int16_t slice_start;    // 74
  float pixdim[8];        // 76
  float vox_offset;       // 108
  float scl_slope;        // 112
  float scl_inter;        // 116
  int16_t slice_end;      // 120
  char slice_code;        // 122
  char xyzt_units;        // 123
  float cal_max;          // 124
  float cal_min;          // 128
  float slice_duration;   // 132
  float toffset;          // 136
  int32_t glmax;          // 140
  int32_t glmin;          // 144
  char descrip[80];       // 148
  char aux_file[24];      // 228
  int16_t qform_code;     // 252
  int16_t sform_code;     // 254
  float quatern_b;        // 256
  float quatern_c;        // 260
  float quatern_d;        // 264
  float qoffset_x;        // 268
  float qoffset_y;        // 272
  float qoffset_z;        // 276
  float srow_x[4];        // 280
  float srow_y[4];        // 296
  float srow_z[4];        // 312
  char intent_name[16];   // 328
  char magic[4];          // 344
};
#pragma pack(pop)
static_assert(sizeof(NiftiHeader) == 348, "NIfTI-1 header must be 348 bytes");

constexpr int16_t DT_UINT8 = 2;
constexpr int16_t DT_INT16 = 4;
constexpr int16_t DT_FLOAT32 = 16;

template <typename T>
void bswap(T& v) {
  auto* b = reinterpret_cast<unsigned char*>(&v);
  for (size_t i = 0; i < sizeof(T) / 2; ++i)
    std::swap(b[i], b[sizeof(T) - 1 - i]);
}

void swap_header(NiftiHeader& h) {
  bswap(h.sizeof_hdr);
  bswap(h.extents);
  bswap(h.session_error);
  for (auto& d : h.dim) bswap(d);
  bswap(h.intent_p1);
  bswap(h.intent_p2);
  bswap(h.intent_p3);
  bswap(h.intent_code);
  bswap(h.datatype);
  bswap(h.bitpix);
  bswap(h.slice_start);
  for (auto& p : h.pixdim) bswap(p);
  bswap(h.vox_offset);
  bswap(h.scl_slope);
  bswap(h.scl_inter);
  bswap(h.slice_end);
  bswap(h.cal_max);
  bswap(h.cal_min);
  bswap(h.slice_duration);
  bswap(h.toffset);
  bswap(h.glmax);
  bswap(h.glmin);
  bswap(h.qform_code);
  bswap(h.sform_code);
  bswap(h.quatern_b);
  bswap(h.quatern_c);
  bswap(h.quatern_d);
  bswap(h.qoffset_x);
  bswap(h.qoffset_y);
  bswap(h.qoffset_z);
  for (auto& s : h.srow_x) bswap(s);
  for (auto& s : h.srow_y) bswap(s);
  for (auto& s : h.srow_z) bswap(s);
}

struct RawImage {
  NiftiHeader hdr;
  Vec3i dims;
  int channels = 1;
  std::array<float, 3> spacing;
  std::vector<float> data;  // scaled, converted to float
};

RawImage read_any(const std::string& path, bool allow_4d) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open " + path);

  NiftiHeader h{};
  f.read(reinterpret_cast<char*>(&h), sizeof(h));
  if (!f) throw format_error(path + ": truncated header");

  bool swapped = false;
  if (h.sizeof_hdr != 348) {
    swap_header(h);
    swapped = true;
    if (h.sizeof_hdr != 348)
      throw format_error(path + ": bad sizeof_hdr (not a NIfTI-1 file)");
  }
  if (std::strncmp(h.magic, "n+1", 3) != 0 || h.magic[3] != '\0')
    throw format_error(path + ": bad magic (expected single-file n+1)");
  if (h.vox_offset < 352.0f)
    throw format_error(path + ": vox_offset below 352");

  if (h.dim[0] != 3 && !(allow_4d && h.dim[0] == 4))
    throw unsupported_error(path + ": only 3D volumes are supported (dim[0]=" +
                            std::to_string(h.dim[0]) + ")");

  RawImage img;
  img.hdr = h;
  img.dims = {h.dim[1], h.dim[2], h.dim[3]};
  img.channels = (h.dim[0] == 4) ? h.dim[4] : 1;
  if (img.dims.x <= 0 || img.dims.y <= 0 || img.dims.z <= 0 ||
      img.channels <= 0)
    throw format_error(path + ": non-positive dimensions");
  img.spacing = {h.pixdim[1], h.pixdim[2], h.pixdim[3]};

  size_t bpp;
  switch (h.datatype) {
    case DT_UINT8: bpp = 1; break;
    case DT_INT16: bpp = 2; break;
    case DT_FLOAT32: bpp = 4; break;
    default:
      throw unsupported_error(path + ": unsupported datatype " +
                              std::to_string(h.datatype));
  }

  const size_t n = size_t(voxel_count(img.dims)) * size_t(img.channels);
  f.seekg(std::streamoff(h.vox_offset), std::ios::beg);
  std::vector<char> raw(n * bpp);
  f.read(raw.data(), std::streamsize(raw.size()));
  if (!f) throw format_error(path + ": truncated voxel data");

  const bool scale = h.scl_slope != 0.0f;
  img.data.resize(n);
  for (size_t i = 0; i < n; ++i) {
    float v;
    switch (h.datatype) {
      case DT_UINT8:
        v = float(uint8_t(raw[i]));
        break;
      case DT_INT16: {
        int16_t s;
        std::memcpy(&s, raw.data() + 2 * i, 2);
        if (swapped) bswap(s);
        v = float(s);
        break;
      }
      default: {
        float x;
        std::memcpy(&x, raw.data() + 4 * i, 4);
        if (swapped) bswap(x);
        v = x;
        break;
      }
    }
    img.data[i] = scale ? h.scl_slope * v + h.scl_inter : v;
  }
  return img;
}

NiftiHeader fresh_header() {
  NiftiHeader h{};
  h.sizeof_hdr = 348;
  h.regular = 'r';
  for (auto& p : h.pixdim) p = 1.0f;
  h.pixdim[0] = 1.0f;
  h.vox_offset = 352.0f;
  h.scl_slope = 0.0f;
  h.scl_inter = 0.0f;
  h.xyzt_units = 2;  // mm
  std::snprintf(h.descrip, sizeof(h.descrip), "multiprior %s", kVersion);
  std::memcpy(h.magic, "n+1\0", 4);
  return h;
}

void write_any(const std::string& path, NiftiHeader h, int16_t datatype,
               Vec3i dims, int channels, std::array<float, 3> spacing,
               const void* bytes, size_t nbytes) {
  h.sizeof_hdr = 348;
  h.dim[0] = int16_t(channels > 1 ? 4 : 3);
  h.dim[1] = int16_t(dims.x);
  h.dim[2] = int16_t(dims.y);
  h.dim[3] = int16_t(dims.z);
  h.dim[4] = int16_t(channels > 1 ? channels : 1);
  for (int i = 5; i < 8; ++i) h.dim[i] = 1;
  h.pixdim[1] = spacing[0];
  h.pixdim[2] = spacing[1];
  h.pixdim[3] = spacing[2];
  h.datatype = datatype;
  h.bitpix = int16_t(datatype == DT_UINT8 ? 8 : datatype == DT_INT16 ? 16 : 32);
  h.vox_offset = 352.0f;
  h.scl_slope = 0.0f;
  h.scl_inter = 0.0f;
  std::memcpy(h.magic, "n+1\0", 4);

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw io_error("cannot write " + path);
  f.write(reinterpret_cast<const char*>(&h), sizeof(h));
  const char pad[4] = {0, 0, 0, 0};
  f.write(pad, 4);  // to vox_offset 352
  f.write(static_cast<const char*>(bytes), std::streamsize(nbytes));
  if (!f) throw io_error("short write to " + path);
}

NiftiHeader carried_or_fresh(
    const std::shared_ptr<const NiftiHeaderCarry>& carry) {
  if (!carry) return fresh_header();
  NiftiHeader h{};
  std::memcpy(&h, carry->data(), sizeof(h));
  if (h.sizeof_hdr != 348) swap_header(h);  // carries are native order already
  return h;
}

std::shared_ptr<const NiftiHeaderCarry> make_carry(const NiftiHeader& h) {
  auto carry = std::make_shared<NiftiHeaderCarry>();
  std::memcpy(carry->data(), &h, sizeof(h));
  return carry;
}

}  // namespace

Volume3D read_nifti(const std::string& path) {
  RawImage img = read_any(path, /*allow_4d=*/false);
  Volume3D vol;
  vol.dims = img.dims;
  vol.spacing = img.spacing;
  vol.data = std::move(img.data);
  vol.header_carry = make_carry(img.hdr);
  return vol;
}

LabelVolume read_nifti_labels(const std::string& path) {
  RawImage img = read_any(path, /*allow_4d=*/false);
  LabelVolume lab;
  lab.dims = img.dims;
  lab.spacing = img.spacing;
  lab.labels.resize(img.data.size());
  for (size_t i = 0; i < img.data.size(); ++i) {
    float v = img.data[i];
    long r = std::lround(v);
    if (r < 0 || r >= kNumClasses || std::abs(v - float(r)) > 1e-3f)
      throw format_error(path + ": voxel value is not a label in 0..6");
    lab.labels[i] = uint8_t(r);
  }
  lab.header_carry = make_carry(img.hdr);
  return lab;
}

void write_nifti(const Volume3D& vol, const std::string& path) {
  validate(vol);
  write_any(path, carried_or_fresh(vol.header_carry), DT_FLOAT32, vol.dims, 1,
            vol.spacing, vol.data.data(), vol.data.size() * 4);
}

void write_nifti(const LabelVolume& labels, const std::string& path) {
  validate(labels);
  write_any(path, carried_or_fresh(labels.header_carry), DT_UINT8, labels.dims,
            1, labels.spacing, labels.labels.data(), labels.labels.size());
}

ChannelVolume read_nifti_channels(const std::string& path) {
  RawImage img = read_any(path, /*allow_4d=*/true);
  ChannelVolume out;
  out.dims = img.dims;
  out.spacing = img.spacing;
  out.channels = img.channels;
  out.data = std::move(img.data);
  return out;
}

void write_nifti_channels(const ChannelVolume& vol, const std::string& path) {
  write_any(path, fresh_header(), DT_FLOAT32, vol.dims, vol.channels,
            vol.spacing, vol.data.data(), vol.data.size() * 4);
}

TissueProbabilityMap read_tpm(const std::string& path) {
  ChannelVolume cv = read_nifti_channels(path);
  if (cv.channels != kNumTpmChannels)
    throw format_error(path + ": expected 6 TPM channels, found " +
                       std::to_string(cv.channels));
  TissueProbabilityMap tpm(cv.dims, 0.0f, cv.spacing);
  tpm.data = std::move(cv.data);
  validate(tpm);
  return tpm;
}

ProbabilityVolume read_probability_volume(const std::string& path) {
  ChannelVolume cv = read_nifti_channels(path);
  if (cv.channels != kNumClasses)
    throw format_error(path + ": expected 7 probability channels, found " +
                       std::to_string(cv.channels));
  ProbabilityVolume pv(cv.dims, 0.0f, cv.spacing);
  pv.data = std::move(cv.data);
  return pv;
}

Volume3D read_raw(const std::string& raw_path) {
  std::ifstream jf(raw_path + ".json");
  if (!jf) throw io_error("cannot open " + raw_path + ".json");
  nlohmann::json j;
  try {
    jf >> j;
  } catch (const nlohmann::json::exception& e) {
    throw format_error(raw_path + ".json: " + e.what());
  }
  Volume3D vol;
  auto d = j.at("dims");
  vol.dims = {d.at(0).get<int>(), d.at(1).get<int>(), d.at(2).get<int>()};
  auto s = j.at("spacing");
  vol.spacing = {s.at(0).get<float>(), s.at(1).get<float>(),
                 s.at(2).get<float>()};
  if (j.at("dtype").get<std::string>() != "float32")
    throw unsupported_error(raw_path + ": raw dtype must be float32");
  std::ifstream rf(raw_path, std::ios::binary);
  if (!rf) throw io_error("cannot open " + raw_path);
  vol.data.resize(size_t(voxel_count(vol.dims)));
  rf.read(reinterpret_cast<char*>(vol.data.data()),
          std::streamsize(vol.data.size() * 4));
  if (!rf) throw format_error(raw_path + ": truncated raw data");
  return vol;
}

void write_raw(const Volume3D& vol, const std::string& raw_path) {
  validate(vol);
  nlohmann::json j;
  j["dims"] = {vol.dims.x, vol.dims.y, vol.dims.z};
  j["spacing"] = {vol.spacing[0], vol.spacing[1], vol.spacing[2]};
  j["dtype"] = "float32";
  std::ofstream jf(raw_path + ".json", std::ios::trunc);
  if (!jf) throw io_error("cannot write " + raw_path + ".json");
  jf << j.dump(2) << "\n";
  std::ofstream rf(raw_path, std::ios::binary | std::ios::trunc);
  if (!rf) throw io_error("cannot write " + raw_path);
  rf.write(reinterpret_cast<const char*>(vol.data.data()),
           std::streamsize(vol.data.size() * 4));
  if (!rf) throw io_error("short write to " + raw_path);
}

}  // namespace multiprior
