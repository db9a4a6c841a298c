#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "multiprior/nifti.hpp"
#include "multiprior/rng.hpp"
#include "multiprior/volume.hpp"

using namespace multiprior;

namespace {

std::filesystem::path tmpdir() {
  auto p = std::filesystem::temp_directory_path() / "mp_volio_tests";
  std::filesystem::create_directories(p);
  return p;
}

std::vector<char> slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return std::vector<char>(std::istreambuf_iterator<char>(f), {});
}

Volume3D random_volume(Vec3i dims, uint64_t seed) {
  Rng rng(seed);
  Volume3D v(dims);
  v.spacing = {0.99f, 1.0f, 1.0f};
  for (float& x : v.data) x = float(rng.normal());
  return v;
}

// Independent little/big-endian NIfTI writer used as the read oracle.
void write_nifti_bytes(const std::string& path, bool big_endian,
                       const std::vector<float>& vals, int nx, int ny, int nz,
                       float slope, float inter) {
  std::vector<unsigned char> hdr(348, 0);
  auto put32 = [&](size_t off, uint32_t v) {
    for (int i = 0; i < 4; ++i)
      hdr[off + size_t(i)] =
          (unsigned char)(v >> (big_endian ? 8 * (3 - i) : 8 * i));
  };
  auto put16 = [&](size_t off, uint16_t v) {
    for (int i = 0; i < 2; ++i)
      hdr[off + size_t(i)] =
          (unsigned char)(v >> (big_endian ? 8 * (1 - i) : 8 * i));
  };
  auto putf = [&](size_t off, float f) {
    uint32_t u;
    std::memcpy(&u, &f, 4);
    put32(off, u);
  };
  put32(0, 348);
  put16(40, 3);  // dim[0]
  put16(42, uint16_t(nx));
  put16(44, uint16_t(ny));
  put16(46, uint16_t(nz));
  for (int i = 4; i < 8; ++i) put16(40 + 2 * size_t(i), 1);
  put16(70, 16);  // float32
  put16(72, 32);
  putf(76, 1.0f);
  putf(80, 1.0f);
  putf(84, 1.0f);
  putf(88, 1.0f);
  putf(108, 352.0f);  // vox_offset
  putf(112, slope);
  putf(116, inter);
  hdr[344] = 'n';
  hdr[345] = '+';
  hdr[346] = '1';
  hdr[347] = 0;
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f.write(reinterpret_cast<const char*>(hdr.data()), 348);
  const char pad[4] = {0, 0, 0, 0};
  f.write(pad, 4);
  for (float v : vals) {
    uint32_t u;
    std::memcpy(&u, &v, 4);
    unsigned char b[4];
    for (int i = 0; i < 4; ++i)
      b[i] = (unsigned char)(u >> (big_endian ? 8 * (3 - i) : 8 * i));
    f.write(reinterpret_cast<const char*>(b), 4);
  }
}

}  // namespace

TEST_SUITE("volume-io") {

TEST_CASE("nifti read: direct byte layout") {
  auto path = (tmpdir() / "t1.nii").string();
  std::vector<float> vals = {0, 1, 2, 3, 4, 5, 6, 7};
  write_nifti_bytes(path, false, vals, 2, 2, 2, 0.0f, 0.0f);
  Volume3D v = read_nifti(path);
  CHECK(v.dims == Vec3i{2, 2, 2});
  for (int i = 0; i < 8; ++i) CHECK(v.data[size_t(i)] == float(i));
}

TEST_CASE("nifti read: scl_slope/scl_inter scaling") {
  auto path = (tmpdir() / "t2.nii").string();
  std::vector<float> vals = {0, 1, 2, 3, 4, 5, 6, 7};
  write_nifti_bytes(path, false, vals, 2, 2, 2, 2.0f, 1.0f);
  Volume3D v = read_nifti(path);
  for (int i = 0; i < 8; ++i) CHECK(v.data[size_t(i)] == float(2 * i + 1));
}

TEST_CASE("nifti read: big-endian file gives identical result") {
  auto p_le = (tmpdir() / "le.nii").string();
  auto p_be = (tmpdir() / "be.nii").string();
  std::vector<float> vals;
  Rng rng(7);
  for (int i = 0; i < 27; ++i) vals.push_back(float(rng.normal()));
  write_nifti_bytes(p_le, false, vals, 3, 3, 3, 0.0f, 0.0f);
  write_nifti_bytes(p_be, true, vals, 3, 3, 3, 0.0f, 0.0f);
  Volume3D a = read_nifti(p_le);
  Volume3D b = read_nifti(p_be);
  CHECK(a.dims == b.dims);
  for (size_t i = 0; i < a.data.size(); ++i) CHECK(a.data[i] == b.data[i]);
}

TEST_CASE("nifti read: malformed magic and unsupported fields") {
  auto path = (tmpdir() / "bad.nii").string();
  std::vector<float> vals(8, 0.0f);
  write_nifti_bytes(path, false, vals, 2, 2, 2, 0.0f, 0.0f);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(344);
    f.write("xxxx", 4);
  }
  CHECK_THROWS_AS((void)read_nifti(path), format_error);

  write_nifti_bytes(path, false, vals, 2, 2, 2, 0.0f, 0.0f);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(70);
    const uint16_t dt = 64;  // float64: unsupported
    f.write(reinterpret_cast<const char*>(&dt), 2);
  }
  CHECK_THROWS_AS((void)read_nifti(path), unsupported_error);
}

TEST_CASE("nifti round trip is bit-identical, spacing survives") {
  auto path = (tmpdir() / "rt.nii").string();
  Volume3D v = random_volume({2, 2, 2}, 11);
  write_nifti(v, path);
  Volume3D r = read_nifti(path);
  CHECK(r.dims == v.dims);
  CHECK(r.spacing[0] == v.spacing[0]);
  for (size_t i = 0; i < v.data.size(); ++i) CHECK(r.data[i] == v.data[i]);
}

TEST_CASE("label volumes are written as uint8") {
  auto path = (tmpdir() / "lab.nii").string();
  LabelVolume lab({3, 3, 3});
  for (size_t i = 0; i < lab.labels.size(); ++i)
    lab.labels[i] = uint8_t(i % 7);
  write_nifti(lab, path);
  auto bytes = slurp(path);
  int16_t datatype;
  std::memcpy(&datatype, bytes.data() + 70, 2);
  CHECK(datatype == 2);  // DT_UINT8
  LabelVolume r = read_nifti_labels(path);
  for (size_t i = 0; i < lab.labels.size(); ++i)
    CHECK(r.labels[i] == lab.labels[i]);
}

TEST_CASE("file round trips are byte-stable across randomized volumes") {
  for (uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    Vec3i dims{int(rng.uniform_int(1, 6)), int(rng.uniform_int(1, 6)),
               int(rng.uniform_int(1, 6))};
    Volume3D v = random_volume(dims, seed * 97 + 1);
    auto p1 = (tmpdir() / "s1.nii").string();
    auto p2 = (tmpdir() / "s2.nii").string();
    write_nifti(v, p1);
    Volume3D r = read_nifti(p1);
    write_nifti(r, p2);
    CHECK(slurp(p1) == slurp(p2));
  }
}

TEST_CASE("raw sidecar format round trip") {
  auto path = (tmpdir() / "vol.raw").string();
  Volume3D v = random_volume({4, 3, 2}, 5);
  write_raw(v, path);
  Volume3D r = read_raw(path);
  CHECK(r.dims == v.dims);
  CHECK(r.spacing == v.spacing);
  CHECK(r.data == v.data);
}

TEST_CASE("4D channel volume round trip") {
  auto path = (tmpdir() / "ch.nii").string();
  ChannelVolume cv(6, {3, 4, 5});
  Rng rng(3);
  for (float& x : cv.data) x = float(rng.uniform());
  write_nifti_channels(cv, path);
  ChannelVolume r = read_nifti_channels(path);
  CHECK(r.channels == 6);
  CHECK(r.dims == cv.dims);
  CHECK(r.data == cv.data);
}

TEST_CASE("zscore: two-point volume") {
  Volume3D v({2, 1, 1});
  v.data = {1.0f, 3.0f};
  Volume3D z = zscore_normalize(v);
  CHECK(z.data[0] == doctest::Approx(-1.0).epsilon(1e-6));
  CHECK(z.data[1] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("zscore: constant volume is an error") {
  Volume3D v({4, 4, 4}, 2.5f);
  CHECK_THROWS_AS((void)zscore_normalize(v), degenerate_error);
}

TEST_CASE("zscore: random volume has mean 0 and std 1; idempotent") {
  Volume3D v = random_volume({16, 16, 16}, 21);
  for (float& x : v.data) x = 3.0f * x + 7.0f;
  Volume3D z = zscore_normalize(v);
  // independent recomputation of the moments
  double m = 0.0;
  for (float x : z.data) m += x;
  m /= double(z.data.size());
  double ss = 0.0;
  for (float x : z.data) ss += (double(x) - m) * (double(x) - m);
  double sd = std::sqrt(ss / double(z.data.size()));
  CHECK(std::abs(m) < 1e-5);
  CHECK(std::abs(sd - 1.0) < 1e-4);

  Volume3D z2 = zscore_normalize(z);
  for (size_t i = 0; i < z.data.size(); ++i)
    CHECK(std::abs(z2.data[i] - z.data[i]) < 1e-4);
}

TEST_CASE("zero_pad geometry") {
  Volume3D v({2, 2, 2}, 1.0f);
  Volume3D p = zero_pad(v, 1);
  CHECK(p.dims == Vec3i{4, 4, 4});
  double sum = 0.0;
  int zeros = 0;
  for (float x : p.data) {
    sum += x;
    if (x == 0.0f) ++zeros;
  }
  CHECK(sum == doctest::Approx(8.0));
  CHECK(zeros == 56);
  CHECK(p.at(1, 1, 1) == 1.0f);

  Volume3D same = zero_pad(v, 0);
  CHECK(same.data == v.data);

  Volume3D big({100, 100, 100});
  CHECK(zero_pad(big, 24).dims == Vec3i{148, 148, 148});
}

TEST_CASE("one_hot_encode basics and argmax inversion") {
  LabelVolume lab({1, 1, 1});
  lab.labels = {4};
  ProbabilityVolume p = one_hot_encode(lab);
  for (int c = 0; c < 7; ++c) CHECK(p.data[size_t(c)] == (c == 4 ? 1.f : 0.f));

  LabelVolume zeros({3, 3, 3});
  ProbabilityVolume pz = one_hot_encode(zeros);
  for (size_t i = 0; i < pz.nvox(); ++i) CHECK(pz.data[i] == 1.0f);
  validate(pz);

  Rng rng(9);
  LabelVolume rnd({5, 4, 3});
  for (auto& l : rnd.labels) l = uint8_t(rng.uniform_int(0, 6));
  ProbabilityVolume pr = one_hot_encode(rnd);
  validate(pr);
  LabelVolume back = argmax_labels(pr);
  CHECK(back.labels == rnd.labels);
}

}  // TEST_SUITE
