#include <cmath>

#include "doctest.h"
#include "multiprior/ops.hpp"
#include "multiprior/rng.hpp"

using namespace multiprior;

namespace {

Tensor random_tensor(std::vector<int> shape, uint64_t seed, double scale = 1.0) {
  Tensor t(std::move(shape));
  Rng rng(seed);
  for (float& v : t.data) v = float(scale * rng.normal());
  return t;
}

// Reference convolution: plain loops, no blocking. Oracle for both engines.
Tensor conv3d_naive(const Tensor& in, const Tensor& k, const Tensor& b) {
  const int Ci = in.shape[0], Co = k.shape[0];
  const int Xo = in.shape[1] - 2, Yo = in.shape[2] - 2, Zo = in.shape[3] - 2;
  Tensor out = tensor4(Co, Xo, Yo, Zo);
  for (int co = 0; co < Co; ++co)
    for (int z = 0; z < Zo; ++z)
      for (int y = 0; y < Yo; ++y)
        for (int x = 0; x < Xo; ++x) {
          double acc = b.data[size_t(co)];
          for (int ci = 0; ci < Ci; ++ci)
            for (int kz = 0; kz < 3; ++kz)
              for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx)
                  acc += double(k.data[(((size_t(co) * Ci + ci) * 3 + kz) * 3 +
                                        ky) *
                                           3 +
                                       kx]) *
                         in.at4(ci, x + kx, y + ky, z + kz);
          out.at4(co, x, y, z) = float(acc);
        }
  return out;
}

}  // namespace

TEST_SUITE("tensor-ops") {

TEST_CASE("conv3d: delta kernel is the identity on the central crop") {
  Tensor in = random_tensor({1, 5, 5, 5}, 1);
  Tensor k = tensor4(1, 3, 3, 3);
  k.shape = {1, 1, 3, 3, 3};
  k.data.assign(27, 0.0f);
  k.data[13] = 1.0f;  // center tap (kx=ky=kz=1)
  Tensor bias({1});
  for (bool gemm : {false, true}) {
    Tensor out = gemm ? conv3d_valid_gemm(in, k, bias) : conv3d_valid(in, k, bias);
    CHECK(out.shape == std::vector<int>{1, 3, 3, 3});
    for (int z = 0; z < 3; ++z)
      for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 3; ++x)
          CHECK(out.at4(0, x, y, z) ==
                doctest::Approx(in.at4(0, x + 1, y + 1, z + 1)));
  }
}

TEST_CASE("conv3d: all-ones kernel counts the 27-neighborhood") {
  Tensor in = tensor4(1, 5, 5, 5, 1.0f);
  Tensor k({1, 1, 3, 3, 3}, 1.0f);
  Tensor bias({1});
  Tensor out = conv3d_valid(in, k, bias);
  for (float v : out.data) CHECK(v == 27.0f);
  Tensor out2 = conv3d_valid_gemm(in, k, bias);
  for (float v : out2.data) CHECK(v == 27.0f);
}

TEST_CASE("conv3d: direct and gemm engines match the naive oracle") {
  Tensor in = random_tensor({4, 9, 8, 7}, 3);
  Tensor k = random_tensor({5, 4, 3, 3, 3}, 4, 0.2);
  Tensor bias = random_tensor({5}, 5);
  Tensor ref = conv3d_naive(in, k, bias);
  Tensor a = conv3d_valid(in, k, bias);
  Tensor b = conv3d_valid_gemm(in, k, bias);
  REQUIRE(a.shape == ref.shape);
  REQUIRE(b.shape == ref.shape);
  for (size_t i = 0; i < ref.data.size(); ++i) {
    CHECK(a.data[i] == doctest::Approx(ref.data[i]).epsilon(1e-4));
    CHECK(b.data[i] == doctest::Approx(ref.data[i]).epsilon(1e-4));
  }
}

TEST_CASE("conv3d: direct engine is window-extent invariant bitwise") {
  // The same physical voxel computed inside windows of different extents
  // must produce bit-identical values; dense-inference tiling depends on
  // this.
  Tensor big = random_tensor({3, 16, 14, 12}, 6);
  Tensor k = random_tensor({4, 3, 3, 3, 3}, 7, 0.3);
  Tensor bias = random_tensor({4}, 8);
  Tensor out_big = conv3d_valid(big, k, bias);

  // crop a sub-window and re-convolve
  const int ox = 5, oy = 4, oz = 3;  // window origin
  const int wx = 7, wy = 6, wz = 5;
  Tensor sub = tensor4(3, wx, wy, wz);
  for (int c = 0; c < 3; ++c)
    for (int z = 0; z < wz; ++z)
      for (int y = 0; y < wy; ++y)
        for (int x = 0; x < wx; ++x)
          sub.at4(c, x, y, z) = big.at4(c, x + ox, y + oy, z + oz);
  Tensor out_sub = conv3d_valid(sub, k, bias);
  for (int c = 0; c < 4; ++c)
    for (int z = 0; z < wz - 2; ++z)
      for (int y = 0; y < wy - 2; ++y)
        for (int x = 0; x < wx - 2; ++x)
          CHECK(out_sub.at4(c, x, y, z) ==
                out_big.at4(c, x + ox, y + oy, z + oz));
}

TEST_CASE("conv3d: output shrinks by 2 per axis; 8 layers map 17^3 to 1") {
  Tensor x = random_tensor({1, 17, 17, 17}, 9);
  Tensor k = random_tensor({1, 1, 3, 3, 3}, 10, 0.2);
  Tensor bias({1});
  for (int l = 0; l < 8; ++l) x = conv3d_valid(x, k, bias);
  CHECK(x.shape == std::vector<int>{1, 1, 1, 1});
}

TEST_CASE("conv3d: undersized input is rejected") {
  Tensor in = tensor4(1, 2, 5, 5);
  Tensor k({1, 1, 3, 3, 3}, 0.1f);
  Tensor bias({1});
  CHECK_THROWS_AS((void)conv3d_valid(in, k, bias), shape_error);
}

TEST_CASE("leaky_relu values and shape preservation") {
  Tensor x = tensor4(1, 2, 1, 1);
  x.data = {2.0f, -2.0f};
  Tensor y = leaky_relu(x, 0.3f);
  CHECK(y.data[0] == 2.0f);
  CHECK(y.data[1] == doctest::Approx(-0.6));

  Tensor big = random_tensor({30, 9, 9, 9}, 11);
  CHECK(leaky_relu(big, 0.3f).shape == big.shape);

  // gradient at x = -1 equals alpha
  Tensor gy = tensor4(1, 2, 1, 1, 1.0f);
  Tensor pre = tensor4(1, 2, 1, 1);
  pre.data = {-1.0f, 1.0f};
  Tensor gx = leaky_relu_backward(pre, gy, 0.3f);
  CHECK(gx.data[0] == doctest::Approx(0.3));
  CHECK(gx.data[1] == 1.0f);
}

TEST_CASE("softmax: uniform logits and overflow stability") {
  Tensor x = tensor4(7, 1, 1, 1, 1.5f);
  Tensor y = softmax_channels(x);
  for (float v : y.data) CHECK(v == doctest::Approx(1.0 / 7.0));

  Tensor big = tensor4(2, 1, 1, 1);
  big.data = {1000.0f, 0.0f};
  Tensor yb = softmax_channels(big);
  CHECK(yb.data[0] == 1.0f);
  CHECK(yb.data[1] == 0.0f);

  // valid distribution per voxel
  Tensor r = random_tensor({7, 4, 4, 4}, 12, 3.0);
  Tensor yr = softmax_channels(r);
  for (int64_t i = 0; i < yr.spatial(); ++i) {
    double s = 0.0;
    for (int c = 0; c < 7; ++c) {
      float p = yr.data[size_t(c) * size_t(yr.spatial()) + size_t(i)];
      CHECK(p >= 0.0f);
      s += p;
    }
    CHECK(std::abs(s - 1.0) < 1e-6);
  }
}

TEST_CASE("upsample_replicate forward blocks and backward counts") {
  Tensor x = tensor4(1, 1, 1, 1, 3.5f);
  Tensor y = upsample_replicate(x, 3);
  CHECK(y.shape == std::vector<int>{1, 3, 3, 3});
  for (float v : y.data) CHECK(v == 3.5f);

  Tensor x2 = random_tensor({2, 2, 2, 2}, 13);
  Tensor y2 = upsample_replicate(x2, 3);
  CHECK(y2.shape == std::vector<int>{2, 6, 6, 6});
  for (int c = 0; c < 2; ++c)
    for (int z = 0; z < 6; ++z)
      for (int yy = 0; yy < 6; ++yy)
        for (int xx = 0; xx < 6; ++xx)
          CHECK(y2.at4(c, xx, yy, z) == x2.at4(c, xx / 3, yy / 3, z / 3));

  Tensor gy = tensor4(1, 3, 3, 3, 1.0f);
  Tensor gx = upsample_replicate_backward(gy, 3);
  CHECK(gx.numel() == 1);
  CHECK(gx.data[0] == 27.0f);
}

TEST_CASE("downsample_antialias: constants, shapes, impulse profile") {
  Volume3D c({9, 9, 9}, 2.0f);
  Volume3D dc = downsample_antialias(c, 3);
  CHECK(dc.dims == Vec3i{3, 3, 3});
  for (float v : dc.data) CHECK(v == doctest::Approx(2.0).epsilon(1e-6));

  Volume3D big({57, 57, 57}, 1.0f);
  CHECK(downsample_antialias(big, 3).dims == Vec3i{19, 19, 19});

  // impulse blurred by the advertised Gaussian: compare against a direct
  // separable convolution evaluated independently
  Volume3D imp({27, 27, 27}, 0.0f);
  imp.at(13, 13, 13) = 1.0f;
  Volume3D d = downsample_antialias(imp, 3);
  const double sigma = 1.5;
  const int radius = 4;  // 3*sigma truncated
  std::vector<double> taps;
  double tsum = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    taps.push_back(std::exp(-0.5 * k * k / (sigma * sigma)));
    tsum += taps.back();
  }
  for (double& t : taps) t /= tsum;
  auto tap_at = [&](int d1) {
    return (std::abs(d1) <= radius) ? taps[size_t(d1 + radius)] : 0.0;
  };
  // low-res voxel (lx,ly,lz) samples the blurred field at (3l+1 per axis)
  for (int lz = 2; lz <= 6; ++lz)
    for (int ly = 2; ly <= 6; ++ly)
      for (int lx = 2; lx <= 6; ++lx) {
        double expect = tap_at(3 * lx + 1 - 13) * tap_at(3 * ly + 1 - 13) *
                        tap_at(3 * lz + 1 - 13);
        CHECK(d.at(lx, ly, lz) ==
              doctest::Approx(expect).epsilon(1e-4).scale(1.0));
      }
}

TEST_CASE("avgpool2 and tconv2 shapes and adjoints") {
  Tensor x = random_tensor({3, 8, 8, 8}, 14);
  Tensor p = avgpool2(x);
  CHECK(p.shape == std::vector<int>{3, 4, 4, 4});
  CHECK(p.at4(0, 0, 0, 0) ==
        doctest::Approx((x.at4(0, 0, 0, 0) + x.at4(0, 1, 0, 0) +
                         x.at4(0, 0, 1, 0) + x.at4(0, 1, 1, 0) +
                         x.at4(0, 0, 0, 1) + x.at4(0, 1, 0, 1) +
                         x.at4(0, 0, 1, 1) + x.at4(0, 1, 1, 1)) /
                        8.0));

  Tensor k = random_tensor({3, 5, 2, 2, 2}, 15, 0.3);
  Tensor bias = random_tensor({5}, 16);
  Tensor t = tconv2(x, k, bias);
  CHECK(t.shape == std::vector<int>{5, 16, 16, 16});
  // each output voxel touched exactly once per (ci, tap)
  double manual = bias.data[0];
  for (int ci = 0; ci < 3; ++ci)
    manual += double(k.data[(((size_t(ci) * 5 + 0) * 2 + 1) * 2 + 1) * 2 + 1]) *
              x.at4(ci, 0, 0, 0);
  CHECK(t.at4(0, 1, 1, 1) == doctest::Approx(manual).epsilon(1e-5));
}

TEST_CASE("pad3d_zero and crop3d invert each other") {
  Tensor x = random_tensor({2, 3, 4, 5}, 17);
  Tensor p = pad3d_zero(x, 2);
  CHECK(p.shape == std::vector<int>{2, 7, 8, 9});
  Tensor c = crop3d(p, 2);
  CHECK(c.data == x.data);
}

TEST_CASE("batch_norm: train-mode statistics and infer-mode identity") {
  std::vector<Tensor> xs;
  for (int e = 0; e < 3; ++e)
    xs.push_back(random_tensor({4, 5, 5, 5}, 20 + uint64_t(e), 2.0));
  BatchNormState st("bn", 4);
  BnCache cache;
  auto ys = batch_norm_forward(xs, st, Mode::Train, true, &cache);

  // per-channel mean 0 / var 1 before gamma/beta
  for (int c = 0; c < 4; ++c) {
    double s = 0.0, ss = 0.0;
    int64_t n = 0;
    for (auto& y : ys) {
      const size_t m = size_t(y.numel() / 4);
      for (size_t i = 0; i < m; ++i) {
        float v = y.data[size_t(c) * m + i];
        s += v;
        ss += double(v) * v;
        ++n;
      }
    }
    CHECK(std::abs(s / double(n)) < 1e-4);
    CHECK(std::abs(ss / double(n) - 1.0) < 1e-3);
  }

  // infer mode with running stats (0, 1) and gamma=1, beta=0 is identity
  BatchNormState id("bn2", 4);
  Tensor x = random_tensor({4, 3, 3, 3}, 30);
  Tensor y = batch_norm(x, id, Mode::Infer);
  for (size_t i = 0; i < x.data.size(); ++i)
    CHECK(y.data[i] == doctest::Approx(x.data[i]).epsilon(1e-4));
}

TEST_CASE("adam: documented single-step behaviour") {
  // single scalar, grad = 1: first step moves by ~lr
  Parameter p("w", {1});
  p.value.data[0] = 0.5f;
  p.grad.data[0] = 1.0f;
  AdamConfig cfg;
  cfg.lr = 1e-3f;
  adam_step({&p}, cfg);
  const double expected = 0.5 - 1e-3 * (1.0 / (1.0 + 1e-8));
  CHECK(p.value.data[0] == doctest::Approx(expected).epsilon(1e-6));
  CHECK(p.step == 1);
  CHECK(p.grad.data[0] == 0.0f);

  // zero grad, zero weight decay: identity
  Parameter q("q", {3});
  q.value.data = {1.0f, -2.0f, 3.0f};
  adam_step({&q}, cfg);
  CHECK(q.value.data == std::vector<float>{1.0f, -2.0f, 3.0f});
  CHECK(q.step == 1);

  // weight decay with zero grad opposes the value sign
  Parameter r("r", {2});
  r.value.data = {1.0f, -1.0f};
  AdamConfig wd;
  wd.lr = 1e-3f;
  wd.weight_decay = 1e-5f;
  adam_step({&r}, wd);
  CHECK(r.value.data[0] < 1.0f);
  CHECK(r.value.data[1] > -1.0f);
}

}  // TEST_SUITE
