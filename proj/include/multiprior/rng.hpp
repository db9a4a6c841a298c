#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace multiprior {

/// Deterministic random stream. All samplers are implemented on top of
/// raw mt19937_64 output (no std::*_distribution), so sequences are
/// bit-identical across standard libraries and platforms.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  /// Named substream: same (seed, name) always yields the same stream,
  /// independent of how much randomness the parent has consumed.
  Rng substream(std::string_view name) const;

  uint64_t seed() const { return seed_; }

  uint64_t next_u64() { return gen_(); }

  /// Uniform in [0, 1).
  double uniform() { return double(gen_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [lo, hi] inclusive.
  int64_t uniform_int(int64_t lo, int64_t hi);

  /// Standard normal via Box-Muller.
  double normal();

  /// Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = size_t(uniform_int(0, int64_t(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  static uint64_t mix(uint64_t x);
  uint64_t seed_ = 0;
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

uint64_t fnv1a64(std::string_view s);

}  // namespace multiprior
