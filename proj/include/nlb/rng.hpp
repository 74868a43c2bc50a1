#pragma once

#include <cstdint>

namespace nlb {

// splitmix64 finalizer. Full-avalanche mix used as the building block for
// counter-based draws.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Stateless counter RNG: a draw is a pure function of its key tuple, so
// reordering or parallelizing callers cannot change outcomes.
inline std::uint64_t counter_u64(std::uint64_t seed, std::uint64_t a,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t h = mix64(seed);
  h = mix64(h ^ a);
  h = mix64(h ^ b);
  h = mix64(h ^ c);
  return h;
}

// Uniform double in [0, 1) from the top 53 bits.
inline double counter_u01(std::uint64_t seed, std::uint64_t a,
                          std::uint64_t b = 0, std::uint64_t c = 0) {
  return static_cast<double>(counter_u64(seed, a, b, c) >> 11) * 0x1.0p-53;
}

// Small stateful generator (xoshiro256**) for sequential draws inside one
// trial or one sampling call. Seed it from counter_u64 so independent
// streams stay independent.
class StreamRng {
 public:
  explicit StreamRng(std::uint64_t seed) {
    for (int i = 0; i < 4; ++i) s_[i] = mix64(seed += 0x9e3779b97f4a7c15ULL);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0, 1).
  double next_u01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n).
  std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  std::uint64_t s_[4];
};

}  // namespace nlb
