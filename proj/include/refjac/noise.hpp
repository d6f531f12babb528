#pragma once

#include "refjac/linalg.hpp"

#include <array>
#include <cstdint>

namespace refjac {

// Philox4x32-10 (Salmon et al., SC'11): a keyed bijection on 128-bit counters.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

// xoshiro256++ (Blackman and Vigna); satisfies UniformRandomBitGenerator.
class Xoshiro256pp {
 public:
  using result_type = std::uint64_t;
  explicit Xoshiro256pp(const std::array<std::uint64_t, 4>& state) : s_(state) {}
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }
  result_type operator()() {
    const std::uint64_t r = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return r;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::array<std::uint64_t, 4> s_;
};

/// Gaussian stream for one path.
///
/// The generator state of path i under seed s is two Philox blocks keyed by s
/// with counter (block, i), so paths are independent of each other and of the
/// order in which they run. Normals come from a ziggurat over that state; the
/// k-th normal of the stream is a pure function of (s, i, k). Two streams
/// built from the same (seed, path) replay identical noise, which is what
/// common-random-number coupling relies on.
class NoiseStream {
 public:
  NoiseStream(std::uint64_t seed, std::uint64_t path);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t path() const { return path_; }
  // Number of normals drawn so far.
  std::uint64_t counter() const { return counter_; }

  double next_normal();

  // d independent N(0, dt) increments.
  Vec increments(int dim, double dt);

  // The k-th normal of path `path` (replays the stream; test utility).
  static double normal_at(std::uint64_t seed, std::uint64_t path, std::uint64_t k);

 private:
  std::uint64_t seed_;
  std::uint64_t path_;
  std::uint64_t counter_ = 0;
  Xoshiro256pp engine_;
};

}  // namespace refjac
