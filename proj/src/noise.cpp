#include "refjac/noise.hpp"

#include <boost/random/normal_distribution.hpp>

#include <cmath>

namespace refjac {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& lo, std::uint32_t& hi) {
  const std::uint64_t product = static_cast<std::uint64_t>(a) * b;
  lo = static_cast<std::uint32_t>(product);
  hi = static_cast<std::uint32_t>(product >> 32);
}

std::array<std::uint64_t, 4> path_state(std::uint64_t seed, std::uint64_t path) {
  const std::array<std::uint32_t, 2> key = {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  std::array<std::uint64_t, 4> state{};
  for (std::uint32_t block = 0; block < 2; ++block) {
    const auto r = philox4x32({block, 0u, static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(path >> 32)}, key);
    state[2 * block] = (static_cast<std::uint64_t>(r[1]) << 32) | r[0];
    state[2 * block + 1] = (static_cast<std::uint64_t>(r[3]) << 32) | r[2];
  }
  // xoshiro must not start from the all-zero state.
  if ((state[0] | state[1] | state[2] | state[3]) == 0) state[0] = 1;
  return state;
}

// Stateless between calls, so the stream position is fully described by the
// engine state.
const boost::random::normal_distribution<double> kUnitNormal;

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t lo0, hi0, lo1, hi1;
    mulhilo(kPhiloxM0, ctr[0], lo0, hi0);
    mulhilo(kPhiloxM1, ctr[2], lo1, hi1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kPhiloxW0;
    key[1] += kPhiloxW1;
  }
  return ctr;
}

NoiseStream::NoiseStream(std::uint64_t seed, std::uint64_t path)
    : seed_(seed), path_(path), engine_(path_state(seed, path)) {}

double NoiseStream::next_normal() {
  ++counter_;
  auto dist = kUnitNormal;
  return dist(engine_);
}

Vec NoiseStream::increments(int dim, double dt) {
  const double scale = std::sqrt(dt);
  Vec out(dim);
  for (int i = 0; i < dim; ++i) out[i] = scale * next_normal();
  return out;
}

double NoiseStream::normal_at(std::uint64_t seed, std::uint64_t path, std::uint64_t k) {
  NoiseStream s(seed, path);
  for (std::uint64_t i = 0; i < k; ++i) s.next_normal();
  return s.next_normal();
}

}  // namespace refjac
