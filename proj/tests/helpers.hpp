#pragma once

#include "refjac/linalg.hpp"

#include <doctest.h>

#include <initializer_list>
#include <random>

namespace refjac::testing {

inline Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<int>(v.size()));
  int i = 0;
  for (double e : v) out[i++] = e;
  return out;
}

inline Mat mat(std::initializer_list<std::initializer_list<double>> rows) {
  const int n = static_cast<int>(rows.size());
  Mat m(n, static_cast<int>(rows.begin()->size()));
  int i = 0;
  for (const auto& r : rows) {
    int j = 0;
    for (double e : r) m(i, j++) = e;
    ++i;
  }
  return m;
}

inline double max_abs(const Mat& m) { return m.cwiseAbs().maxCoeff(); }

// Test-side randomness, independent of the library's noise streams.
struct Rng {
  std::mt19937_64 engine;
  explicit Rng(std::uint64_t seed) : engine(seed) {}
  double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(engine); }
  double normal() { return std::normal_distribution<double>()(engine); }
  Vec normal_vec(int d) {
    Vec v(d);
    for (int i = 0; i < d; ++i) v[i] = normal();
    return v;
  }
};

}  // namespace refjac::testing
