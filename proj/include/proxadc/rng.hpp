#pragma once

#include "proxadc/common.hpp"
#include "proxadc/stats.hpp"

#include <cstdint>
#include <random>

namespace proxadc {

/// Deterministic random stream. mt19937_64 has a standard-mandated sequence,
/// and the variate transforms below are written out explicitly, so a seed
/// reproduces the same bytes on every platform (std::normal_distribution and
/// friends are implementation-defined and must not be used here).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via inverse-CDF of a uniform on (0, 1).
  double normal() {
    double u;
    do {
      u = uniform();
    } while (u <= 0.0);
    return normal_quantile(u);
  }

  Vec normal_vec(int n) {
    Vec v(n);
    for (int i = 0; i < n; ++i) v(i) = normal();
    return v;
  }

  Mat normal_mat(int rows, int cols) {
    Mat m(rows, cols);
    // Row-major fill order so the stream is independent of Eigen's storage.
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) m(r, c) = normal();
    return m;
  }

  Vec uniform_vec(int n, double lo, double hi) {
    Vec v(n);
    for (int i = 0; i < n; ++i) v(i) = uniform(lo, hi);
    return v;
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace proxadc
