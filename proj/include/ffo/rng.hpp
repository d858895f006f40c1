#pragma once

#include <cstdint>

#include "ffo/types.hpp"

namespace ffo {

// Deterministic counter-friendly pseudo-random stream (SplitMix64 core).
// Unlike std::normal_distribution, the draw sequence is pinned by this code
// alone, so serialized problem data is bit-identical across runs and
// toolchains. Streams keyed by (seed, index) are independent, which lets
// Monte-Carlo samples be generated out of order or in parallel.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : state_(seed) {}

  /// Independent stream for sample `index` of a run seeded with `seed`.
  static RandomStream keyed(std::uint64_t seed, std::uint64_t index);

  std::uint64_t next_u64();

  /// Uniform on [0, 1).
  double uniform01();
  /// Uniform on [a, b).
  double uniform(double a, double b);
  /// Standard normal via Box-Muller.
  double gaussian();

  Vector uniform_vector(int n, double a, double b);
  Vector gaussian_vector(int n);
  Matrix gaussian_matrix(int rows, int cols);

 private:
  std::uint64_t state_;
};

}  // namespace ffo
