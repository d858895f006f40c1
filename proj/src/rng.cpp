#include "ffo/rng.hpp"

#include <cmath>

namespace ffo {

namespace {

// SplitMix64 step (Steele, Lea, Flood 2014 constants).
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

RandomStream RandomStream::keyed(std::uint64_t seed, std::uint64_t index) {
  // Two mixing rounds decorrelate (seed, index) pairs; the resulting state
  // defines an independent stream per sample.
  std::uint64_t s = seed ^ 0xA24BAED4963EE407ULL;
  std::uint64_t mixed = splitmix64(s);
  std::uint64_t t = mixed + 0x9E3779B97F4A7C15ULL * (index + 1);
  return RandomStream(splitmix64(t));
}

std::uint64_t RandomStream::next_u64() { return splitmix64(state_); }

double RandomStream::uniform01() {
  // 53 random bits into [0, 1).
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RandomStream::uniform(double a, double b) {
  return a + (b - a) * uniform01();
}

double RandomStream::gaussian() {
  // Box-Muller without caching: deterministic draw count per call.
  double u1 = uniform01();
  double u2 = uniform01();
  while (u1 <= 1e-300) u1 = uniform01();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

Vector RandomStream::uniform_vector(int n, double a, double b) {
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = uniform(a, b);
  return v;
}

Vector RandomStream::gaussian_vector(int n) {
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = gaussian();
  return v;
}

Matrix RandomStream::gaussian_matrix(int rows, int cols) {
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = gaussian();
  return m;
}

}  // namespace ffo
