#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "tzsl/errors.hpp"
#include "tzsl/matrix.hpp"

namespace tzsl {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

// Mix a base seed with a purpose tag and up to two counters. Purpose-split
// streams keep draws for one concern (batch shuffling, noise, interpolation
// weights, ...) independent of whether another concern draws at all.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag, std::uint64_t a = 0,
                                 std::uint64_t b = 0) {
  std::uint64_t x = splitmix64(base ^ fnv1a64(tag));
  x = splitmix64(x ^ (a * 0xd1342543de82ef95ull));
  x = splitmix64(x ^ (b * 0xaf251af3b0f025b5ull));
  return x;
}

// Deterministic stream. The distributions are hand-rolled on top of
// mt19937_64 because the std::*_distribution algorithms are
// implementation-defined and would break byte-identical replays.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t bits() { return eng_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform01() { return static_cast<double>(bits() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Standard normal via Box-Muller; the cached spare is part of stream state.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    const double mag = std::sqrt(-2.0 * std::log(u1));
    const double two_pi = 6.283185307179586476925286766559;
    spare_ = mag * std::sin(two_pi * u2);
    has_spare_ = true;
    return mag * std::cos(two_pi * u2);
  }

  // Uniform integer in [0, n) (Lemire multiply-shift).
  std::size_t index(std::size_t n) {
    if (n == 0) throw Error("Rng::index: empty range");
    return static_cast<std::size_t>((static_cast<unsigned __int128>(bits()) * n) >> 64);
  }

  // Draw a category from a probability vector by CDF walk.
  std::size_t categorical(std::span<const double> probs) {
    if (probs.empty()) throw Error("Rng::categorical: empty distribution");
    const double u = uniform01();
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) return i;
    }
    return probs.size() - 1;
  }

  template <class T>
  Mat<T> normal_mat(std::size_t rows, std::size_t cols, double stddev = 1.0) {
    Mat<T> out(rows, cols);
    for (auto& v : out.data) v = static_cast<T>(stddev * normal());
    return out;
  }

  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[index(i)]);
    return p;
  }

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace tzsl
