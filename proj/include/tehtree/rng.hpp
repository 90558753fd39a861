#pragma once

// Project-wide random number generation.
//
// The engine is std::mt19937_64, whose output sequence is fixed by the C++
// standard. The standard distributions are implementation-defined, so the
// distributions used here are written out explicitly:
//   uniform01   : top 53 bits of one engine draw, scaled by 2^-53.
//   uniform_int : rejection sampling on the 64-bit draw (no modulo bias).
//   normal      : Marsaglia polar method, spare value cached.
// Independent streams are derived with SplitMix64 mixing (derive_seed).

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <vector>

namespace tehtree {

std::uint64_t splitmix64(std::uint64_t x) noexcept;

// Hash of a base seed and an ordered list of stream tags.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) noexcept;

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  double uniform01();
  // Uniform on {0, ..., n-1}; n must be > 0.
  std::uint64_t uniform_int(std::uint64_t n);
  double normal();
  bool bernoulli(double p) { return uniform01() < p; }

  // Fisher-Yates shuffle driven by uniform_int.
  template <typename T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_int(i));
      std::swap(values[i - 1], values[j]);
    }
  }
  template <typename T>
  void shuffle(std::vector<T>& values) {
    shuffle(std::span<T>(values));
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace tehtree
