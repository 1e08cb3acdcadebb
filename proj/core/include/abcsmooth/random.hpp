#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace abcsmooth {

/// A seeded pseudo-random stream. Every sampler in the library draws from one of
/// these, so identical seeds reproduce identical draws.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  double gaussian() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }

  /// Uniform index in [0, n).
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// FNV-1a hash of a tag string, used to fold labels into seeds.
std::uint64_t hash_tag(std::string_view tag);

/// Folds a list of words into a seed. Distinct word lists give unrelated seeds.
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> words);

/// Bit pattern of a double, for folding real-valued cell keys into a seed.
std::uint64_t bits_of(double value);

}  // namespace abcsmooth
