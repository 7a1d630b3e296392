#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace coteach {

// Stable 64-bit mixing independent of std::hash, so seed derivation is
// identical across platforms and library versions.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// FNV-1a over the bytes of a string.
inline std::uint64_t stable_hash(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Per-frame / per-purpose seed: hash(seed, tag, extra). Independent streams
// keyed this way make results order- and parallelism-independent.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag,
                                 std::uint64_t extra = 0) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ stable_hash(tag));
  h = splitmix64(h ^ extra);
  return h;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  // Uniform in [0,1).
  double uniform() { return unit_(eng_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * unit_(eng_); }
  double normal() { return gauss_(eng_); }
  double normal(double mu, double sigma) { return mu + sigma * gauss_(eng_); }
  // Inclusive bounds.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(eng_);
  }
  std::uint64_t next_u64() { return eng_(); }

  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
  std::normal_distribution<double> gauss_{0.0, 1.0};
};

}  // namespace coteach
