#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace ttaood {

// Seeded randomness with results that do not depend on the standard library's
// distribution implementations (std::mt19937_64 output is fully specified;
// the std:: distributions are not).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; the second variate is cached.
  double normal();

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// SplitMix64 finalizer: mixes a seed with a stream key into an independent seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

// FNV-1a 64-bit hash, used to derive per-file stream keys from relative paths.
std::uint64_t hash_string(std::string_view text);

}  // namespace ttaood
