#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>

namespace wmrl {

/// Seeded random stream. Only the raw 64-bit engine output of std::mt19937_64
/// is used (its sequence is fixed by the standard); the distributions are
/// implemented here so that draws do not depend on the standard library
/// vendor.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double low, double high);
  /// Standard normal via Box-Muller.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  /// Uniform integer in [0, n), unbiased. n must be > 0.
  std::size_t index(std::size_t n);

  /// Independent named substream derived from this stream's seed.
  Rng fork(std::string_view name) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t master, std::string_view name);

}  // namespace wmrl
