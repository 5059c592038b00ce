#pragma once

#include <cstdint>
#include <string_view>

namespace htdn {

// Counter-based generator: the n-th draw is mix(key + n * golden), so a state
// is fully described by (key, counter) and streams can be split without
// consuming draws from the parent. Only integer arithmetic is used to derive
// values, which keeps sequences identical across compilers and platforms.
class Prng {
 public:
  static constexpr std::string_view kAlgorithm = "splitmix64-ctr-v1";

  explicit Prng(std::uint64_t seed = 0) : seed_(seed), key_(mix(seed)) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }
  double normal();

  // Independent child stream keyed by `stream`; the parent is not advanced.
  Prng split(std::uint64_t stream) const;

  static std::uint64_t mix(std::uint64_t z);

 private:
  Prng(std::uint64_t seed, std::uint64_t key, int) : seed_(seed), key_(key) {}

  std::uint64_t seed_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace htdn
