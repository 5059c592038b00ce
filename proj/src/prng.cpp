#include "htdn/prng.hpp"

#include <cmath>
#include <numbers>

#include "htdn/errors.hpp"

namespace htdn {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t Prng::mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t Prng::next_u64() {
  ++counter_;
  return mix(key_ + counter_ * kGolden);
}

double Prng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t Prng::below(std::uint64_t n) {
  if (n == 0) throw ContractError("Prng::below: n must be positive");
  // Rejection keeps the result unbiased.
  const std::uint64_t limit = -n % n;
  for (;;) {
    const std::uint64_t r = next_u64();
    if (r >= limit) return r % n;
  }
}

double Prng::normal() {
  // Box-Muller; u1 is shifted away from zero so log stays finite.
  const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Prng Prng::split(std::uint64_t stream) const {
  return Prng(seed_, mix(key_ ^ mix(stream + kGolden)), 0);
}

}  // namespace htdn
