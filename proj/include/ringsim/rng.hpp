#pragma once

#include <cstdint>
#include <random>

namespace ringsim {

/// splitmix64 finalizer.
inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Seed of trajectory `index` in an ensemble; a pure function of its arguments.
inline constexpr std::uint64_t trajectory_seed(std::uint64_t base_seed, std::uint64_t index) {
  return splitmix64(base_seed + (index + 1) * 0x9E3779B97F4A7C15ull);
}

/// Uniform doubles in the open interval (0, 1) from a 64-bit Mersenne Twister.
class UniformSource {
 public:
  explicit UniformSource(std::uint64_t seed) : engine_(seed) {}
  double operator()() { return (double(engine_() >> 11) + 0.5) * 0x1.0p-53; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace ringsim
