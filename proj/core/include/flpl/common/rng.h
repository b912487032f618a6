#pragma once

#include <cstdint>
#include <random>

namespace flpl {

// SplitMix64 finalizer. Used to derive independent stream seeds.
uint64_t SplitMix64(uint64_t x);

// Deterministically derives a child seed from a parent seed and up to three
// stream coordinates (e.g. round, client id, element index).
uint64_t DeriveSeed(uint64_t seed, uint64_t a, uint64_t b = 0, uint64_t c = 0);

// Seeded 64-bit generator. All randomness in the library flows through this
// type so that runs are reproducible from a single explicit seed.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(SplitMix64(seed)) {}

  uint64_t NextU64() { return engine_(); }
  double Uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double Uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double Normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  // Uniform integer in [0, n). n must be positive.
  uint64_t UniformInt(uint64_t n) {
    return std::uniform_int_distribution<uint64_t>(0, n - 1)(engine_);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace flpl
