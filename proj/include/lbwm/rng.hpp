#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace lbwm {

// splitmix64 finalizer; used to derive independent stream seeds.
std::uint64_t mix_seed(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t run_seed, std::uint64_t index, std::uint64_t stream = 0);

// Deterministic generator. Uniforms are built from the raw 64-bit output
// rather than std::uniform_real_distribution so that the stream is identical
// across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  // U in [0, 1) with 53 bits of mantissa.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);
  std::uint64_t next_u64() { return engine_(); }

  std::string serialize() const;
  void deserialize(const std::string& state);

  bool operator==(const Rng& other) const { return engine_ == other.engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace lbwm
