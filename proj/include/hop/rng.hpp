#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace hop {

// splitmix64 finalizer. Used to derive independent per-component seeds from a
// master seed: derive_seed(master, stream) = splitmix64(master + (stream + 1) * golden).
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

// Well-known stream ids for derive_seed. Keep them stable: output files depend on them.
namespace streams {
inline constexpr std::uint64_t kEpisode = 0x1000;
inline constexpr std::uint64_t kSeat = 0x2000;
inline constexpr std::uint64_t kSchelling = 0x3000;
inline constexpr std::uint64_t kModelInit = 0x4000;
}  // namespace streams

// Seeded random stream. The engine is mt19937_64 (output fully specified by the
// standard); the distributions below are implemented here so results do not
// depend on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  // Uniform integer in [0, n). n must be > 0.
  std::size_t index(std::size_t n);
  // Draw from unnormalized non-negative weights. At least one weight must be > 0.
  std::size_t categorical(std::span<const double> weights);
  double normal();

 private:
  std::mt19937_64 engine_;
};

}  // namespace hop
