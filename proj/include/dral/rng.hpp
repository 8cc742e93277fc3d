#pragma once

#include <cstdint>
#include <random>

namespace dral {

using Rng = std::mt19937_64;

// Independent per-run random streams; each run seed fans out into these so
// strategies compared under the same seed see identical pools and inits.
enum class RngStream : std::uint32_t { kData = 1, kInit = 2, kSelection = 3, kReplay = 4 };

inline Rng make_rng(std::uint64_t seed, std::uint32_t stream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    stream};
  return Rng(seq);
}

inline Rng make_rng(std::uint64_t seed, RngStream stream) {
  return make_rng(seed, static_cast<std::uint32_t>(stream));
}

// A fresh 64-bit seed drawn from a stream, for components that own their rng.
inline std::uint64_t derive_seed(std::uint64_t seed, RngStream stream) {
  Rng rng = make_rng(seed, stream);
  return rng();
}

}  // namespace dral
