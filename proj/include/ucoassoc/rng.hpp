#pragma once

#include <cstdint>
#include <random>

namespace ucoassoc {

using Rng = std::mt19937_64;

/// Independent stream for (seed, stream) so per-item work never depends on
/// iteration order.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

/// Child seed for a named sub-task of a run.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag) {
  Rng rng = make_rng(master, tag);
  return rng();
}

}  // namespace ucoassoc
