#pragma once

#include <cstdint>
#include <random>

namespace hic {

using Rng = std::mt19937_64;

// Stream tags keep the per-frame streams of different consumers disjoint.
enum class StreamTag : std::uint64_t {
  Frame = 0,
  Tuples = 1,
  Calibration = 2,
  Synthetic = 3,
};

std::uint64_t splitmix64(std::uint64_t& state);

/// Derives an independent generator for (seed, tag, index).
///
/// The derivation is: mix the seed, tag and index through splitmix64, draw
/// four 32-bit halves into a std::seed_seq and seed an mt19937_64 from it.
/// The result depends only on the three inputs, never on thread scheduling,
/// which is what makes sharded batch runs reproducible for any worker count.
Rng derive_stream(std::uint64_t seed, StreamTag tag, std::uint64_t index);

}  // namespace hic
