#pragma once

#include <cstdint>
#include <random>

namespace sdemem {

using Rng = std::mt19937_64;

/// Tags separating the independent random substreams used inside one iteration.
enum class StreamPurpose : std::uint32_t {
  aux = 1,
  unit_proposal = 2,
  unit_accept = 3,
  common_proposal = 4,
  common_accept = 5,
  common_aux = 6,
  hyper = 7,
  simulate = 8,
  tuning = 9,
  initial = 10,
};

/// Deterministic substream for (seed, unit, iteration, purpose). Results never
/// depend on the order in which substreams are created or consumed.
Rng substream(std::uint64_t seed, std::uint64_t unit, std::uint64_t iteration, StreamPurpose purpose);

/// Draws one N(0,1) variate.
inline double standard_normal(Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  return dist(rng);
}

/// Draws one U[0,1) variate.
inline double standard_uniform(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace sdemem
