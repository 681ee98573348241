#pragma once

// Counter-based pseudo-random streams (SplitMix64 finalizer over a keyed
// counter). Every draw is a pure function of (key, index), so results do not
// depend on the platform's standard-library distributions.

#include <cstdint>

#include "tetherkit/types.hpp"

namespace tetherkit {

std::uint64_t splitmix64(std::uint64_t x);

class RandomStream {
 public:
  RandomStream() = default;
  explicit RandomStream(std::uint64_t key) : key_(key) {}

  /// Independent stream for a named channel of a master seed.
  static RandomStream substream(std::uint64_t master_seed, std::uint64_t channel);

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller; uses two uniforms per draw.
  double normal();
  Vec3 normal3();
  VecX normal_vector(Eigen::Index n);

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

/// Channel ids used by the simulator and the sampling utilities.
enum class Channel : std::uint64_t {
  kMeasurement = 1,
  kInitialError = 2,
  kProcess = 3,
  kEquilibria = 4,
  kChecks = 5,
};

inline RandomStream substream(std::uint64_t master_seed, Channel c) {
  return RandomStream::substream(master_seed, static_cast<std::uint64_t>(c));
}

}  // namespace tetherkit
