#pragma once

#include <cstdint>
#include <random>

namespace freelunch {

/// Reproducible random stream keyed by (seed, stream_id).
///
/// Identical (seed, stream_id) reproduce the identical variate sequence on
/// every run and under any worker count; distinct stream_ids give
/// statistically independent streams. The engine state is derived by running
/// (seed, stream_id) through a splitmix64 scrambler, and every variate
/// transform is implemented here rather than delegated to std::<distribution>
/// so the sequence is fixed by this file alone.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  /// Uniform on {0, ..., n-1}, unbiased (rejection sampling).
  std::uint64_t uniform_index(std::uint64_t n);

  /// Uniform on (0, 1), 53-bit resolution, never exactly 0 or 1.
  double uniform01();

  /// Standard exponential, mean 1.
  double exponential();

  /// Standard normal (Box-Muller, both variates used).
  double normal();

  /// +1 or -1 with equal probability.
  double rademacher();

  std::uint64_t next_u64() { return engine_(); }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

}  // namespace freelunch
