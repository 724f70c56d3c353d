#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace spikeleak {

/// Seeded generator with platform-independent transforms. std::mt19937_64 is fully
/// specified by the standard; the distributions in <random> are not, so the
/// uniform/normal transforms are written out here to keep runs bit-identical across
/// standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal (Box-Muller, no cached spare).
  double normal();
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);
  void shuffle(std::vector<std::size_t>& v);

 private:
  std::mt19937_64 engine_;
};

/// Mixes a base seed with a stream id (splitmix64 finalizer) so that sub-tasks get
/// independent, reproducible seeds.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace spikeleak
