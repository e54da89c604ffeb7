#pragma once

#include <cstdint>
#include <random>

namespace pplearn {

/// Portable random stream: std::mt19937_64 (fully specified by the standard)
/// seeded through std::seed_seq, with the distributions implemented here so
/// draws are identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  /// Independent substream for (seed, stream, tag), e.g. one per simulated trial.
  static Rng substream(std::uint64_t seed, std::uint64_t stream, std::uint64_t tag = 0);

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform on (0, 1).
  double uniform_open();
  double normal();
  bool bernoulli(double p) { return uniform() < p; }
  /// Uniform integer in [1, k].
  int uniform_label(int k);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace pplearn
