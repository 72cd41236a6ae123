#pragma once

#include <cstdint>
#include <random>

namespace ccpaloc {

/// Deterministic random source. The core stream is std::mt19937_64 (its output
/// sequence is fixed by the standard); the distributions below are implemented
/// on top of the raw stream instead of the std:: distribution objects, whose
/// algorithms vary between standard libraries. Same seed, same bytes, anywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller.
  double normal();

  /// Uniform integer in [lo, hi], inclusive, rejection-sampled (unbiased).
  int uniform_int(int lo, int hi);

  /// Derive an independent child seed from a master seed and a stream index.
  /// Used to give every sample/topology/epoch its own reproducible stream.
  static std::uint64_t derive(std::uint64_t master, std::uint64_t stream);

 private:
  std::mt19937_64 gen_;
};

}  // namespace ccpaloc
