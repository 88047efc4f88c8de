#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>

namespace bcr {

/// Mixes a base seed with a stream index so that parallel workers (episodes,
/// sweep cells) get decorrelated generators whose output does not depend on
/// scheduling order. SplitMix64 finalizer.
inline std::uint64_t split_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seeded generator used by every sampling primitive in the library.
/// Draws are produced by explicit arithmetic on raw 64-bit outputs (no
/// std::*_distribution), so identical seeds give bit-identical streams.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [0, n).
  int uniform_int(int n) {
    if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
    return static_cast<int>(uniform01() * n) % n;
  }

  /// Samples an index from an (approximately normalized) probability vector
  /// by CDF scan; residual mass from rounding goes to the last nonzero entry.
  int sample(std::span<const double> probs) {
    if (probs.empty()) throw std::invalid_argument("sample: empty distribution");
    const double u = uniform01();
    double acc = 0.0;
    int last_nonzero = -1;
    for (int i = 0; i < static_cast<int>(probs.size()); ++i) {
      if (probs[i] > 0.0) last_nonzero = i;
      acc += probs[i];
      if (u < acc) return i;
    }
    if (last_nonzero < 0)
      throw std::invalid_argument("sample: distribution has no positive mass");
    return last_nonzero;
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace bcr
