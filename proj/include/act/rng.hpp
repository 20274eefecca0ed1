#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace act {

// Deterministic random source. mt19937_64 has a standard-specified output
// sequence; the distribution helpers below are hand-rolled because the
// <random> distribution classes are implementation-defined and would break
// run-to-run reproducibility across toolchains.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // Uniform integer in [0, bound), bound >= 1. Rejection keeps it exact.
  std::uint64_t below(std::uint64_t bound);

  // Uniform double in [0, 1) with 53 random bits.
  double unit() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

  // Standard normal via Box-Muller, one value per call (no cached spare, so
  // the stream position is a pure function of the call count).
  double gaussian();

  std::vector<double> unit_sphere(std::size_t dim);

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Derives an independent stream seed; used to give each purpose (data
  // generation, pair sampling, shuffling, ...) its own engine.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);

private:
  std::mt19937_64 eng_;
};

}  // namespace act
