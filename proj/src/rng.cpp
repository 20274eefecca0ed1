#include "act/rng.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace act {

std::uint64_t Rng::below(std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("rng: zero bound");
  const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
  std::uint64_t rem = (max % bound) + 1;  // 2^64 mod bound, in [1, bound]
  if (rem == bound) rem = 0;              // bound divides 2^64
  std::uint64_t x = eng_();
  while (rem != 0 && x > max - rem) x = eng_();
  return x % bound;
}

double Rng::gaussian() {
  const double u1 = 1.0 - unit();  // (0, 1], keeps the log finite
  const double u2 = unit();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

std::vector<double> Rng::unit_sphere(std::size_t dim) {
  std::vector<double> v(dim);
  double n2 = 0.0;
  do {
    n2 = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      v[i] = gaussian();
      n2 += v[i] * v[i];
    }
  } while (n2 < 1e-24);
  const double inv = 1.0 / std::sqrt(n2);
  for (double& x : v) x *= inv;
  return v;
}

std::uint64_t Rng::derive(std::uint64_t seed, std::uint64_t stream) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(seed ^ mix(stream));
}

}  // namespace act
