#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace fairsr {

using Rng = std::mt19937_64;

// Distribution helpers implemented by hand so that draws are identical across
// standard libraries (std::uniform_*_distribution is implementation-defined).

inline double rand_unit(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;  // [0, 1)
}

inline double rand_uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * rand_unit(rng);
}

inline size_t rand_index(Rng& rng, size_t n) {
  // Modulo bias is < n / 2^64; irrelevant at the sizes used here.
  return static_cast<size_t>(rng() % n);
}

// Samples an index according to unnormalized nonnegative weights.
inline size_t rand_weighted(Rng& rng, const std::vector<double>& weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  double x = rand_unit(rng) * total;
  double acc = 0.0;
  for (size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (x < acc) return i;
  }
  return weights.size() - 1;
}

}  // namespace fairsr
