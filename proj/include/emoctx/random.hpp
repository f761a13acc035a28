#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace emoctx {

// All stochastic choices (initialization, shuffling, dropout) draw from this
// engine. Draws go through the helpers below rather than <random>
// distributions so that a seed gives the same numbers on every standard
// library.
using Rng = std::mt19937_64;

inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

template <typename T>
void shuffle_in_place(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace emoctx
