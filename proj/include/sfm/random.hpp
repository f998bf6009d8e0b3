#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <utility>

#include "sfm/errors.hpp"

namespace sfm {

using Rng = std::mt19937_64;

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace detail

/// Derives an independent stream from a base seed and a path of indices,
/// e.g. (seed, {iteration, example}). Streams depend only on their path, so
/// results do not depend on how work is scheduled.
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = detail::splitmix64(seed);
  for (std::uint64_t p : path) h = detail::splitmix64(h ^ detail::splitmix64(p + 0x632be59bd9b4e019ULL));
  return h;
}

inline Rng make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  return Rng(derive_seed(seed, path));
}

/// Uniform draw in [0, 1) from the top 53 bits; identical on every platform.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Draws an index with probability proportional to `weights`.
inline std::size_t sample_categorical(std::span<const double> weights, Rng& rng) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) throw InvalidArgument("sample_categorical: weights must have positive mass");
  const double r = uniform01(rng) * total;
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (weights[k] <= 0.0) continue;
    acc += weights[k];
    last_positive = k;
    if (r < acc) return k;
  }
  return last_positive;
}

}  // namespace sfm

namespace sfm {

/// Uniform index in [0, n).
inline std::size_t uniform_index(std::size_t n, Rng& rng) {
  if (n == 0) throw InvalidArgument("uniform_index: empty range");
  const auto i = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n));
  return i < n ? i : n - 1;
}

/// In-place Fisher-Yates shuffle driven by `uniform_index`, so the permutation
/// is the same on every standard library.
template <class T>
void shuffle_in_place(std::span<T> items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::swap(items[i - 1], items[uniform_index(i, rng)]);
  }
}

}  // namespace sfm
