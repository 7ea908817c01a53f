#pragma once

#include "daanet/types.hpp"

#include <cstdint>
#include <random>

namespace daanet {

/// Uniform fan-average init: entries drawn from [-L, L] with
/// L = sqrt(6 / (rows + cols)). Deterministic for a given rng state.
inline Matrix fan_avg_init(Index rows, Index cols, std::mt19937_64& rng) {
  Scalar limit = std::sqrt(6.0 / static_cast<Scalar>(rows + cols));
  std::uniform_real_distribution<Scalar> dist(-limit, limit);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  return m;
}

inline Matrix fan_avg_init(Index rows, Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return fan_avg_init(rows, cols, rng);
}

inline Scalar fan_avg_limit(Index rows, Index cols) {
  return std::sqrt(6.0 / static_cast<Scalar>(rows + cols));
}

}  // namespace daanet
