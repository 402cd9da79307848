#pragma once

#include <random>

#include "sckn/core_maps.hpp"
#include "sckn/layer.hpp"

namespace sckn::test {

inline Matrix random_matrix(int rows, int cols, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix m(rows, cols);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r) m(r, c) = g(rng);
  return m;
}

inline Vector random_vector(int n, uint64_t seed) {
  return random_matrix(n, 1, seed).col(0);
}

inline Matrix random_unit_columns(int rows, int cols, uint64_t seed) {
  Matrix m = random_matrix(rows, cols, seed);
  for (int c = 0; c < cols; ++c) m.col(c).normalize();
  return m;
}

inline SpatialMap random_map(int channels, int h, int w, uint64_t seed) {
  return SpatialMap(channels, h, w, random_matrix(channels, h * w, seed));
}

inline double rel_err(double got, double want) {
  const double denom = std::max({std::abs(got), std::abs(want), 1e-300});
  return std::abs(got - want) / denom;
}

// relative error with an absolute floor for near-zero reference entries
inline double grad_err(double analytic, double numeric, double floor_ = 1e-8) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor_});
  return std::abs(analytic - numeric) / denom;
}

}  // namespace sckn::test
