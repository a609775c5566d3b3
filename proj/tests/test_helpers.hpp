// Shared helpers for the test suites: seeded random matrices and states.
#pragma once

#include <random>

#include "spinchain/hilbert.hpp"

namespace spinchain::testing {

inline Matrix random_complex_matrix(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix m(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) m(i, j) = Complex(dist(rng), dist(rng));
  return m;
}

inline Matrix random_hermitian(int dim, std::mt19937_64& rng) {
  const Matrix g = random_complex_matrix(dim, dim, rng);
  return 0.5 * (g + g.adjoint());
}

// Full-rank random density matrix (normalized Wishart).
inline Matrix random_density(int dim, std::mt19937_64& rng) {
  const Matrix g = random_complex_matrix(dim, dim, rng);
  Matrix rho = g * g.adjoint();
  rho /= rho.trace().real();
  return rho;
}

inline DensityMatrix random_density_state(const SpaceShape& shape, std::mt19937_64& rng) {
  return {shape, random_density(shape.total_dim(), rng)};
}

inline Vector random_pure(int dim, std::mt19937_64& rng) {
  Vector v = random_complex_matrix(dim, 1, rng).col(0);
  return v / v.norm();
}

}  // namespace spinchain::testing
