// Composite Hilbert space of N spin-1/2 sites and one truncated harmonic
// oscillator. Fixed tensor ordering throughout the library: spin 1 is the
// leftmost (slowest-varying) factor, the oscillator is the last
// (fastest-varying) factor. Spin basis per site: index 0 = |up>, 1 = |down>,
// so sigma_z|up> = +|up>. All matrices are dense complex.
#pragma once

#include <Eigen/Dense>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

namespace spinchain {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

inline constexpr Complex kI{0.0, 1.0};

/// Dimensions of the composite spin ⊗ oscillator space.
struct SpaceShape {
  int n_spins = 1;
  int n_osc_levels = 1;  // truncation dimension n_max + 1

  int spin_dim() const { return 1 << n_spins; }
  int total_dim() const { return spin_dim() * n_osc_levels; }
  int n_max() const { return n_osc_levels - 1; }

  void validate() const {
    if (n_spins < 1) throw std::invalid_argument("SpaceShape: n_spins must be >= 1");
    if (n_osc_levels < 1) throw std::invalid_argument("SpaceShape: n_osc_levels must be >= 1");
  }

  friend bool operator==(const SpaceShape& a, const SpaceShape& b) {
    return a.n_spins == b.n_spins && a.n_osc_levels == b.n_osc_levels;
  }
};

inline Matrix identity(int dim) { return Matrix::Identity(dim, dim); }

inline Matrix pauli_x() {
  Matrix m(2, 2);
  m << 0, 1, 1, 0;
  return m;
}

inline Matrix pauli_y() {
  Matrix m(2, 2);
  m << 0, -kI, kI, 0;
  return m;
}

inline Matrix pauli_z() {
  Matrix m(2, 2);
  m << 1, 0, 0, -1;
  return m;
}

/// |down><up| at a single site (lowering operator in the sigma_z basis).
inline Matrix spin_lowering() {
  Matrix m = Matrix::Zero(2, 2);
  m(1, 0) = 1;
  return m;
}

/// Annihilation operator on a truncated oscillator: a[n-1, n] = sqrt(n).
inline Matrix annihilation_op(int n_levels) {
  Matrix a = Matrix::Zero(n_levels, n_levels);
  for (int n = 1; n < n_levels; ++n) a(n - 1, n) = std::sqrt(double(n));
  return a;
}

inline Matrix number_op(int n_levels) {
  Matrix n = Matrix::Zero(n_levels, n_levels);
  for (int k = 0; k < n_levels; ++k) n(k, k) = double(k);
  return n;
}

inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

/// Embed a 2x2 operator acting on spin `site` (1-based) into the full space.
inline Matrix embed_spin_op(const Matrix& local, int site, const SpaceShape& shape) {
  shape.validate();
  if (local.rows() != 2 || local.cols() != 2)
    throw std::invalid_argument("embed_spin_op: local operator must be 2x2");
  if (site < 1 || site > shape.n_spins)
    throw std::invalid_argument("embed_spin_op: site out of range");
  Matrix left = identity(1 << (site - 1));
  Matrix right = identity(1 << (shape.n_spins - site));
  return kron(kron(kron(left, local), right), identity(shape.n_osc_levels));
}

/// Embed an oscillator operator (identity on all spins).
inline Matrix embed_osc_op(const Matrix& local, const SpaceShape& shape) {
  shape.validate();
  if (local.rows() != shape.n_osc_levels || local.cols() != shape.n_osc_levels)
    throw std::invalid_argument("embed_osc_op: dimension mismatch");
  return kron(identity(shape.spin_dim()), local);
}

/// Basis index of the product state with the given spin bits (0 = up,
/// spin 1 first) and oscillator level n.
inline int basis_index(const std::vector<int>& spin_bits, int n, const SpaceShape& shape) {
  if (int(spin_bits.size()) != shape.n_spins)
    throw std::invalid_argument("basis_index: wrong number of spin bits");
  if (n < 0 || n >= shape.n_osc_levels)
    throw std::invalid_argument("basis_index: oscillator level out of range");
  int s = 0;
  for (int b : spin_bits) {
    if (b != 0 && b != 1) throw std::invalid_argument("basis_index: bits must be 0 or 1");
    s = (s << 1) | b;
  }
  return s * shape.n_osc_levels + n;
}

inline Vector basis_state(const std::vector<int>& spin_bits, int n, const SpaceShape& shape) {
  Vector v = Vector::Zero(shape.total_dim());
  v(basis_index(spin_bits, n, shape)) = 1.0;
  return v;
}

/// Density matrix over the composite space. A spin-only state is represented
/// with n_osc_levels = 1.
struct DensityMatrix {
  SpaceShape shape;
  Matrix rho;

  int dim() const { return int(rho.rows()); }
};

inline DensityMatrix pure_state(const Vector& psi, const SpaceShape& shape) {
  if (psi.size() != shape.total_dim())
    throw std::invalid_argument("pure_state: dimension mismatch");
  Vector n = psi / psi.norm();
  return {shape, n * n.adjoint()};
}

inline double min_eigenvalue(const Matrix& hermitian) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(hermitian, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

/// Check the density-matrix invariants: unit trace (1e-10 absolute),
/// Hermiticity (1e-10), numerical positivity (min eigenvalue >= -1e-8).
inline void validate_density_matrix(const DensityMatrix& dm, double trace_tol = 1e-10,
                                    double herm_tol = 1e-10, double pos_tol = -1e-8) {
  if (dm.rho.rows() != dm.rho.cols() || dm.dim() != dm.shape.total_dim())
    throw std::invalid_argument("DensityMatrix: malformed shape");
  if (std::abs(dm.rho.trace() - Complex(1.0)) > trace_tol)
    throw std::runtime_error("DensityMatrix: trace deviates from 1 by " +
                             std::to_string(std::abs(dm.rho.trace() - Complex(1.0))));
  if ((dm.rho - dm.rho.adjoint()).cwiseAbs().maxCoeff() > herm_tol)
    throw std::runtime_error("DensityMatrix: not Hermitian");
  if (min_eigenvalue((dm.rho + dm.rho.adjoint()) / 2.0) < pos_tol)
    throw std::runtime_error("DensityMatrix: negative eigenvalue beyond tolerance");
}

/// Reduced spin state: trace out the oscillator factor.
inline DensityMatrix partial_trace_ancilla(const DensityMatrix& dm) {
  const int ds = dm.shape.spin_dim();
  const int L = dm.shape.n_osc_levels;
  if (dm.dim() != ds * L) throw std::invalid_argument("partial_trace_ancilla: malformed shape");
  Matrix out = Matrix::Zero(ds, ds);
  for (int s = 0; s < ds; ++s)
    for (int sp = 0; sp < ds; ++sp)
      for (int n = 0; n < L; ++n) out(s, sp) += dm.rho(s * L + n, sp * L + n);
  return {SpaceShape{dm.shape.n_spins, 1}, out};
}

/// Marginal of the oscillator: trace out all spins.
inline Matrix partial_trace_spins(const DensityMatrix& dm) {
  const int ds = dm.shape.spin_dim();
  const int L = dm.shape.n_osc_levels;
  Matrix out = Matrix::Zero(L, L);
  for (int n = 0; n < L; ++n)
    for (int np = 0; np < L; ++np)
      for (int s = 0; s < ds; ++s) out(n, np) += dm.rho(s * L + n, s * L + np);
  return out;
}

/// <a†a> of the oscillator factor.
inline double mean_osc_occupation(const DensityMatrix& dm) {
  const Matrix marg = partial_trace_spins(dm);
  double v = 0;
  for (int n = 0; n < dm.shape.n_osc_levels; ++n) v += n * marg(n, n).real();
  return v;
}

}  // namespace spinchain
