// Hamiltonians and Lindblad generators of the driven spin chain coupled to a
// damped oscillator ancilla. Units: hbar = 1 and omega_t = 1; every frequency
// (J_j, g_j, delta, gamma, gamma_flip, gamma_deph) is in units of omega_t and
// every time in units of 1/omega_t.
#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "spinchain/hilbert.hpp"

namespace spinchain {

struct SystemConfig {
  int n_spins = 2;
  std::vector<double> couplings;  // J_1..J_{N-1}, nearest-neighbour sigma_z sigma_z
  std::vector<double> rabi;       // g_1..g_N, spin-oscillator drive strengths
  int n_max = 2;                  // oscillator truncation (levels 0..n_max)
  static constexpr double omega_t = 1.0;

  SpaceShape shape() const { return SpaceShape{n_spins, n_max + 1}; }

  void validate() const {
    shape().validate();
    if (int(couplings.size()) != n_spins - 1)
      throw std::invalid_argument("SystemConfig: need N-1 couplings");
    if (int(rabi.size()) != n_spins)
      throw std::invalid_argument("SystemConfig: need N Rabi couplings");
    for (double j : couplings)
      if (j <= 0) throw std::invalid_argument("SystemConfig: couplings must be positive");
  }

  // Linear-Paul-trap coupling pattern: symmetric about the center and
  // strictly increasing toward the center bond.
  bool is_paul_trap_symmetric() const {
    const int nb = int(couplings.size());
    for (int i = 0; i < nb; ++i)
      if (std::abs(couplings[i] - couplings[nb - 1 - i]) > 1e-12 * std::abs(couplings[i]))
        return false;
    for (int i = 0; i + 1 < (nb + 1) / 2; ++i)
      if (!(couplings[i] < couplings[i + 1])) return false;
    return true;
  }
};

/// Uniform-coupling config with the linear-trap J profile used throughout:
/// J_1 = j1 at the edges, center bond scaled by sqrt(2) for N = 4.
inline SystemConfig make_chain_config(int n_spins, double j1, double g, int n_max = 2) {
  SystemConfig c;
  c.n_spins = n_spins;
  c.n_max = n_max;
  c.rabi.assign(n_spins, g);
  if (n_spins == 2) {
    c.couplings = {j1};
  } else if (n_spins == 4) {
    c.couplings = {j1, std::sqrt(2.0) * j1, j1};
  } else {
    throw std::invalid_argument("make_chain_config: built-in J profiles exist for N=2,4 only");
  }
  return c;
}

struct NoiseConfig {
  double gamma_flip = 0.0;  // rate of D[sigma^-] and D[sigma^+] per site
  double gamma_deph = 0.0;  // rate of D[sigma^z] per site
  bool apply_during_dissipative_segment = false;

  void validate() const {
    if (gamma_flip < 0 || gamma_deph < 0)
      throw std::invalid_argument("NoiseConfig: rates must be >= 0");
  }
  bool any() const { return gamma_flip > 0 || gamma_deph > 0; }
};

struct JumpTerm {
  Matrix op;
  double rate = 0.0;
};

/// Hamiltonian plus weighted jump operators; generates
/// drho/dt = -i[H, rho] + sum_k rate_k D[op_k] rho.
struct LindbladGenerator {
  Matrix hamiltonian;
  std::vector<JumpTerm> jumps;

  int dim() const { return int(hamiltonian.rows()); }
};

/// Ising part, sum_j J_j sigma_j^z sigma_{j+1}^z, embedded in the full space.
inline Matrix build_h_int(const SystemConfig& config) {
  config.validate();
  if (config.n_spins < 2) throw std::invalid_argument("build_h_int: need at least 2 spins");
  const SpaceShape shape = config.shape();
  Matrix h = Matrix::Zero(shape.total_dim(), shape.total_dim());
  for (int j = 1; j < config.n_spins; ++j) {
    h += config.couplings[j - 1] * (embed_spin_op(pauli_z(), j, shape) *
                                    embed_spin_op(pauli_z(), j + 1, shape));
  }
  return h;
}

/// Rotating-frame detuning term, -delta/2 * sum_j sigma_j^z.
inline Matrix build_h0(double delta, const SystemConfig& config) {
  const SpaceShape shape = config.shape();
  Matrix h = Matrix::Zero(shape.total_dim(), shape.total_dim());
  for (int j = 1; j <= config.n_spins; ++j)
    h += (-delta / 2.0) * embed_spin_op(pauli_z(), j, shape);
  return h;
}

/// Full driven Hamiltonian:
/// H_int + H_0(delta) + sum_j g_j sigma_j^x (a + a†) + omega_t a†a.
inline Matrix build_h_total(double delta, const SystemConfig& config) {
  config.validate();
  const SpaceShape shape = config.shape();
  const Matrix a = embed_osc_op(annihilation_op(shape.n_osc_levels), shape);
  Matrix h = build_h_int(config) + build_h0(delta, config);
  const Matrix x_quad = a + Matrix(a.adjoint());
  for (int j = 1; j <= config.n_spins; ++j)
    h += config.rabi[j - 1] * (embed_spin_op(pauli_x(), j, shape) * x_quad);
  h += SystemConfig::omega_t * embed_osc_op(number_op(shape.n_osc_levels), shape);
  return h;
}

/// Engineered cooling of the ancilla: gamma(nbar+1) D[a] + gamma nbar D[a†].
/// Zero-rate terms are dropped.
inline std::vector<JumpTerm> cooling_jumps(double gamma, double nbar, const SpaceShape& shape) {
  if (gamma < 0 || nbar < 0) throw std::invalid_argument("cooling_jumps: negative rate");
  std::vector<JumpTerm> jumps;
  if (gamma == 0) return jumps;
  const Matrix a = embed_osc_op(annihilation_op(shape.n_osc_levels), shape);
  jumps.push_back({a, gamma * (nbar + 1.0)});
  if (nbar > 0) jumps.push_back({a.adjoint(), gamma * nbar});
  return jumps;
}

/// Spin noise: per site, (sigma_j^-, gamma_flip), (sigma_j^+, gamma_flip),
/// (sigma_j^z, gamma_deph).
inline std::vector<JumpTerm> noise_jumps(const NoiseConfig& noise, const SystemConfig& config) {
  noise.validate();
  const SpaceShape shape = config.shape();
  std::vector<JumpTerm> jumps;
  for (int j = 1; j <= config.n_spins; ++j) {
    if (noise.gamma_flip > 0) {
      const Matrix lower = embed_spin_op(spin_lowering(), j, shape);
      jumps.push_back({lower, noise.gamma_flip});
      jumps.push_back({lower.adjoint(), noise.gamma_flip});
    }
    if (noise.gamma_deph > 0)
      jumps.push_back({embed_spin_op(pauli_z(), j, shape), noise.gamma_deph});
  }
  return jumps;
}

/// Generator of the coherent segment: H(delta) plus spin-noise jumps.
inline LindbladGenerator coherent_generator(double delta, const SystemConfig& config,
                                            const NoiseConfig& noise) {
  return {build_h_total(delta, config), noise_jumps(noise, config)};
}

/// Generator of the dissipative segment: ancilla cooling only (no
/// Hamiltonian), plus spin noise when the NoiseConfig flag extends it here.
inline LindbladGenerator dissipative_generator(double gamma, double nbar,
                                               const SystemConfig& config,
                                               const NoiseConfig& noise) {
  const SpaceShape shape = config.shape();
  LindbladGenerator gen{Matrix::Zero(shape.total_dim(), shape.total_dim()),
                        cooling_jumps(gamma, nbar, shape)};
  if (noise.apply_during_dissipative_segment) {
    for (auto& j : noise_jumps(noise, config)) gen.jumps.push_back(std::move(j));
  }
  return gen;
}

/// Master-equation right-hand side,
/// -i[H, rho] + sum_k rate_k (X rho X† - (X†X rho + rho X†X)/2).
inline Matrix lindblad_rhs(const Matrix& rho, const LindbladGenerator& gen) {
  if (rho.rows() != gen.dim() || rho.cols() != gen.dim())
    throw std::invalid_argument("lindblad_rhs: dimension mismatch");
  Matrix out = -kI * (gen.hamiltonian * rho - rho * gen.hamiltonian);
  for (const auto& [op, rate] : gen.jumps) {
    if (rate == 0) continue;
    const Matrix xr = op * rho;
    const Matrix xdx = op.adjoint() * op;
    out += rate * (xr * op.adjoint() - 0.5 * (xdx * rho + rho * xdx));
  }
  return out;
}

}  // namespace spinchain
