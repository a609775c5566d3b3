// Propagation of density matrices under Lindblad generators, and the pulse
// map T(delta, t) = exp(L_gamma t_gamma) o exp(L_coh(delta) t).
//
// Superoperators act on column-stacked density matrices: vec(rho) stacks
// columns, so vec(A rho B) = (B^T ⊗ A) vec(rho) and
//   L = -i (I ⊗ H - H^T ⊗ I)
//       + sum_k rate_k [ conj(X_k) ⊗ X_k
//                        - 1/2 (I ⊗ X_k†X_k + (X_k†X_k)^T ⊗ I) ].
// Two independent routes are provided: an adaptive RK4 integrator with
// step-doubling error control (propagate) and the dense matrix exponential of
// the assembled superoperator (build_pulse_map); compare_integrators measures
// their discrepancy.
#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <tuple>
#include <utility>
#include <vector>

#include <unsupported/Eigen/MatrixFunctions>

#include "spinchain/model.hpp"

namespace spinchain {

/// One pulse of the protocol: coherent drive at detuning `delta` for
/// `t_coherent`, then ancilla damping at rate `gamma`, thermal occupation
/// `nbar`, for `t_dissipative`. Only the product gamma * t_dissipative
/// (together with nbar) determines the dissipative segment, which has no
/// Hamiltonian; both are still exposed separately.
struct PulseSpec {
  double delta = 0.0;
  double t_coherent = 0.0;
  double t_dissipative = 0.0;
  double gamma = 0.0;
  double nbar = 0.0;

  void validate() const {
    if (t_coherent < 0 || t_dissipative < 0)
      throw std::invalid_argument("PulseSpec: durations must be >= 0");
    if (gamma < 0 || nbar < 0) throw std::invalid_argument("PulseSpec: rates must be >= 0");
  }

  friend auto operator<=>(const PulseSpec&, const PulseSpec&) = default;
};

/// Assemble the dim^2 x dim^2 superoperator matrix of a generator
/// (column-stacking convention above).
inline Matrix liouvillian_matrix(const LindbladGenerator& gen) {
  const int d = gen.dim();
  const Matrix id = identity(d);
  Matrix L = -kI * (kron(id, gen.hamiltonian) - kron(gen.hamiltonian.transpose(), id));
  for (const auto& [op, rate] : gen.jumps) {
    if (rate == 0) continue;
    const Matrix xdx = op.adjoint() * op;
    L += rate * (kron(op.conjugate(), op) -
                 0.5 * (kron(id, xdx) + kron(xdx.transpose(), id)));
  }
  return L;
}

/// Dense matrix exponential (scaling-and-squaring with Pade approximants).
inline Matrix expm(const Matrix& m) { return m.exp(); }

inline Vector vec(const Matrix& m) {
  return Eigen::Map<const Vector>(m.data(), m.size());
}

inline Matrix unvec(const Vector& v, int dim) {
  return Eigen::Map<const Matrix>(v.data(), dim, dim);
}

namespace detail {

inline Matrix rk4_step(const Matrix& rho, const LindbladGenerator& gen, double h) {
  const Matrix k1 = lindblad_rhs(rho, gen);
  const Matrix k2 = lindblad_rhs(rho + 0.5 * h * k1, gen);
  const Matrix k3 = lindblad_rhs(rho + 0.5 * h * k2, gen);
  const Matrix k4 = lindblad_rhs(rho + h * k3, gen);
  return rho + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace detail

/// Integrate drho/dt = L rho for time t with adaptive RK4 (step doubling,
/// local tolerance `tol` per unit time). The output trace must not drift
/// from the input trace by more than 1e-8; no silent renormalization.
inline DensityMatrix propagate(const DensityMatrix& dm, const LindbladGenerator& gen, double t,
                               double tol = 1e-10) {
  if (t < 0) throw std::invalid_argument("propagate: negative duration");
  if (gen.dim() != dm.dim()) throw std::invalid_argument("propagate: dimension mismatch");
  if (t == 0) return dm;

  const Complex trace_in = dm.rho.trace();
  Matrix rho = dm.rho;
  double time = 0.0;
  double h = std::min(t, 1e-2);
  const long max_steps = 20'000'000;
  long steps = 0;

  while (time < t) {
    if (++steps > max_steps)
      throw std::runtime_error("propagate: step budget exhausted before reaching tolerance");
    h = std::min(h, t - time);
    const Matrix coarse = detail::rk4_step(rho, gen, h);
    const Matrix fine =
        detail::rk4_step(detail::rk4_step(rho, gen, 0.5 * h), gen, 0.5 * h);
    const double err = (fine - coarse).cwiseAbs().maxCoeff() / 15.0;
    const double allowed = tol * h;
    if (err <= allowed || h <= 1e-14 * t) {
      rho = fine + (fine - coarse) / 15.0;  // local extrapolation, 5th order
      time += h;
    }
    const double scale = (err > 0) ? 0.9 * std::pow(allowed / err, 0.2) : 2.0;
    h *= std::min(2.0, std::max(0.2, scale));
  }

  const double drift = std::abs(rho.trace() - trace_in);
  if (drift > 1e-8)
    throw std::runtime_error("propagate: trace drift " + std::to_string(drift) +
                             " exceeds 1e-8");
  return {dm.shape, std::move(rho)};
}

/// Precomputed superoperator of one full pulse; application is a single
/// matrix-vector product. Immutable after construction.
struct PropagatedMap {
  Matrix superoperator;  // dim^2 x dim^2
  PulseSpec pulse;
  int dim = 0;

  DensityMatrix apply(const DensityMatrix& dm) const {
    if (dm.dim() != dim) throw std::invalid_argument("PropagatedMap: dimension mismatch");
    return {dm.shape, unvec(superoperator * vec(dm.rho), dim)};
  }
};

namespace detail {

/// Hermitian eigendecomposition of a segment Hamiltonian; yields
/// U(t) = V exp(-i E t) V† for any duration.
struct HamiltonianEig {
  Matrix vectors;
  Eigen::VectorXd values;

  Matrix unitary(double t) const {
    const Vector phases = (-kI * t * values.cast<Complex>().array()).exp();
    return vectors * phases.asDiagonal() * vectors.adjoint();
  }
};

}  // namespace detail

/// Builds and caches pulse maps for a fixed system + noise configuration.
/// Coherent segments without jump operators use the Hermitian
/// eigendecomposition of H (superoperator = conj(U) ⊗ U); segments with
/// jumps use the dense exponential of the assembled superoperator. A map at
/// detuning -delta is derived from a cached one at +delta through the exact
/// conjugation H(-delta) = Pi H(delta) Pi (a basis permutation; the jump set
/// is Pi-invariant). Thread-safe; cached maps are shared, never mutated.
class PulseMapBuilder {
 public:
  using MapPtr = std::shared_ptr<const PropagatedMap>;
  using MatPtr = std::shared_ptr<const Matrix>;

  PulseMapBuilder(SystemConfig config, NoiseConfig noise)
      : config_(std::move(config)), noise_(noise) {
    config_.validate();
    noise_.validate();
  }

  const SystemConfig& config() const { return config_; }
  const NoiseConfig& noise() const { return noise_; }
  int dim() const { return config_.shape().total_dim(); }

  /// Full pulse map: dissipative segment composed after the coherent one.
  MapPtr map(const PulseSpec& pulse) {
    pulse.validate();
    {
      std::lock_guard lock(mutex_);
      if (auto it = map_cache_.find(pulse); it != map_cache_.end()) return it->second;
    }
    const MatPtr diss = dissipative_superoperator(pulse);
    const MatPtr coh = coherent_superoperator(pulse);
    auto built = std::make_shared<PropagatedMap>(
        PropagatedMap{Matrix((*diss) * (*coh)), pulse, dim()});
    std::lock_guard lock(mutex_);
    return map_cache_.emplace(pulse, std::move(built)).first->second;
  }

  /// Apply one pulse to a state without materializing the composed
  /// superoperator; used where each candidate pulse is evaluated only once
  /// (duration optimization). Noise-free coherent segments act as U rho U†;
  /// a dissipative segment that touches only the oscillator acts blockwise
  /// through the small oscillator-space exponential.
  DensityMatrix apply_pulse(const DensityMatrix& dm, const PulseSpec& pulse) {
    pulse.validate();
    DensityMatrix out = dm;
    if (pulse.t_coherent > 0) {
      if (!noise_.any()) {
        const Matrix u = hamiltonian_eig(pulse.delta).unitary(pulse.t_coherent);
        out.rho = u * out.rho * u.adjoint();
      } else {
        const MatPtr s = coherent_superoperator(pulse);
        out.rho = unvec((*s) * vec(out.rho), dim());
      }
    }
    if (pulse.t_dissipative > 0) {
      if (!noise_.apply_during_dissipative_segment) {
        if (pulse.gamma > 0) apply_osc_map(*osc_superoperator(pulse), out.rho);
      } else {
        const MatPtr d = dissipative_superoperator(pulse);
        out.rho = unvec((*d) * vec(out.rho), dim());
      }
    }
    return out;
  }

 private:
  using DissKey = std::tuple<double, double, double>;  // gamma, t_dissipative, nbar
  using CohKey = std::pair<double, double>;            // delta, t_coherent

  MatPtr coherent_superoperator(const PulseSpec& pulse) {
    const int d = dim();
    if (pulse.t_coherent == 0) return std::make_shared<const Matrix>(identity(d * d));
    if (!noise_.any()) {
      const Matrix u = hamiltonian_eig(pulse.delta).unitary(pulse.t_coherent);
      return std::make_shared<const Matrix>(kron(u.conjugate(), u));
    }
    const CohKey key{pulse.delta, pulse.t_coherent};
    MatPtr mirror;
    {
      std::lock_guard lock(mutex_);
      if (auto it = coh_cache_.find(key); it != coh_cache_.end()) return it->second;
      if (auto it = coh_cache_.find(CohKey{-pulse.delta, pulse.t_coherent});
          it != coh_cache_.end())
        mirror = it->second;
    }
    MatPtr built;
    if (mirror) {
      built = std::make_shared<const Matrix>(parity_conjugate(*mirror));
    } else {
      const LindbladGenerator gen = coherent_generator(pulse.delta, config_, noise_);
      built = std::make_shared<const Matrix>(
          expm(Matrix(liouvillian_matrix(gen) * pulse.t_coherent)));
    }
    std::lock_guard lock(mutex_);
    return coh_cache_.emplace(key, std::move(built)).first->second;
  }

  MatPtr dissipative_superoperator(const PulseSpec& pulse) {
    const DissKey key{pulse.gamma, pulse.t_dissipative, pulse.nbar};
    {
      std::lock_guard lock(mutex_);
      if (auto it = diss_cache_.find(key); it != diss_cache_.end()) return it->second;
    }
    const int d = dim();
    MatPtr built;
    if (pulse.t_dissipative == 0 ||
        (pulse.gamma == 0 && !noise_.apply_during_dissipative_segment)) {
      built = std::make_shared<const Matrix>(identity(d * d));
    } else {
      const LindbladGenerator gen =
          dissipative_generator(pulse.gamma, pulse.nbar, config_, noise_);
      built = std::make_shared<const Matrix>(
          expm(Matrix(liouvillian_matrix(gen) * pulse.t_dissipative)));
    }
    std::lock_guard lock(mutex_);
    return diss_cache_.emplace(key, std::move(built)).first->second;
  }

  const detail::HamiltonianEig& hamiltonian_eig(double delta) {
    std::lock_guard lock(mutex_);
    if (auto it = eig_cache_.find(delta); it != eig_cache_.end()) return it->second;
    Eigen::SelfAdjointEigenSolver<Matrix> es(build_h_total(delta, config_));
    return eig_cache_
        .emplace(delta, detail::HamiltonianEig{es.eigenvectors(), es.eigenvalues()})
        .first->second;
  }

  // Exponential of the cooling generator on the oscillator factor alone
  // (L^2 x L^2); valid whenever spin noise does not extend into the
  // dissipative segment.
  MatPtr osc_superoperator(const PulseSpec& pulse) {
    const DissKey key{pulse.gamma, pulse.t_dissipative, pulse.nbar};
    {
      std::lock_guard lock(mutex_);
      if (auto it = osc_cache_.find(key); it != osc_cache_.end()) return it->second;
    }
    const int levels = config_.n_max + 1;
    const Matrix a = annihilation_op(levels);
    LindbladGenerator gen{Matrix::Zero(levels, levels),
                          {{a, pulse.gamma * (pulse.nbar + 1.0)}}};
    if (pulse.nbar > 0) gen.jumps.push_back({a.adjoint(), pulse.gamma * pulse.nbar});
    auto built = std::make_shared<const Matrix>(
        expm(Matrix(liouvillian_matrix(gen) * pulse.t_dissipative)));
    std::lock_guard lock(mutex_);
    return osc_cache_.emplace(key, std::move(built)).first->second;
  }

  // Apply the oscillator-space map to every (spin row, spin column) block.
  void apply_osc_map(const Matrix& k, Matrix& rho) const {
    const int L = config_.n_max + 1;
    const int ds = config_.shape().spin_dim();
    Vector block(L * L);
    for (int s = 0; s < ds; ++s)
      for (int sp = 0; sp < ds; ++sp) {
        for (int mp = 0; mp < L; ++mp)
          for (int m = 0; m < L; ++m) block(mp * L + m) = rho(s * L + m, sp * L + mp);
        const Vector out = k * block;
        for (int mp = 0; mp < L; ++mp)
          for (int m = 0; m < L; ++m) rho(s * L + m, sp * L + mp) = out(mp * L + m);
      }
  }

  // S' = P S P for the vec-index permutation P induced by the global spin
  // flip; S'[v, w] = S[pi(v), pi(w)].
  Matrix parity_conjugate(const Matrix& s) const {
    const int d = dim();
    const int L = config_.n_max + 1;
    const int mask = config_.shape().spin_dim() - 1;
    std::vector<int> perm(d);
    for (int i = 0; i < d; ++i) perm[i] = ((i / L) ^ mask) * L + (i % L);
    std::vector<int> vperm(size_t(d) * d);
    for (int c = 0; c < d; ++c)
      for (int r = 0; r < d; ++r) vperm[size_t(c) * d + r] = perm[c] * d + perm[r];
    Matrix out(size_t(d) * d, size_t(d) * d);
    for (size_t w = 0; w < vperm.size(); ++w)
      for (size_t v = 0; v < vperm.size(); ++v) out(v, w) = s(vperm[v], vperm[w]);
    return out;
  }

  SystemConfig config_;
  NoiseConfig noise_;
  std::mutex mutex_;
  std::map<PulseSpec, MapPtr> map_cache_;
  std::map<CohKey, MatPtr> coh_cache_;
  std::map<DissKey, MatPtr> diss_cache_;
  std::map<DissKey, MatPtr> osc_cache_;
  std::map<double, detail::HamiltonianEig> eig_cache_;
};

/// Build the superoperator of one full pulse for the given configuration.
inline PropagatedMap build_pulse_map(const PulseSpec& pulse, const SystemConfig& config,
                                     const NoiseConfig& noise) {
  PulseMapBuilder builder(config, noise);
  return *builder.map(pulse);
}

/// Max-norm discrepancy between the RK4 route and the dense-exponential
/// route; the verification oracle tying the two propagation paths together.
inline double compare_integrators(const DensityMatrix& dm, const LindbladGenerator& gen,
                                  double t) {
  const int d = gen.dim();
  if (d * d > 5000)
    throw std::invalid_argument("compare_integrators: dimension too large for dense exponential");
  const DensityMatrix via_rk = propagate(dm, gen, t);
  const Matrix via_expm = unvec(expm(Matrix(liouvillian_matrix(gen) * t)) * vec(dm.rho), d);
  return (via_rk.rho - via_expm).cwiseAbs().maxCoeff();
}

}  // namespace spinchain
