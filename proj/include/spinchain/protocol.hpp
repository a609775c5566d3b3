// Pulse sequences, the parity-correction channel and the iteration loop that
// pump the chain into the entangled antiferromagnetic target state
// (|udud...> + |dudu...>)/sqrt(2).
#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "spinchain/evolve.hpp"

namespace spinchain {

/// Symmetric superposition of the two Neel product states, in the spin
/// space (dimension 2^N). Defined for even N only.
struct TargetState {
  int n_spins = 0;
  Vector vector;
};

inline TargetState make_target_state(int n_spins) {
  if (n_spins < 2 || n_spins % 2 != 0)
    throw std::invalid_argument("make_target_state: target state requires even N >= 2");
  std::vector<int> neel_a(n_spins), neel_b(n_spins);
  for (int j = 0; j < n_spins; ++j) {
    neel_a[j] = j % 2;       // u d u d ...
    neel_b[j] = 1 - j % 2;   // d u d u ...
  }
  const SpaceShape spin_only{n_spins, 1};
  Vector v = (basis_state(neel_a, 0, spin_only) + basis_state(neel_b, 0, spin_only)) /
             std::sqrt(2.0);
  return {n_spins, std::move(v)};
}

/// F = <psi_T| Tr_an(rho) |psi_T>, the target population of the reduced
/// spin state.
inline double fidelity(const DensityMatrix& dm, const TargetState& target) {
  if (dm.shape.n_spins != target.n_spins)
    throw std::invalid_argument("fidelity: dimension mismatch");
  const DensityMatrix spin = partial_trace_ancilla(dm);
  return (target.vector.adjoint() * spin.rho * target.vector)(0).real();
}

/// Pi = sigma_1^x ... sigma_N^x on the spin space.
inline Matrix parity_operator(int n_spins) {
  if (n_spins < 1) throw std::invalid_argument("parity_operator: N must be >= 1");
  Matrix pi = pauli_x();
  for (int j = 1; j < n_spins; ++j) pi = kron(pi, pauli_x());
  return pi;
}

/// Population of the even-parity sector, Tr[(1 + Pi)/2 rho].
inline double even_parity_population(const DensityMatrix& dm) {
  const Matrix pi_full =
      kron(parity_operator(dm.shape.n_spins), identity(dm.shape.n_osc_levels));
  return 0.5 * (1.0 + (pi_full * dm.rho).trace().real());
}

enum class ParityStrategy { Off, FlipZ, Reinitialize };

/// Measure Pi and correct odd outcomes:
///   rho -> P+ rho P+  +  C(P- rho P-),   P± = (1 ± Pi)/2 ⊗ I_osc,
/// where C conjugates by sigma_z at `site` (FlipZ) or replaces the spin part
/// by |u...u><u...u| keeping the oscillator marginal (Reinitialize).
inline DensityMatrix parity_correction(const DensityMatrix& dm, ParityStrategy strategy,
                                       int site = 1) {
  if (strategy == ParityStrategy::Off) return dm;
  const SpaceShape& shape = dm.shape;
  const Matrix pi_full = kron(parity_operator(shape.n_spins), identity(shape.n_osc_levels));
  const Matrix id = identity(shape.total_dim());
  const Matrix p_even = 0.5 * (id + pi_full);
  const Matrix p_odd = 0.5 * (id - pi_full);
  const Matrix even = p_even * dm.rho * p_even;
  const Matrix odd = p_odd * dm.rho * p_odd;
  if (strategy == ParityStrategy::FlipZ) {
    if (site < 1 || site > shape.n_spins)
      throw std::invalid_argument("parity_correction: invalid site");
    const Matrix z = embed_spin_op(pauli_z(), site, shape);
    return {shape, even + z * odd * z};
  }
  // Reinitialize: odd-parity spin component -> |u...u>, oscillator marginal kept.
  const Matrix osc_marginal = partial_trace_spins(DensityMatrix{shape, odd});
  Matrix all_up = Matrix::Zero(shape.spin_dim(), shape.spin_dim());
  all_up(0, 0) = 1.0;
  return {shape, even + kron(all_up, osc_marginal)};
}

/// Ordered pulse list plus the parity-correction setting applied once after
/// the last pulse of every sequence application.
struct Sequence {
  std::vector<PulseSpec> pulses;
  ParityStrategy parity_strategy = ParityStrategy::FlipZ;
  int parity_site = 1;

  void validate() const {
    if (pulses.empty()) throw std::invalid_argument("Sequence: pulse list is empty");
    for (const auto& p : pulses) p.validate();
  }

  double duration() const {
    double t = 0;
    for (const auto& p : pulses) t += p.t_coherent + p.t_dissipative;
    return t;
  }
};

/// Built-in schedules. N=2: detunings -w_t + 2 J1 and its negative. N=4:
/// the five-pulse schedule
///   -w_t + 2(J1+J2), -w_t + 2 J1, -w_t - 2(J1-J2), and the negatives of
/// the first two. Coherent durations start at J1 t = 10; each dissipative
/// segment has gamma t = 20.
inline Sequence default_sequence(const SystemConfig& config) {
  config.validate();
  const double w = SystemConfig::omega_t;
  const double j1 = config.couplings[0];
  std::vector<double> detunings;
  if (config.n_spins == 2) {
    detunings = {-w + 2 * j1, w - 2 * j1};
  } else if (config.n_spins == 4) {
    const double j2 = config.couplings[1];
    detunings = {-w + 2 * (j1 + j2), -w + 2 * j1, -w - 2 * (j1 - j2),
                 w - 2 * (j1 + j2), w - 2 * j1};
  } else {
    throw std::invalid_argument(
        "default_sequence: built-in schedules exist for N=2 and N=4; supply pulses explicitly");
  }
  const double t_init = 10.0 / j1;
  const double t_gamma = 10.0 / j1;
  const double gamma = 20.0 / t_gamma;
  Sequence seq;
  for (double delta : detunings)
    seq.pulses.push_back({delta, t_init, t_gamma, gamma, 0.0});
  seq.parity_strategy = ParityStrategy::FlipZ;
  seq.parity_site = 1;
  return seq;
}

inline DensityMatrix all_up_state(const SystemConfig& config) {
  const SpaceShape shape = config.shape();
  return pure_state(basis_state(std::vector<int>(config.n_spins, 0), 0, shape), shape);
}

inline DensityMatrix maximally_mixed_state(const SystemConfig& config) {
  const SpaceShape shape = config.shape();
  Matrix rho = Matrix::Zero(shape.total_dim(), shape.total_dim());
  for (int s = 0; s < shape.spin_dim(); ++s)
    rho(s * shape.n_osc_levels, s * shape.n_osc_levels) = 1.0 / shape.spin_dim();
  return {shape, rho};
}

/// |psi_T><psi_T| ⊗ |0><0| on the full space.
inline DensityMatrix target_full_state(const SystemConfig& config) {
  const SpaceShape shape = config.shape();
  const TargetState target = make_target_state(config.n_spins);
  Vector full = Vector::Zero(shape.total_dim());
  for (int s = 0; s < shape.spin_dim(); ++s) full(s * shape.n_osc_levels) = target.vector(s);
  return pure_state(full, shape);
}

/// Apply one full sequence (all pulses in listed order, then the parity
/// correction) through the builder's per-pulse fast path.
inline DensityMatrix apply_sequence(DensityMatrix state, const Sequence& seq,
                                    PulseMapBuilder& builder) {
  for (const auto& pulse : seq.pulses) state = builder.apply_pulse(state, pulse);
  return parity_correction(state, seq.parity_strategy, seq.parity_site);
}

/// Per-sequence loss from the target: 1 - F after one full sequence applied
/// to |psi_T><psi_T| ⊗ |0><0|. This is the quantity the duration optimizer
/// minimizes.
inline double sequence_target_loss(const Sequence& seq, PulseMapBuilder& builder) {
  const TargetState target = make_target_state(builder.config().n_spins);
  const DensityMatrix out =
      apply_sequence(target_full_state(builder.config()), seq, builder);
  return 1.0 - fidelity(out, target);
}

/// Spin-space basis adapted to the protocol: all product configurations,
/// with the two Neel states replaced by their symmetric ("neel+", the
/// target) and antisymmetric ("neel-") superpositions.
struct PartitionBasis {
  std::vector<std::string> labels;
  std::vector<Vector> states;  // spin space, dim 2^N
  int target_index = -1;
};

inline PartitionBasis protocol_partition(int n_spins) {
  const int ds = 1 << n_spins;
  int neel_a = 0, neel_b = 0;
  for (int j = 0; j < n_spins; ++j) {
    neel_a = (neel_a << 1) | (j % 2);
    neel_b = (neel_b << 1) | (1 - j % 2);
  }
  PartitionBasis basis;
  const bool has_target = (n_spins % 2 == 0);
  for (int s = 0; s < ds; ++s) {
    std::string label;
    for (int j = n_spins - 1; j >= 0; --j) label += ((s >> j) & 1) ? 'd' : 'u';
    Vector v = Vector::Zero(ds);
    if (has_target && s == neel_a) {
      v(neel_a) = v(neel_b) = 1.0 / std::sqrt(2.0);
      basis.target_index = int(basis.states.size());
      label = "neel+";
    } else if (has_target && s == neel_b) {
      v(neel_a) = 1.0 / std::sqrt(2.0);
      v(neel_b) = -1.0 / std::sqrt(2.0);
      label = "neel-";
    } else {
      v(s) = 1.0;
    }
    basis.labels.push_back(std::move(label));
    basis.states.push_back(std::move(v));
  }
  return basis;
}

inline std::vector<double> partition_populations(const DensityMatrix& dm,
                                                 const PartitionBasis& basis) {
  const DensityMatrix spin = partial_trace_ancilla(dm);
  std::vector<double> pops;
  pops.reserve(basis.states.size());
  for (const auto& b : basis.states)
    pops.push_back((b.adjoint() * spin.rho * b)(0).real());
  return pops;
}

/// Per-pulse target loss: 1 - F after a single pulse applied to the target;
/// the quantity whose zeros locate candidate durations.
inline double single_pulse_target_loss(const PulseSpec& pulse, PulseMapBuilder& builder) {
  const TargetState target = make_target_state(builder.config().n_spins);
  return 1.0 - fidelity(builder.apply_pulse(target_full_state(builder.config()), pulse),
                        target);
}

/// One-step transfer matrix of the full sequence on the partition classes:
/// column k holds the class populations after one sequence applied to
/// |b_k><b_k| ⊗ |0><0|. This is the discrete rate matrix of the protocol.
inline Eigen::MatrixXd coarse_transfer_matrix(const Sequence& seq, PulseMapBuilder& builder,
                                              const PartitionBasis& basis) {
  const SpaceShape shape = builder.config().shape();
  const int k_classes = int(basis.states.size());
  Eigen::MatrixXd transfer(k_classes, k_classes);
  Matrix vac = Matrix::Zero(shape.n_osc_levels, shape.n_osc_levels);
  vac(0, 0) = 1.0;
  for (int k = 0; k < k_classes; ++k) {
    DensityMatrix state{shape, kron(basis.states[k] * basis.states[k].adjoint(), vac)};
    state = apply_sequence(std::move(state), seq, builder);
    const std::vector<double> pops = partition_populations(state, basis);
    for (int m = 0; m < k_classes; ++m) transfer(m, k) = pops[m];
  }
  return transfer;
}

/// Steady-state infidelity of the coarse-grained transfer matrix (one minus
/// the target weight of its eigenvector at the eigenvalue closest to 1).
inline double coarse_stationary_infidelity(const Sequence& seq, PulseMapBuilder& builder,
                                           const PartitionBasis& basis) {
  const Eigen::MatrixXd transfer = coarse_transfer_matrix(seq, builder, basis);
  Eigen::EigenSolver<Eigen::MatrixXd> es(transfer);
  int top = 0;
  for (int i = 1; i < transfer.rows(); ++i)
    if (std::abs(es.eigenvalues()(i) - Complex(1.0)) <
        std::abs(es.eigenvalues()(top) - Complex(1.0)))
      top = i;
  Eigen::VectorXd pi = es.eigenvectors().col(top).real();
  if (pi.sum() < 0) pi = -pi;
  return 1.0 - pi(basis.target_index) / pi.sum();
}

struct OptimizeOptions {
  double span = 0.3;          // scan t in [t0 (1-span), t0 (1+span)] ...
  double t_min = 0.0;         // ... or in [t_min, t_max] when both are set
  double t_max = 0.0;
  int grid_points = 201;      // coarse scan of the per-pulse loss
  int refine_points = 2001;   // dense scan resolving the fast loss ripple
  int max_candidates = 12;    // local loss minima kept per pulse
  int assembly_passes = 3;    // drain-aware coordinate-descent passes
  int surrogate_coarse_points = 671;  // per-pulse resolution of the drain-aware scan
  bool drain_aware = true;
};

struct OptimizeResult {
  Sequence sequence;
  double loss = 0.0;
};

/// Tune the coherent durations. Two stages:
///
/// 1. Candidate search (per pulse): grid scans of the per-pulse target loss
///    over the duration window (coarse, then dense enough to resolve the
///    counter-rotating ripple of period ~ pi/omega_t), keeping the deepest
///    local minima, each polished by golden section.
/// 2. Drain-aware assembly: coordinate descent over pulses choosing among
///    each pulse's candidates by the steady-state infidelity of the
///    coarse-grained one-step transfer matrix. Minimizing per-sequence
///    target loss alone is not enough: a duration that suppresses leakage
///    out of the target can simultaneously de-tune the pulse's own pumping
///    transition (an integer number of Rabi oscillations on the resonant
///    line), leaving some configuration with a tiny drain rate that then
///    accumulates all the steady-state infidelity. The stationary objective
///    balances the target loss against every drain at once.
///
/// Durations move only on strict improvement, so a flat objective (g = 0)
/// returns the initial schedule.
inline OptimizeResult optimize_pulse_durations(const Sequence& seq, const SystemConfig& config,
                                               const NoiseConfig& noise = {},
                                               const OptimizeOptions& opts = {}) {
  seq.validate();
  PulseMapBuilder builder(config, noise);
  constexpr double kGolden = 0.6180339887498949;

  auto pulse_loss = [&](size_t j, double t) {
    PulseSpec p = seq.pulses[j];
    p.t_coherent = t;
    const double loss = single_pulse_target_loss(p, builder);
    if (!std::isfinite(loss))
      throw std::runtime_error("optimize_pulse_durations: non-finite objective");
    return loss;
  };

  // Stage 1: candidate durations per pulse.
  std::vector<std::vector<double>> candidates(seq.pulses.size());
  for (size_t j = 0; j < seq.pulses.size(); ++j) {
    const double t0 = seq.pulses[j].t_coherent;
    candidates[j].push_back(t0);
    if (t0 <= 0) continue;
    const double lo = (opts.t_max > opts.t_min) ? opts.t_min : t0 * (1.0 - opts.span);
    const double hi = (opts.t_max > opts.t_min) ? opts.t_max : t0 * (1.0 + opts.span);
    const int points = std::max(opts.grid_points, opts.refine_points);
    const double step = (hi - lo) / (points - 1);

    std::vector<double> losses(points);
    for (int k = 0; k < points; ++k) losses[k] = pulse_loss(j, lo + k * step);

    std::vector<std::pair<double, double>> minima;  // (loss, t)
    for (int k = 1; k + 1 < points; ++k)
      if (losses[k] < losses[k - 1] && losses[k] <= losses[k + 1])
        minima.emplace_back(losses[k], lo + k * step);
    std::sort(minima.begin(), minima.end());
    if (int(minima.size()) > opts.max_candidates) minima.resize(opts.max_candidates);

    for (auto& [coarse_loss, t_c] : minima) {
      double a = std::max(lo, t_c - step), b = std::min(hi, t_c + step);
      double x1 = b - kGolden * (b - a), x2 = a + kGolden * (b - a);
      double f1 = pulse_loss(j, x1), f2 = pulse_loss(j, x2);
      while (b - a > 1e-9 * t_c) {
        if (f1 < f2) {
          b = x2; x2 = x1; f2 = f1;
          x1 = b - kGolden * (b - a);
          f1 = pulse_loss(j, x1);
        } else {
          a = x1; x1 = x2; f1 = f2;
          x2 = a + kGolden * (b - a);
          f2 = pulse_loss(j, x2);
        }
      }
      candidates[j].push_back(0.5 * (a + b));
    }
  }

  // Stage 2a: loss-only assembly over the candidates (per pulse, keep the
  // candidate minimizing the full per-sequence target loss).
  Sequence best = seq;
  {
    double best_loss = sequence_target_loss(best, builder);
    for (size_t j = 0; j < seq.pulses.size(); ++j) {
      for (double t : candidates[j]) {
        Sequence trial = best;
        trial.pulses[j].t_coherent = t;
        const double loss = sequence_target_loss(trial, builder);
        if (loss < best_loss - 1e-14) {
          best = std::move(trial);
          best_loss = loss;
        }
      }
    }
  }

  // Stage 2b: drain-aware coordinate descent on the stationary objective,
  // coarse per-pulse sweeps of the whole window followed by a dense local
  // refinement. Skipped when nothing pumps (all g = 0): the chain is then
  // reducible and has no meaningful stationary distribution.
  const bool drive_on =
      std::any_of(config.rabi.begin(), config.rabi.end(), [](double g) { return g != 0; });
  if (opts.drain_aware && drive_on) {
    const PartitionBasis basis = protocol_partition(config.n_spins);
    double best_obj = coarse_stationary_infidelity(best, builder, basis);
    auto try_surrogate = [&](size_t j, double t) {
      Sequence trial = best;
      trial.pulses[j].t_coherent = t;
      const double obj = coarse_stationary_infidelity(trial, builder, basis);
      if (std::isfinite(obj) && obj < best_obj - 1e-14) {
        best = std::move(trial);
        best_obj = obj;
        return true;
      }
      return false;
    };
    for (int pass = 0; pass < opts.assembly_passes; ++pass) {
      bool moved = false;
      for (size_t j = 0; j < seq.pulses.size(); ++j) {
        const double t0 = seq.pulses[j].t_coherent;
        if (t0 <= 0) continue;
        const double lo = (opts.t_max > opts.t_min) ? opts.t_min : t0 * (1.0 - opts.span);
        const double hi = (opts.t_max > opts.t_min) ? opts.t_max : t0 * (1.0 + opts.span);
        const double coarse = (hi - lo) / (opts.surrogate_coarse_points - 1);
        for (int k = 0; k < opts.surrogate_coarse_points; ++k)
          moved |= try_surrogate(j, lo + k * coarse);
        for (double t : candidates[j]) moved |= try_surrogate(j, t);
        // Local dense polish around the incumbent.
        const double center = best.pulses[j].t_coherent;
        const double fine = (hi - lo) / (std::max(opts.grid_points, opts.refine_points) - 1);
        for (double t = std::max(lo, center - 2 * coarse);
             t <= std::min(hi, center + 2 * coarse); t += std::max(fine, coarse / 64))
          moved |= try_surrogate(j, t);
      }
      if (!moved) break;
    }
  }
  return {best, sequence_target_loss(best, builder)};
}

struct IterationRecord {
  int iteration = 0;
  double fidelity = 0.0;
  double even_parity_population = 0.0;
  double mean_osc_occupation = 0.0;
  std::vector<double> populations;  // per protocol_partition, when recorded
};

struct FidelityTrace {
  std::vector<IterationRecord> records;  // records[0] is the initial state
  bool converged = false;
  double asymptotic_fidelity = 0.0;
  double sequence_duration = 0.0;  // time of one full sequence, units 1/omega_t
};

struct RunOptions {
  int max_iters = 500;
  double convergence_tol = 1e-10;
  bool record_populations = false;
};

/// Iterate the full sequence map (pulse maps in order, then the parity
/// correction) from rho0. Stops when |F_l - F_{l-1}| < convergence_tol for 5
/// consecutive iterations, or at max_iters. The final fidelity is reported
/// as the asymptotic value.
inline FidelityTrace run_iterations(const DensityMatrix& rho0, const Sequence& seq,
                                    PulseMapBuilder& builder, const RunOptions& opts = {}) {
  seq.validate();
  if (opts.max_iters < 1) throw std::invalid_argument("run_iterations: max_iters must be >= 1");
  const TargetState target = make_target_state(builder.config().n_spins);
  const PartitionBasis partition =
      opts.record_populations ? protocol_partition(builder.config().n_spins) : PartitionBasis{};

  std::vector<PulseMapBuilder::MapPtr> maps;
  maps.reserve(seq.pulses.size());
  for (const auto& pulse : seq.pulses) maps.push_back(builder.map(pulse));

  auto record = [&](int iteration, const DensityMatrix& state) {
    IterationRecord rec;
    rec.iteration = iteration;
    rec.fidelity = fidelity(state, target);
    rec.even_parity_population = even_parity_population(state);
    rec.mean_osc_occupation = mean_osc_occupation(state);
    if (opts.record_populations) rec.populations = partition_populations(state, partition);
    if (rec.fidelity < -1e-9 || rec.fidelity > 1.0 + 1e-6)
      throw std::runtime_error("run_iterations: fidelity left [0, 1], aborting");
    return rec;
  };

  FidelityTrace trace;
  trace.sequence_duration = seq.duration();
  DensityMatrix state = rho0;
  trace.records.push_back(record(0, state));

  int quiet = 0;
  for (int l = 1; l <= opts.max_iters; ++l) {
    for (const auto& m : maps) state = m->apply(state);
    state = parity_correction(state, seq.parity_strategy, seq.parity_site);
    trace.records.push_back(record(l, state));
    const double df = std::abs(trace.records[l].fidelity - trace.records[l - 1].fidelity);
    quiet = (df < opts.convergence_tol) ? quiet + 1 : 0;
    if (quiet >= 5) {
      trace.converged = true;
      break;
    }
  }
  trace.asymptotic_fidelity = trace.records.back().fidelity;
  return trace;
}

inline FidelityTrace run_iterations(const DensityMatrix& rho0, const Sequence& seq,
                                    const SystemConfig& config, const NoiseConfig& noise,
                                    const RunOptions& opts = {}) {
  PulseMapBuilder builder(config, noise);
  return run_iterations(rho0, seq, builder, opts);
}

}  // namespace spinchain
