// Spectral diagnostics of the spin chain (level diagram, single-flip
// resonance table) and extraction of effective per-sequence transfer rates
// from simulated population traces.
#pragma once

#include <Eigen/Eigenvalues>
#include <string>
#include <vector>

#include "spinchain/protocol.hpp"

namespace spinchain {

/// One product configuration of the chain: exact Ising energy
/// sum_j J_j s_j s_{j+1}, magnetization sum_j s_j, and the diagonal parity
/// prod_j s_j (toggled by every single-spin flip).
struct LevelEntry {
  std::string label;  // 'u'/'d' per site, site 1 first
  int config = 0;     // bit pattern, bit set = down, site 1 most significant
  double e_int = 0.0;
  int magnetization = 0;
  int parity = 1;
};

struct LevelDiagram {
  std::vector<LevelEntry> entries;  // 2^N entries, enumeration order
};

namespace detail {

inline int spin_sign(int config, int site, int n_spins) {
  // +1 for up; site is 1-based, site 1 is the most significant bit.
  return ((config >> (n_spins - site)) & 1) ? -1 : 1;
}

inline double ising_energy(int config, const SystemConfig& c) {
  double e = 0;
  for (int j = 1; j < c.n_spins; ++j)
    e += c.couplings[j - 1] * spin_sign(config, j, c.n_spins) *
         spin_sign(config, j + 1, c.n_spins);
  return e;
}

}  // namespace detail

inline LevelDiagram level_diagram(const SystemConfig& config) {
  config.validate();
  LevelDiagram diagram;
  const int n = config.n_spins;
  for (int s = 0; s < (1 << n); ++s) {
    LevelEntry entry;
    entry.config = s;
    entry.e_int = detail::ising_energy(s, config);
    for (int j = 1; j <= n; ++j) {
      const int sign = detail::spin_sign(s, j, n);
      entry.label += (sign > 0) ? 'u' : 'd';
      entry.magnetization += sign;
      entry.parity *= sign;
    }
    diagram.entries.push_back(std::move(entry));
  }
  return diagram;
}

/// Single-spin-flip transition |n,0> <-> |m,1> (or 1 -> 0) and the detuning
/// that makes it resonant under H_int + H_0(delta) + omega_t a†a:
///   delta* = 2 (E_m - E_n + omega_t * osc_change) / (M_m - M_n).
struct ResonanceRow {
  int initial_config = 0;
  int final_config = 0;
  int flipped_site = 0;  // 1-based
  int osc_change = 0;    // +1 or -1
  double required_detuning = 0.0;
  double matrix_element = 0.0;            // |<m,1| sum_j g_j sigma_j^x (a+a†) |n,0>|
  std::vector<int> matched_candidates;    // indices into the candidate detuning list
};

struct ResonanceTable {
  std::vector<ResonanceRow> rows;
  double window = 0.0;
};

/// Enumerate every single-site flip combined with one oscillator quantum
/// (0->1 and 1->0) and solve the resonance condition for delta. Candidate
/// detunings within `window` (default 4 * max g) of a row's delta* are
/// flagged on that row.
inline ResonanceTable resonance_table(const SystemConfig& config,
                                      const std::vector<double>& candidate_detunings,
                                      double window = 0.0) {
  config.validate();
  const int n = config.n_spins;
  ResonanceTable table;
  table.window = window > 0 ? window
                            : 4.0 * *std::max_element(config.rabi.begin(), config.rabi.end());
  for (int s = 0; s < (1 << n); ++s) {
    const double e_initial = detail::ising_energy(s, config);
    for (int site = 1; site <= n; ++site) {
      const int flipped = s ^ (1 << (n - site));
      const double de = detail::ising_energy(flipped, config) - e_initial;
      const int dm = -2 * detail::spin_sign(s, site, n);  // magnetization change
      for (int osc_change : {+1, -1}) {
        ResonanceRow row;
        row.initial_config = s;
        row.final_config = flipped;
        row.flipped_site = site;
        row.osc_change = osc_change;
        row.required_detuning = 2.0 * (de + SystemConfig::omega_t * osc_change) / dm;
        row.matrix_element = config.rabi[site - 1];
        for (size_t k = 0; k < candidate_detunings.size(); ++k)
          if (std::abs(candidate_detunings[k] - row.required_detuning) <= table.window)
            row.matched_candidates.push_back(int(k));
        table.rows.push_back(std::move(row));
      }
    }
  }
  return table;
}

/// Nonnegative least squares, Lawson-Hanson active set.
inline Eigen::VectorXd nnls(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
  const int n = int(a.cols());
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  std::vector<bool> passive(n, false);
  const double tol = 1e-12 * std::max(1.0, a.cwiseAbs().maxCoeff());

  for (int outer = 0; outer < 4 * n + 16; ++outer) {
    const Eigen::VectorXd w = a.transpose() * (b - a * x);
    int pick = -1;
    double wmax = tol;
    for (int i = 0; i < n; ++i)
      if (!passive[i] && w(i) > wmax) {
        wmax = w(i);
        pick = i;
      }
    if (pick < 0) break;
    passive[pick] = true;

    for (int inner = 0; inner < 4 * n + 16; ++inner) {
      std::vector<int> idx;
      for (int i = 0; i < n; ++i)
        if (passive[i]) idx.push_back(i);
      Eigen::MatrixXd ap(a.rows(), idx.size());
      for (size_t k = 0; k < idx.size(); ++k) ap.col(k) = a.col(idx[k]);
      const Eigen::VectorXd z =
          ap.colPivHouseholderQr().solve(b);
      if ((z.array() > 0).all()) {
        x.setZero();
        for (size_t k = 0; k < idx.size(); ++k) x(idx[k]) = z(k);
        break;
      }
      // Step back to the feasible boundary and retire zeroed variables.
      double alpha = 1.0;
      for (size_t k = 0; k < idx.size(); ++k)
        if (z(k) <= 0) alpha = std::min(alpha, x(idx[k]) / (x(idx[k]) - z(k)));
      for (size_t k = 0; k < idx.size(); ++k) {
        x(idx[k]) += alpha * (z(k) - x(idx[k]));
        if (x(idx[k]) <= tol) {
          x(idx[k]) = 0.0;
          passive[idx[k]] = false;
        }
      }
    }
  }
  return x;
}

/// Least-squares fit of a one-step linear Markov model P_{l+1} = M P_l with
/// nonnegative entries. Rates are per sequence application: the off-diagonal
/// gamma(m, n) is the fraction of class-n population transferred to class m
/// by one full sequence, and Gamma_n = sum_{m != n} gamma(m, n).
struct RateFit {
  Eigen::MatrixXd transfer;      // fitted M, column n holds outflows of class n
  Eigen::MatrixXd gamma_matrix;  // off-diagonals of M, diagonal zero
  Eigen::VectorXd loss_rates;    // Gamma_n
  double gamma_target = 0.0;
  int target_index = -1;
  double residual = 0.0;
};

inline RateFit fit_rates(const std::vector<Eigen::VectorXd>& populations, int target_index) {
  if (populations.size() < 11)
    throw std::invalid_argument("fit_rates: under-determined fit, need >= 10 iterations");
  const int k = int(populations.front().size());
  if (target_index < 0 || target_index >= k)
    throw std::invalid_argument("fit_rates: target index out of range");
  const int pairs = int(populations.size()) - 1;

  Eigen::MatrixXd a(pairs, k);
  for (int l = 0; l < pairs; ++l) a.row(l) = populations[l].transpose();

  RateFit fit;
  fit.target_index = target_index;
  fit.transfer.resize(k, k);
  for (int m = 0; m < k; ++m) {
    Eigen::VectorXd b(pairs);
    for (int l = 0; l < pairs; ++l) b(l) = populations[l + 1](m);
    fit.transfer.row(m) = nnls(a, b).transpose();
  }

  fit.gamma_matrix = fit.transfer;
  fit.gamma_matrix.diagonal().setZero();
  fit.loss_rates = fit.gamma_matrix.colwise().sum();
  fit.gamma_target = fit.loss_rates(target_index);

  double sq = 0.0;
  for (int l = 0; l < pairs; ++l)
    sq += (populations[l + 1] - fit.transfer * populations[l]).squaredNorm();
  fit.residual = std::sqrt(sq / pairs);
  return fit;
}

/// Stationary distribution of the fitted one-step transfer matrix
/// (eigenvector at the eigenvalue closest to 1, normalized to unit sum).
inline Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& transfer) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(transfer);
  int best = 0;
  for (int i = 1; i < transfer.rows(); ++i)
    if (std::abs(es.eigenvalues()(i) - Complex(1.0)) <
        std::abs(es.eigenvalues()(best) - Complex(1.0)))
      best = i;
  Eigen::VectorXd v = es.eigenvectors().col(best).real();
  if (v.sum() < 0) v = -v;
  return v / v.sum();
}

/// Population columns of a trace recorded with record_populations.
inline std::vector<Eigen::VectorXd> trace_populations(const FidelityTrace& trace) {
  std::vector<Eigen::VectorXd> out;
  for (const auto& rec : trace.records) {
    if (rec.populations.empty())
      throw std::invalid_argument("trace_populations: trace lacks population records");
    out.push_back(Eigen::Map<const Eigen::VectorXd>(rec.populations.data(),
                                                    rec.populations.size()));
  }
  return out;
}

}  // namespace spinchain
