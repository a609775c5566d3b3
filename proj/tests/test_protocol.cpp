#include <catch2/catch_amalgamated.hpp>

#include "spinchain/protocol.hpp"
#include "test_helpers.hpp"

using namespace spinchain;
namespace st = spinchain::testing;

namespace {

// Antisymmetric Neel superposition (the odd-parity partner of the target).
DensityMatrix odd_neel_state(const SystemConfig& config) {
  const SpaceShape shape = config.shape();
  std::vector<int> neel_a(config.n_spins), neel_b(config.n_spins);
  for (int j = 0; j < config.n_spins; ++j) {
    neel_a[j] = j % 2;
    neel_b[j] = 1 - j % 2;
  }
  const Vector v = (basis_state(neel_a, 0, shape) - basis_state(neel_b, 0, shape)) /
                   std::sqrt(2.0);
  return pure_state(v, shape);
}

}  // namespace

TEST_CASE("target state") {
  const TargetState target = make_target_state(4);

  SECTION("normalized") { REQUIRE(std::abs(target.vector.norm() - 1.0) < 1e-14); }

  SECTION("even parity") {
    const Vector flipped = parity_operator(4) * target.vector;
    REQUIRE((flipped - target.vector).cwiseAbs().maxCoeff() < 1e-14);
  }

  SECTION("H_int eigenstate at minus the total bond strength") {
    SystemConfig c = make_chain_config(4, 0.05, 5e-3, 0);
    const Matrix h = build_h_int(c);
    Vector full = target.vector;  // n_max = 0 so spin space == full space
    const double e = -(c.couplings[0] + c.couplings[1] + c.couplings[2]);
    REQUIRE((h * full - e * full).cwiseAbs().maxCoeff() < 1e-14);
  }

  SECTION("odd N rejected") {
    REQUIRE_THROWS_AS(make_target_state(3), std::invalid_argument);
  }
}

TEST_CASE("fidelity") {
  SystemConfig c = make_chain_config(4, 0.05, 5e-3, 2);
  const TargetState target = make_target_state(4);

  REQUIRE(fidelity(target_full_state(c), target) == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(fidelity(all_up_state(c), target) == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(fidelity(maximally_mixed_state(c), target) ==
          Catch::Approx(1.0 / 16.0).margin(1e-12));
}

TEST_CASE("parity operator") {
  SECTION("flips all spins") {
    const Matrix pi = parity_operator(2);
    const SpaceShape shape{2, 1};
    const Vector uu = basis_state({0, 0}, 0, shape);
    const Vector dd = basis_state({1, 1}, 0, shape);
    REQUIRE((pi * uu - dd).cwiseAbs().maxCoeff() < 1e-15);
  }

  SECTION("target has parity +1, the antisymmetric partner -1") {
    const Matrix pi = parity_operator(4);
    const TargetState target = make_target_state(4);
    REQUIRE((pi * target.vector - target.vector).cwiseAbs().maxCoeff() < 1e-14);
    SystemConfig c = make_chain_config(4, 0.05, 5e-3, 0);
    const DensityMatrix odd = odd_neel_state(c);
    // spin space == full space at n_max = 0
    REQUIRE((pi * odd.rho * pi - odd.rho).cwiseAbs().maxCoeff() < 1e-14);
    REQUIRE(even_parity_population(odd) == Catch::Approx(0.0).margin(1e-12));
  }

  SECTION("involution with half the spectrum in each sector") {
    const int n = 3;
    const Matrix pi = parity_operator(n);
    REQUIRE((pi * pi - identity(1 << n)).cwiseAbs().maxCoeff() < 1e-14);
    REQUIRE((pi - pi.adjoint()).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(std::abs(pi.trace()) < 1e-14);  // eigenvalues ±1, multiplicity 2^{N-1} each
  }
}

TEST_CASE("parity correction") {
  SystemConfig c = make_chain_config(4, 0.05, 5e-3, 2);

  SECTION("even-parity states are fixed points") {
    std::mt19937_64 rng(81);
    const DensityMatrix raw = st::random_density_state(c.shape(), rng);
    const Matrix pi_full = kron(parity_operator(4), identity(3));
    const Matrix p_even = 0.5 * (identity(48) + pi_full);
    Matrix even = p_even * raw.rho * p_even;
    even /= even.trace();
    const DensityMatrix state{c.shape(), even};
    const DensityMatrix out = parity_correction(state, ParityStrategy::FlipZ);
    REQUIRE((out.rho - state.rho).cwiseAbs().maxCoeff() < 1e-12);
  }

  SECTION("flip_z maps the odd Neel superposition onto the target") {
    const DensityMatrix out = parity_correction(odd_neel_state(c), ParityStrategy::FlipZ);
    REQUIRE(fidelity(out, make_target_state(4)) == Catch::Approx(1.0).margin(1e-12));
  }

  SECTION("maximally mixed input is purged of odd parity, trace preserved") {
    const DensityMatrix out =
        parity_correction(maximally_mixed_state(c), ParityStrategy::FlipZ);
    REQUIRE(std::abs(out.rho.trace() - Complex(1.0)) < 1e-12);
    REQUIRE(even_parity_population(out) == Catch::Approx(1.0).margin(1e-10));
  }

  SECTION("reinitialize sends the odd component to the polarized state") {
    const DensityMatrix out =
        parity_correction(odd_neel_state(c), ParityStrategy::Reinitialize);
    REQUIRE(std::abs(out.rho.trace() - Complex(1.0)) < 1e-12);
    const DensityMatrix spin = partial_trace_ancilla(out);
    REQUIRE(spin.rho(0, 0).real() == Catch::Approx(1.0).margin(1e-12));  // |uuuu>
  }

  SECTION("invalid site") {
    REQUIRE_THROWS_AS(parity_correction(all_up_state(c), ParityStrategy::FlipZ, 9),
                      std::invalid_argument);
  }
}

TEST_CASE("default sequences") {
  SECTION("N=2 detunings") {
    SystemConfig c = make_chain_config(2, 0.05, 5e-3);
    const Sequence seq = default_sequence(c);
    REQUIRE(seq.pulses.size() == 2);
    REQUIRE(seq.pulses[0].delta == Catch::Approx(-0.9).epsilon(1e-14));
    REQUIRE(seq.pulses[1].delta == Catch::Approx(0.9).epsilon(1e-14));
    for (const auto& p : seq.pulses) {
      REQUIRE(p.gamma * p.t_dissipative == Catch::Approx(20.0));
      REQUIRE(c.couplings[0] * p.t_coherent == Catch::Approx(10.0));
      REQUIRE(p.nbar == 0.0);
    }
  }

  SECTION("N=4 caption detunings") {
    SystemConfig c = make_chain_config(4, 0.05, 5e-3);
    const Sequence seq = default_sequence(c);
    REQUIRE(seq.pulses.size() == 5);
    const double j1 = 0.05, j2 = std::sqrt(2.0) * 0.05;
    REQUIRE(seq.pulses[0].delta == Catch::Approx(-1 + 2 * (j1 + j2)).epsilon(1e-14));
    REQUIRE(seq.pulses[0].delta == Catch::Approx(-0.758578643762690).epsilon(1e-12));
    REQUIRE(seq.pulses[1].delta == Catch::Approx(-1 + 2 * j1).epsilon(1e-14));
    REQUIRE(seq.pulses[2].delta == Catch::Approx(-1 - 2 * (j1 - j2)).epsilon(1e-14));
    REQUIRE(seq.pulses[3].delta == Catch::Approx(-seq.pulses[0].delta).epsilon(1e-14));
    REQUIRE(seq.pulses[4].delta == Catch::Approx(-seq.pulses[1].delta).epsilon(1e-14));

    // Pairwise distinct with the expected minimum spacing.
    const double min_gap = 2 * (std::sqrt(2.0) - 1.0) * j1;
    for (size_t a = 0; a < 5; ++a)
      for (size_t b = a + 1; b < 5; ++b)
        REQUIRE(std::abs(seq.pulses[a].delta - seq.pulses[b].delta) > min_gap - 1e-12);
  }

  SECTION("unsupported N") {
    SystemConfig c;
    c.n_spins = 6;
    c.couplings = {0.05, 0.06, 0.07, 0.06, 0.05};
    c.rabi.assign(6, 5e-3);
    REQUIRE_THROWS_AS(default_sequence(c), std::invalid_argument);
  }
}

TEST_CASE("optimize_pulse_durations") {
  SECTION("flat objective at g = 0 keeps the initial schedule") {
    SystemConfig c = make_chain_config(2, 0.05, 5e-3, 1);
    c.rabi = {0.0, 0.0};
    const Sequence seq = default_sequence(c);
    const OptimizeResult result = optimize_pulse_durations(seq, c);
    REQUIRE(result.loss == Catch::Approx(0.0).margin(1e-12));
    for (size_t j = 0; j < seq.pulses.size(); ++j)
      REQUIRE(result.sequence.pulses[j].t_coherent == seq.pulses[j].t_coherent);
  }

  SECTION("ideal N=2 schedule reaches per-sequence loss at the 1e-6 scale") {
    SystemConfig c = make_chain_config(2, 0.05, 5e-3);
    OptimizeOptions wide;
    wide.span = 0.7;  // the joint leakage zero sits near J1 t = pi
    const OptimizeResult result =
        optimize_pulse_durations(default_sequence(c), c, NoiseConfig{}, wide);
    REQUIRE(result.loss < 5e-6);
  }

  SECTION("objective grows half an off-resonant Rabi period away from the optimum") {
    SystemConfig c = make_chain_config(2, 0.05, 5e-3);
    OptimizeOptions wide;
    wide.span = 0.7;
    const OptimizeResult result =
        optimize_pulse_durations(default_sequence(c), c, NoiseConfig{}, wide);
    // Dominant leakage channel of pulse 1: |psi_T,0> -> |dd,1>, detuned by
    // 2 J1 + omega_t + delta_1 with coupling sqrt(2) g.
    const double detuning = 2 * 0.05 + 1.0 + result.sequence.pulses[0].delta;
    const double coupling = std::sqrt(2.0) * 5e-3;
    const double rabi = std::sqrt(detuning * detuning + 4 * coupling * coupling);
    Sequence shifted = result.sequence;
    shifted.pulses[0].t_coherent += M_PI / rabi;  // half a period of sin^2(rabi t / 2)
    PulseMapBuilder builder(c, NoiseConfig{});
    const double shifted_loss = sequence_target_loss(shifted, builder);
    REQUIRE(shifted_loss > 100 * std::max(result.loss, 1e-8));
  }
}

TEST_CASE("run_iterations on the N=2 chain") {
  SystemConfig c = make_chain_config(2, 0.05, 5e-3);
  OptimizeOptions wide;
  wide.span = 0.7;
  const Sequence seq =
      optimize_pulse_durations(default_sequence(c), c, NoiseConfig{}, wide).sequence;
  PulseMapBuilder builder(c, NoiseConfig{});

  SECTION("the target is (numerically) stationary") {
    const FidelityTrace trace =
        run_iterations(target_full_state(c), seq, builder, RunOptions{20, 1e-10, false});
    for (const auto& rec : trace.records) REQUIRE(rec.fidelity >= 1.0 - 1e-5);
  }

  SECTION("pumping from |uu> converges to the target") {
    const FidelityTrace trace =
        run_iterations(all_up_state(c), seq, builder, RunOptions{200, 1e-12, false});
    REQUIRE(trace.asymptotic_fidelity > 1.0 - 1e-5);
    REQUIRE(trace.converged);
  }

  SECTION("flip_z keeps the even-parity population at 1 after every iteration") {
    const FidelityTrace trace = run_iterations(maximally_mixed_state(c), seq, builder,
                                               RunOptions{30, 1e-12, false});
    for (size_t l = 1; l < trace.records.size(); ++l)
      REQUIRE(trace.records[l].even_parity_population == Catch::Approx(1.0).margin(1e-9));
  }

  SECTION("asymptote is independent of the initial state") {
    std::mt19937_64 rng(91);
    std::vector<double> asymptotes;
    for (int trial = 0; trial < 3; ++trial) {
      const DensityMatrix rho0{c.shape(), st::random_density(c.shape().total_dim(), rng)};
      asymptotes.push_back(
          run_iterations(rho0, seq, builder, RunOptions{400, 1e-12, false})
              .asymptotic_fidelity);
    }
    const auto [lo, hi] = std::minmax_element(asymptotes.begin(), asymptotes.end());
    REQUIRE(*hi - *lo < 1e-6);
  }

  SECTION("without parity correction, inhomogeneous drives populate the odd sector") {
    SystemConfig skew = c;
    skew.rabi = {0.0045, 0.0055};
    Sequence no_parity = optimize_pulse_durations(default_sequence(skew), skew).sequence;
    no_parity.parity_strategy = ParityStrategy::Off;
    PulseMapBuilder skew_builder(skew, NoiseConfig{});
    const FidelityTrace trace = run_iterations(maximally_mixed_state(skew), no_parity,
                                               skew_builder, RunOptions{300, 1e-11, false});
    REQUIRE(trace.records.back().even_parity_population < 0.99);
    REQUIRE(trace.asymptotic_fidelity < 0.99);
  }
}

TEST_CASE("run_iterations argument validation") {
  SystemConfig c = make_chain_config(2, 0.05, 5e-3, 1);
  PulseMapBuilder builder(c, NoiseConfig{});
  Sequence empty;
  REQUIRE_THROWS_AS(
      run_iterations(all_up_state(c), empty, builder, RunOptions{10, 1e-10, false}),
      std::invalid_argument);
  const Sequence seq = default_sequence(c);
  REQUIRE_THROWS_AS(
      run_iterations(all_up_state(c), seq, builder, RunOptions{0, 1e-10, false}),
      std::invalid_argument);
}
