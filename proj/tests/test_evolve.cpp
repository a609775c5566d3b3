#include <catch2/catch_amalgamated.hpp>

#include "spinchain/evolve.hpp"
#include "spinchain/protocol.hpp"
#include "test_helpers.hpp"

using namespace spinchain;
namespace st = spinchain::testing;

namespace {

LindbladGenerator random_generator(int dim, std::mt19937_64& rng, int n_jumps = 2) {
  LindbladGenerator gen{st::random_hermitian(dim, rng), {}};
  std::uniform_real_distribution<double> rate(0.01, 0.4);
  for (int k = 0; k < n_jumps; ++k)
    gen.jumps.push_back({st::random_complex_matrix(dim, dim, rng), rate(rng)});
  return gen;
}

double trace_distance(const Matrix& a, const Matrix& b) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(a - b, Eigen::EigenvaluesOnly);
  return 0.5 * es.eigenvalues().cwiseAbs().sum();
}

}  // namespace

TEST_CASE("liouvillian_matrix realizes the documented vec convention") {
  std::mt19937_64 rng(61);
  for (int trial = 0; trial < 8; ++trial) {
    const int dim = 5;
    const LindbladGenerator gen = random_generator(dim, rng);
    const Matrix rho = st::random_density(dim, rng);
    const Vector lhs = liouvillian_matrix(gen) * vec(rho);
    const Vector rhs = vec(lindblad_rhs(rho, gen));
    REQUIRE((lhs - rhs).cwiseAbs().maxCoeff() < 1e-13);
  }
}

TEST_CASE("propagate") {
  SECTION("zero duration is the identity") {
    std::mt19937_64 rng(62);
    const SpaceShape shape{1, 2};
    const DensityMatrix dm = st::random_density_state(shape, rng);
    LindbladGenerator gen{st::random_hermitian(4, rng), {}};
    REQUIRE((propagate(dm, gen, 0.0).rho - dm.rho).cwiseAbs().maxCoeff() == 0.0);
  }

  SECTION("negative duration throws") {
    const SpaceShape shape{1, 2};
    DensityMatrix dm{shape, Matrix::Identity(4, 4) / 4.0};
    LindbladGenerator gen{Matrix::Zero(4, 4), {}};
    REQUIRE_THROWS_AS(propagate(dm, gen, -1.0), std::invalid_argument);
  }

  SECTION("amplitude damping of |1><1| follows exp(-gamma t)") {
    const SpaceShape shape{1, 2};
    const double gamma = 0.25, t = 4.0;
    LindbladGenerator gen{Matrix::Zero(4, 4), cooling_jumps(gamma, 0.0, shape)};
    Matrix rho = Matrix::Zero(4, 4);
    rho(1, 1) = 1.0;  // |up>|1>
    const DensityMatrix out = propagate({shape, rho}, gen, t);
    REQUIRE(out.rho(1, 1).real() == Catch::Approx(std::exp(-gamma * t)).margin(1e-10));
    REQUIRE(out.rho(0, 0).real() == Catch::Approx(1.0 - std::exp(-gamma * t)).margin(1e-10));
  }

  SECTION("pure Hamiltonian evolution matches the eigendecomposition oracle") {
    std::mt19937_64 rng(63);
    const int dim = 6;
    const Matrix h = st::random_hermitian(dim, rng);
    const Matrix rho = st::random_density(dim, rng);
    const double t = 2.5;
    const DensityMatrix out = propagate({SpaceShape{1, 3}, rho}, {h, {}}, t);

    Eigen::SelfAdjointEigenSolver<Matrix> es(h);
    const Vector phases =
        (-kI * t * es.eigenvalues().cast<Complex>().array()).exp();
    const Matrix u = es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
    REQUIRE((out.rho - u * rho * u.adjoint()).cwiseAbs().maxCoeff() < 1e-9);
  }

  SECTION("semigroup property") {
    std::mt19937_64 rng(64);
    const int dim = 5;
    const LindbladGenerator gen = random_generator(dim, rng);
    const DensityMatrix dm{SpaceShape{1, 5}, st::random_density(dim, rng)};
    const DensityMatrix two_steps = propagate(propagate(dm, gen, 0.7), gen, 1.3);
    const DensityMatrix one_step = propagate(dm, gen, 2.0);
    REQUIRE((two_steps.rho - one_step.rho).cwiseAbs().maxCoeff() < 1e-8);
  }

  SECTION("CPTP contractivity of the trace distance") {
    std::mt19937_64 rng(65);
    const int dim = 5;
    const LindbladGenerator gen = random_generator(dim, rng);
    for (int trial = 0; trial < 5; ++trial) {
      const Matrix a = st::random_density(dim, rng);
      const Matrix b = st::random_density(dim, rng);
      const double before = trace_distance(a, b);
      const SpaceShape shape{1, 5};
      const double after = trace_distance(propagate({shape, a}, gen, 1.2).rho,
                                          propagate({shape, b}, gen, 1.2).rho);
      REQUIRE(after <= before + 1e-9);
    }
  }
}

TEST_CASE("assembled Lindblad superoperators have no growing modes") {
  std::mt19937_64 rng(66);
  for (int trial = 0; trial < 5; ++trial) {
    const LindbladGenerator gen = random_generator(5, rng);
    Eigen::ComplexEigenSolver<Matrix> es(liouvillian_matrix(gen), false);
    REQUIRE(es.eigenvalues().real().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("build_pulse_map") {
  SystemConfig c = make_chain_config(2, 0.05, 5e-3, 2);

  SECTION("zero-duration pulse is the identity superoperator") {
    const PropagatedMap map = build_pulse_map(PulseSpec{-0.9, 0, 0, 0.1, 0}, c, NoiseConfig{});
    REQUIRE((map.superoperator - identity(map.dim * map.dim)).cwiseAbs().maxCoeff() < 1e-14);
  }

  SECTION("damping segment empties the oscillator when g = 0") {
    SystemConfig cg = c;
    cg.rabi = {0.0, 0.0};
    // gamma t = 20
    const PropagatedMap map = build_pulse_map(PulseSpec{-0.9, 5.0, 200.0, 0.1, 0}, cg,
                                              NoiseConfig{});
    std::mt19937_64 rng(67);
    const Vector spin = st::random_pure(4, rng);
    const SpaceShape shape = cg.shape();
    Vector full = Vector::Zero(shape.total_dim());
    for (int s = 0; s < 4; ++s) full(s * shape.n_osc_levels + 1) = spin(s);  // osc level 1
    const DensityMatrix out = map.apply(pure_state(full, shape));
    const Matrix osc = partial_trace_spins(out);
    REQUIRE(osc(0, 0).real() == Catch::Approx(1.0 - std::exp(-20.0)).margin(1e-9));
  }

  SECTION("trace preservation and positivity on random states") {
    const PropagatedMap map =
        build_pulse_map(PulseSpec{-0.9, 200.0, 200.0, 0.1, 0.0}, c, NoiseConfig{});
    std::mt19937_64 rng(68);
    for (int trial = 0; trial < 20; ++trial) {
      const DensityMatrix in = st::random_density_state(c.shape(), rng);
      const DensityMatrix out = map.apply(in);
      REQUIRE(std::abs(out.rho.trace() - Complex(1.0)) < 1e-9);
      REQUIRE(min_eigenvalue((out.rho + out.rho.adjoint()) / 2.0) > -1e-8);
    }
  }

  SECTION("map application agrees with direct RK integration of both segments") {
    NoiseConfig noise;
    noise.gamma_flip = 2e-4;
    noise.gamma_deph = 2e-4;
    SystemConfig small = make_chain_config(2, 0.05, 5e-3, 1);
    const PulseSpec pulse{-0.9, 8.0, 30.0, 0.2, 0.1};
    const PropagatedMap map = build_pulse_map(pulse, small, noise);
    std::mt19937_64 rng(69);
    const DensityMatrix in = st::random_density_state(small.shape(), rng);
    DensityMatrix ref = propagate(in, coherent_generator(pulse.delta, small, noise),
                                  pulse.t_coherent);
    ref = propagate(ref, dissipative_generator(pulse.gamma, pulse.nbar, small, noise),
                    pulse.t_dissipative);
    REQUIRE((map.apply(in).rho - ref.rho).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("PulseMapBuilder caching and symmetry shortcuts") {
  NoiseConfig noise;
  noise.gamma_flip = 3e-4;
  noise.gamma_deph = 1e-4;
  SystemConfig c = make_chain_config(2, 0.05, 5e-3, 1);

  SECTION("mirror-detuning map equals the directly built one") {
    const PulseSpec plus{-0.9, 6.0, 10.0, 0.5, 0.0};
    const PulseSpec minus{0.9, 6.0, 10.0, 0.5, 0.0};
    PulseMapBuilder warm(c, noise);
    warm.map(plus);             // populate the +delta cache
    const auto mirrored = warm.map(minus);  // derived by parity conjugation
    PulseMapBuilder cold(c, noise);
    const auto direct = cold.map(minus);
    REQUIRE((mirrored->superoperator - direct->superoperator).cwiseAbs().maxCoeff() < 1e-12);
  }

  SECTION("apply_pulse equals the composed superoperator") {
    const PulseSpec pulse{-0.9, 12.0, 25.0, 0.4, 0.05};
    PulseMapBuilder builder(c, noise);
    std::mt19937_64 rng(70);
    const DensityMatrix in = st::random_density_state(c.shape(), rng);
    const DensityMatrix via_map = builder.map(pulse)->apply(in);
    const DensityMatrix via_apply = builder.apply_pulse(in, pulse);
    REQUIRE((via_map.rho - via_apply.rho).cwiseAbs().maxCoeff() < 1e-11);
  }
}

TEST_CASE("compare_integrators") {
  SECTION("pure Hamiltonian") {
    std::mt19937_64 rng(71);
    const int dim = 6;
    const DensityMatrix dm{SpaceShape{1, 3}, st::random_density(dim, rng)};
    REQUIRE(compare_integrators(dm, {st::random_hermitian(dim, rng), {}}, 2.0) < 1e-9);
  }

  SECTION("cooling of |1><1| (analytic case)") {
    const SpaceShape shape{1, 2};
    LindbladGenerator gen{Matrix::Zero(4, 4), cooling_jumps(0.3, 0.0, shape)};
    Matrix rho = Matrix::Zero(4, 4);
    rho(1, 1) = 1.0;
    REQUIRE(compare_integrators({shape, rho}, gen, 5.0) < 1e-9);
  }

  SECTION("random generators at t = 5") {
    std::mt19937_64 rng(72);
    for (int trial = 0; trial < 3; ++trial) {
      const int dim = 5;
      const DensityMatrix dm{SpaceShape{1, 5}, st::random_density(dim, rng)};
      REQUIRE(compare_integrators(dm, random_generator(dim, rng), 5.0) < 1e-8);
    }
  }

  SECTION("rejects dimensions too large for the dense exponential") {
    const int dim = 80;
    DensityMatrix dm{SpaceShape{4, 5}, Matrix::Identity(dim, dim) / double(dim)};
    LindbladGenerator gen{Matrix::Zero(dim, dim), {}};
    REQUIRE_THROWS_AS(compare_integrators(dm, gen, 1.0), std::invalid_argument);
  }
}
