#include <doctest.h>

#include <cmath>

#include "cle/errors.hpp"
#include "cle/kramers.hpp"

using namespace cle;

TEST_CASE("kernel value and normalisation") {
  const GaussianKernel k = make_kernel(0.01, Eigen::MatrixXd::Identity(1, 1));
  const std::vector<double> p{0.1};
  CHECK(kernel_value(k, p) == doctest::Approx(2.419707).epsilon(1e-6));
  CHECK(kernel_integral(k, momentum_grid(k, 401)) == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("det_power prefactor differs from the exact one in 2D only") {
  Eigen::MatrixXd D(2, 2);
  D << 1.0, 0.2, 0.2, 0.5;
  const GaussianKernel e = make_kernel(0.3, D, KernelNormalization::exact);
  const GaussianKernel p = make_kernel(0.3, D, KernelNormalization::det_power);
  CHECK(kernel_integral(e, momentum_grid(e, 201)) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(std::abs(kernel_integral(p, momentum_grid(p, 201)) - 1.0) > 0.1);
  const GaussianKernel e1 = make_kernel(0.3, Eigen::MatrixXd::Identity(1, 1));
  const GaussianKernel p1 = make_kernel(0.3, Eigen::MatrixXd::Identity(1, 1), KernelNormalization::det_power);
  CHECK(e1.prefactor == doctest::Approx(p1.prefactor));
}

TEST_CASE("kernel validation") {
  CHECK_THROWS_AS(make_kernel(0.0, Eigen::MatrixXd::Identity(1, 1)), ConfigError);
  Eigen::MatrixXd bad(2, 2);
  bad << 1, 2, 0, 1;
  CHECK_THROWS_AS(make_kernel(1.0, bad), ConfigError);
  CHECK_THROWS_AS(make_kernel(1.0, -Eigen::MatrixXd::Identity(1, 1)), ConfigError);
}

TEST_CASE("annihilation identity holds to O(h^2)") {
  const GaussianKernel k = make_kernel(1.0, Eigen::MatrixXd::Identity(1, 1));
  const IdentityDefect a = l1_annihilation_defect(k, momentum_grid(k, 256));
  const IdentityDefect b = l1_annihilation_defect(k, momentum_grid(k, 512));
  CHECK(a.defect < 1e-3);
  CHECK(std::log2(a.defect / b.defect) > 1.9);
  CHECK_FALSE(a.under_resolved);
  const GridSpec odd = momentum_grid(k, 257);
  CHECK(std::abs(l1_annihilation_defect(k, odd).field.values[128]) < 1e-12);
}

TEST_CASE("p K is an eigenfunction with eigenvalue -1/m") {
  for (double m : {1.0, 0.1}) {
    const GaussianKernel k = make_kernel(m, Eigen::MatrixXd::Identity(1, 1));
    const IdentityDefect a = l1_eigencheck(Eigen::VectorXd::Ones(1), k, momentum_grid(k, 256));
    const IdentityDefect b = l1_eigencheck(Eigen::VectorXd::Ones(1), k, momentum_grid(k, 512));
    CHECK(a.defect < 1e-3);
    CHECK(std::log2(a.defect / b.defect) > 1.9);
  }
  const GaussianKernel k = make_kernel(1.0, Eigen::MatrixXd::Identity(1, 1));
  CHECK_THROWS_AS(l1_eigencheck(Eigen::VectorXd::Zero(1), k, momentum_grid(k, 64)), ConfigError);
}

TEST_CASE("2D anisotropic identities") {
  Eigen::MatrixXd D(2, 2);
  D << 1.0, 0.3, 0.3, 0.7;
  const GaussianKernel k = make_kernel(0.5, D);
  Eigen::VectorXd c(2);
  c << 1.0, -0.5;
  CHECK(l1_annihilation_defect(k, momentum_grid(k, 256)).defect < 5e-3);
  CHECK(l1_eigencheck(c, k, momentum_grid(k, 256)).defect < 5e-3);
}

TEST_CASE("coarse grids are flagged") {
  const GaussianKernel k = make_kernel(1.0, Eigen::MatrixXd::Identity(1, 1));
  CHECK(l1_annihilation_defect(k, momentum_grid(k, 32)).under_resolved);
}

TEST_CASE("refinement slope of an exact power law") {
  CHECK(refinement_slope({0.1, 0.05, 0.025}, {3e-2, 7.5e-3, 1.875e-3}) == doctest::Approx(2.0));
}

TEST_CASE("momentum marginal of underdamped OU") {
  const SDESystem sys = linear_system(Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Zero(1),
                                      Eigen::MatrixXd::Constant(1, 1, std::sqrt(2.0)));
  SimConfig c;
  // q starts in equilibrium; p relaxes on the time scale m
  c.dt = 2e-3;
  c.steps = 1200;
  c.burn_in = 400;
  c.record_stride = 100;
  c.n_traj = 3000;
  c.seed = 4;
  const InitialSampler init = [](std::size_t, RandomStream& rng, std::span<double> q, std::span<double> p) {
    q[0] = rng.normal();
    p[0] = 0.0;
  };
  const auto ens = simulate_underdamped(sys, init, 0.2, c);
  const MomentumCheck chk = momentum_marginal_check(ens, 0.2, Eigen::MatrixXd::Identity(1, 1));
  CHECK(chk.applicable);
  CHECK(chk.mean_ok);
  CHECK(chk.covariance_ok);
  const auto over = simulate_overdamped(sys, Eigen::VectorXd::Zero(1), c);
  CHECK_FALSE(momentum_marginal_check(over, 0.2, Eigen::MatrixXd::Identity(1, 1)).applicable);
}

TEST_CASE("mass sweep: one row, validation of the mass list") {
  const SDESystem sys = linear_system(Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Zero(1),
                                      Eigen::MatrixXd::Constant(1, 1, std::sqrt(2.0)));
  GridSpec g({{-6, 6, 32}}, Centering::cell);
  FPSolution ref;
  ref.grid = g;
  ref.density = gaussian_cell_averages(g, Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1));
  MassSweepOptions o;
  o.sim.dt = 5e-3;
  o.sim.steps = 1000;
  o.sim.burn_in = 400;
  o.sim.record_stride = 200;
  o.sim.n_traj = 400;
  o.init = fixed_initial(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1));
  const ZeroMassReport r = zero_mass_convergence(sys, {0.5}, ref, o);
  REQUIRE(r.rows.size() == 1);
  CHECK(r.rows[0].distance < 0.2);
  CHECK(r.overdamped_distance >= 0.0);
  CHECK(mass_table_csv(r).find("mass,distance,standard_error,pass") == 0);
  CHECK_THROWS_AS(zero_mass_convergence(sys, {0.1, 0.5}, ref, o), ConfigError);
  CHECK_THROWS_AS(zero_mass_convergence(sys, {-1.0}, ref, o), ConfigError);
}
