#include <doctest.h>

#include <cmath>
#include <random>

#include "cle/errors.hpp"
#include "cle/fokker_planck.hpp"

using namespace cle;

namespace {

FPCoefficients quadratic(const GridSpec& g, const Eigen::MatrixXd& D, double a0 = 0.0) {
  FPCoefficients c(g, D);
  std::vector<double> x(g.dimension());
  for (std::size_t p = 0; p < g.size(); ++p) {
    g.point(p, x.data());
    double r2 = 0;
    for (double v : x) r2 += v * v;
    c.phi.values[p] = 0.5 * r2;
    c.A.components[0][p] = a0;
  }
  return c;
}

double ou_error(std::size_t cells) {
  GridSpec g({{-6, 6, cells}}, Centering::cell);
  const FPSolution s = steady_state(assemble(quadratic(g, Eigen::MatrixXd::Identity(1, 1))));
  return l1_distance(g, s.density, gaussian_cell_averages(g, Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1)));
}

}  // namespace

TEST_CASE("pure diffusion keeps the uniform density") {
  GridSpec g({{0, 1, 16}, {0, 2, 12}}, Centering::cell);
  const FPOperator op = assemble(FPCoefficients(g, Eigen::MatrixXd::Identity(2, 2)));
  const std::vector<double> u(g.size(), 0.5);
  CHECK(stationarity_residual(op, u) < 1e-13);
}

TEST_CASE("columns sum to zero and off-diagonals are non-negative") {
  GridSpec g({{-2, 2, 12}, {-2, 2, 12}}, Centering::cell);
  Eigen::MatrixXd D(2, 2);
  D << 1.0, 0.2, 0.2, 0.6;
  FPCoefficients c(g, D);
  std::mt19937 gen(5);
  std::uniform_real_distribution<double> u(-1, 1);
  double x[2];
  for (std::size_t p = 0; p < g.size(); ++p) {
    g.point(p, x);
    c.phi.values[p] = std::sin(x[0]) * x[1] + 0.1 * u(gen);
    c.A.components[0][p] = 0.3 * u(gen);
    c.A.components[1][p] = 0.3 * u(gen);
  }
  const FPOperator op = assemble(c);
  CHECK(op.positivity_ok);
  Eigen::VectorXd colsum = Eigen::VectorXd::Zero(op.L.cols());
  for (int k = 0; k < op.L.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(op.L, k); it; ++it) {
      colsum(it.col()) += it.value();
      if (it.row() != it.col()) CHECK(it.value() >= 0.0);
    }
  CHECK(colsum.cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("exp(-phi) is a near-null vector with O(h^2) residual") {
  std::vector<double> res;
  for (std::size_t n : {64, 128}) {
    GridSpec g({{-6, 6, n}}, Centering::cell);
    const FPOperator op = assemble(quadratic(g, Eigen::MatrixXd::Identity(1, 1)));
    std::vector<double> rho(g.size());
    double x;
    for (std::size_t p = 0; p < g.size(); ++p) {
      g.point(p, &x);
      rho[p] = std::exp(-0.5 * x * x);
    }
    res.push_back(stationarity_residual(op, rho));
  }
  // exponential fitting recovers the discrete Boltzmann state exactly in 1D
  CHECK(res[1] < 1e-12);
}

TEST_CASE("1D OU steady state converges at second order") {
  const double e1 = ou_error(128), e2 = ou_error(256);
  CHECK(e2 < 1e-3);
  CHECK(std::log2(e1 / e2) > 1.9);
}

TEST_CASE("implicit steps conserve mass and positivity") {
  GridSpec g({{-5, 5, 101}}, Centering::cell);
  const FPOperator op = assemble(FPCoefficients(g, Eigen::MatrixXd::Identity(1, 1)));
  std::vector<double> rho(g.size(), 0.0);
  rho[50] = 1.0 / g.cell_volume();
  FPStepper stepper(op, 0.01);
  double t = 0;
  for (int i = 0; i < 100; ++i) {
    const StepResult r = stepper.step(rho);
    rho = r.rho;
    t += 0.01;
    CHECK_FALSE(r.clipped);
  }
  double mass = 0, var = 0, x;
  for (std::size_t p = 0; p < g.size(); ++p) {
    g.point(p, &x);
    mass += rho[p] * g.cell_volume();
    var += x * x * rho[p] * g.cell_volume();
    CHECK(rho[p] >= 0.0);
  }
  CHECK(std::abs(mass - 1.0) < 1e-12);
  // initial cell variance h^2/12 plus 2 D t
  CHECK(std::abs(var - (2.0 * t + g.cell_volume() * g.cell_volume() / 12.0)) < 0.1 * 2.0 * t);
}

TEST_CASE("a stationary density stays put; a tiny step moves it by O(dt)") {
  GridSpec g({{-6, 6, 64}}, Centering::cell);
  const FPOperator op = assemble(quadratic(g, Eigen::MatrixXd::Identity(1, 1)));
  const FPSolution s = steady_state(op);
  const StepResult r = step(op, s.density, 0.5);
  CHECK(l1_distance(g, r.rho, s.density) < 1e-10);
  std::vector<double> u(g.size(), 1.0 / 12.0);
  const double d1 = l1_distance(g, step(op, u, 1e-4).rho, u);
  const double d2 = l1_distance(g, step(op, u, 5e-5).rho, u);
  CHECK(d1 / d2 == doctest::Approx(2.0).epsilon(0.01));
}

TEST_CASE("tilt form and effective-potential form agree") {
  GridSpec g({{-8, 8, 48}, {-8, 8, 48}}, Centering::cell);
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(2, 2);
  const FPCoefficients tilted = quadratic(g, I, 0.5);
  FPCoefficients folded(g, I);
  Eigen::VectorXd a(2);
  a << 0.5, 0.0;
  folded.phi = effective_potential(tilted.phi, a);
  const FPSolution s1 = steady_state(assemble(tilted));
  const FPSolution s2 = steady_state(assemble(folded));
  CHECK(l1_distance(g, s1.density, s2.density) < 1e-10);
}

TEST_CASE("bordered solve and time marching agree") {
  GridSpec g({{-5, 5, 40}, {-5, 5, 40}}, Centering::cell);
  Eigen::MatrixXd D(2, 2);
  D << 1.0, 0.3, 0.3, 0.8;
  const FPOperator op = assemble(quadratic(g, D, 0.2));
  const FPSolution a = steady_state(op, SteadyMethod::bordered);
  const FPSolution b = steady_state(op, SteadyMethod::time_marching);
  CHECK(a.residual < 1e-10);
  CHECK(b.residual < 1e-10);
  CHECK(std::abs(a.mass - 1.0) < 1e-10);
  CHECK(l1_distance(g, a.density, b.density) < 1e-8);
}

TEST_CASE("time marching cap raises a convergence error") {
  GridSpec g({{-6, 6, 64}}, Centering::cell);
  SteadyOptions o;
  o.max_steps = 2;
  CHECK_THROWS_AS(steady_state(assemble(quadratic(g, Eigen::MatrixXd::Identity(1, 1))), SteadyMethod::time_marching, o),
                  ConvergenceError);
}

TEST_CASE("effective potential arithmetic") {
  GridSpec g({{3, 5, 5}, {4, 6, 5}});
  ScalarFieldGrid phi(g);
  Eigen::VectorXd a(2);
  a << 1, 2;
  CHECK(effective_potential(phi, a).values[0] == doctest::Approx(11.0));
  a.setZero();
  phi.values[3] = 1.5;
  CHECK(effective_potential(phi, a).values == phi.values);
}

TEST_CASE("fp_vs_simulation bounds") {
  GridSpec g({{0, 1, 4}}, Centering::cell);
  FPSolution s;
  s.grid = g;
  s.density = {2, 2, 0, 0};
  Histogram h;
  h.grid = g;
  h.counts = {1, 1, 0, 0};
  h.total = 2;
  CHECK(fp_vs_simulation(s, h).distance == doctest::Approx(0.0));
  h.counts = {0, 0, 1, 1};
  const FPComparison c = fp_vs_simulation(s, h);
  CHECK(c.distance == doctest::Approx(2.0));
  CHECK(c.empty_cells.size() == 2);
  Histogram other = h;
  other.grid = GridSpec({{0, 1, 5}}, Centering::cell);
  other.counts.assign(5, 0.0);
  CHECK_THROWS_AS(fp_vs_simulation(s, other), GridMismatchError);
}

TEST_CASE("coefficient validation") {
  GridSpec g({{0, 1, 8}}, Centering::cell);
  CHECK_THROWS_AS(FPCoefficients(GridSpec({{0, 1, 8}}), Eigen::MatrixXd::Identity(1, 1)).validate(), ConfigError);
  CHECK_THROWS_AS(FPCoefficients(g, -Eigen::MatrixXd::Identity(1, 1)).validate(), ConfigError);
}
