#include <doctest.h>

#include <cmath>

#include "cle/errors.hpp"
#include "cle/rng.hpp"
#include "cle/sde.hpp"

using namespace cle;

namespace {

SDESystem ou(double k = 1.0, double d = 1.0) {
  return linear_system(Eigen::MatrixXd::Constant(1, 1, k), Eigen::VectorXd::Zero(1),
                       Eigen::MatrixXd::Constant(1, 1, std::sqrt(2.0 * d)));
}

}  // namespace

TEST_CASE("philox4x32-10 known-answer vectors") {
  using A4 = std::array<std::uint32_t, 4>;
  CHECK(philox4x32({0, 0, 0, 0}, {0, 0}) == A4{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
        A4{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(philox4x32({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
        A4{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("random stream moments") {
  RandomStream rng(42, 7);
  const int n = 200000;
  double s = 0, s2 = 0, umin = 1;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    s += z;
    s2 += z * z;
    umin = std::min(umin, rng.uniform());
  }
  CHECK(std::abs(s / n) < 4.0 / std::sqrt(n));
  CHECK(std::abs(s2 / n - 1.0) < 4.0 * std::sqrt(2.0 / n));
  CHECK(umin > 0.0);
  RandomStream a(1, 0), b(1, 1);
  CHECK(a.uniform() != b.uniform());
}

TEST_CASE("record schedule") {
  SimConfig c;
  c.dt = 0.1;
  c.steps = 100;
  c.burn_in = 20;
  c.record_stride = 40;
  c.n_traj = 3;
  CHECK(c.records_per_trajectory() == 3);
  const auto ens = simulate_overdamped(ou(), Eigen::VectorXd::Zero(1), c);
  REQUIRE(ens.times.size() == 3);
  CHECK(ens.times[0] == doctest::Approx(2.0));
  CHECK(ens.times[2] == doctest::Approx(10.0));
  c.dt = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("results do not depend on the thread count") {
  SimConfig c;
  c.dt = 0.01;
  c.steps = 200;
  c.n_traj = 37;
  c.record_stride = 50;
  c.seed = 9;
  const auto a = simulate_underdamped(ou(), Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1), 0.5, c);
  c.threads = 4;
  const auto b = simulate_underdamped(ou(), Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1), 0.5, c);
  CHECK(a.states == b.states);
  CHECK(a.momenta == b.momenta);
}

TEST_CASE("overdamped OU stationary variance") {
  SimConfig c;
  c.dt = 0.005;
  c.steps = 3000;
  c.burn_in = 1000;
  c.record_stride = 500;
  c.n_traj = 4000;
  c.seed = 1;
  const auto ens = simulate_overdamped(ou(), Eigen::VectorXd::Zero(1), c);
  const EnsembleMoments m = ensemble_moments(ens);
  // EM bias for this OU: var = 1 / (1 - dt/2)
  const double expected = 1.0 / (1.0 - 0.5 * c.dt);
  CHECK(std::abs(m.covariance(0, 0) - expected) < 4.0 * m.variance_se(0));
  CHECK(std::abs(m.mean(0)) < 4.0 * m.mean_se(0));
}

TEST_CASE("Euler-Maruyama is weakly first order (coupled increments)") {
  // OU from q0 = 1 to T = 1, f(q) = q^2; the reference path uses dt = 6.25e-4
  // and each coarse step sums the reference increments it spans.
  const SDESystem sys = ou(1.0, 0.5);
  const double T = 1.0, dt_ref = 6.25e-4;
  const std::vector<double> dts{0.1, 0.05, 0.025, 0.0125};
  const std::size_t paths = 4000, n_ref = static_cast<std::size_t>(std::lround(T / dt_ref));
  std::vector<double> diff(dts.size(), 0.0);
  std::vector<double> work(2), xi(1);
  for (std::size_t k = 0; k < paths; ++k) {
    RandomStream rng(123, k);
    std::vector<double> z(n_ref);
    for (double& v : z) v = rng.normal();
    std::vector<double> q{1.0};
    for (std::size_t i = 0; i < n_ref; ++i) {
      xi[0] = z[i];
      overdamped_step(sys, q, xi, dt_ref, work);
    }
    const double f_ref = q[0] * q[0];
    for (std::size_t l = 0; l < dts.size(); ++l) {
      const std::size_t r = static_cast<std::size_t>(std::lround(dts[l] / dt_ref));
      std::vector<double> qc{1.0};
      for (std::size_t i = 0; i < n_ref; i += r) {
        double s = 0;
        for (std::size_t j = 0; j < r; ++j) s += z[i + j];
        xi[0] = s / std::sqrt(static_cast<double>(r));
        overdamped_step(sys, qc, xi, dts[l], work);
      }
      diff[l] += qc[0] * qc[0] - f_ref;
    }
  }
  std::vector<double> h, e;
  for (std::size_t l = 0; l < dts.size(); ++l) {
    h.push_back(std::log(dts[l]));
    e.push_back(std::log(std::abs(diff[l] / paths)));
  }
  const double slope = (e.back() - e.front()) / (h.back() - h.front());
  CHECK(slope > 0.8);
  CHECK(slope < 1.3);
}

TEST_CASE("absorbing boundary flags trajectories") {
  const SDESystem sys = build_cle(chain_network(1, 2, 4, 50.0));
  SimConfig c;
  c.dt = 0.05;
  c.steps = 400;
  c.n_traj = 50;
  c.record_stride = 100;
  c.boundary_policy = BoundaryPolicy::absorb_and_flag;
  Eigen::VectorXd q0(2);
  q0 << 0.5, 0.25;
  const auto ens = simulate_overdamped(sys, q0, c);
  std::size_t absorbed = 0;
  for (const auto& f : ens.flags) absorbed += f.absorbed ? 1 : 0;
  CHECK(absorbed > 0);
  CHECK(absorbed == ens.dead_trajectories());
}

TEST_CASE("reject_step keeps the CLE non-negative") {
  const SDESystem sys = build_cle(chain_network(1, 2, 4, 5.0));
  SimConfig c;
  c.dt = 0.05;
  c.steps = 400;
  c.n_traj = 50;
  c.record_stride = 1;
  Eigen::VectorXd q0(2);
  q0 << 0.05, 0.05;
  const auto ens = simulate_overdamped(sys, q0, c);
  std::size_t rejections = 0;
  for (const auto& f : ens.flags) rejections += f.rejections;
  CHECK(rejections > 0);
  for (std::size_t t = 0; t < ens.n_traj; ++t)
    for (std::size_t r = 0; r < ens.records(); ++r)
      if (ens.is_valid(t, r)) {
        CHECK(ens.state(t, r)[0] >= 0.0);
        CHECK(ens.state(t, r)[1] >= 0.0);
      }
}

TEST_CASE("every trajectory blowing up is a simulation error") {
  const SDESystem sys = linear_system(Eigen::MatrixXd::Constant(1, 1, -1e6), Eigen::VectorXd::Zero(1),
                                      Eigen::MatrixXd::Constant(1, 1, 1.0));
  SimConfig c;
  c.dt = 1.0;
  c.steps = 200;
  c.n_traj = 4;
  CHECK_THROWS_AS(simulate_overdamped(sys, Eigen::VectorXd::Ones(1), c), SimulationError);
}

TEST_CASE("stability warnings") {
  CHECK(stability_warnings(ou(), Eigen::VectorXd::Zero(1), 0.01).empty());
  CHECK(stability_warnings(ou(), Eigen::VectorXd::Zero(1), 0.6).size() == 1);
  CHECK(stability_warnings(ou(), Eigen::VectorXd::Zero(1), 0.01, 0.01).size() == 1);
}

TEST_CASE("histogram counts and density") {
  GridSpec g({{0, 1, 4}}, Centering::cell);
  const std::vector<double> samples{0.1, 0.2, 0.6, 0.9, 1.5};
  const Histogram h = histogram(samples, 1, g);
  CHECK(h.total == 5);
  CHECK(h.outside == 1);
  CHECK(h.counts[0] == 2);
  const auto d = h.density();
  CHECK(d[0] == doctest::Approx(2.0 / (5 * 0.25)));
}
