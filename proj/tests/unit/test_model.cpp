#include <doctest.h>

#include "cle/errors.hpp"
#include "cle/model.hpp"

using namespace cle;

namespace {
Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}
}  // namespace

TEST_CASE("chain network drift vanishes at k0/k1, k0/k2") {
  const SDESystem sys = build_cle(chain_network(1, 2, 4, 1e4));
  const Eigen::VectorXd w = sys.drift_at(vec({0.5, 0.25}));
  CHECK(std::abs(w(0)) < 1e-15);
  CHECK(std::abs(w(1)) < 1e-15);
  const Eigen::VectorXd xs = find_fixed_point(sys, vec({0.3, 0.6}));
  CHECK(xs(0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(xs(1) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("chain network diffusion is sum nu nu^T a / (2 volume)") {
  const SDESystem sys = build_cle(chain_network(1, 2, 4, 1e4));
  // every propensity equals 1 at the fixed point
  const Eigen::MatrixXd D = sys.diffusion_at(vec({0.5, 0.25}));
  CHECK(D(0, 0) == doctest::Approx(1e-4));
  CHECK(D(1, 1) == doctest::Approx(1e-4));
  CHECK(D(0, 1) == doctest::Approx(-5e-5));
  CHECK(D(1, 0) == doctest::Approx(-5e-5));
}

TEST_CASE("log charts: naive has no correction, ito subtracts D_ii / x_i^2") {
  const SDESystem base = build_cle(chain_network(1, 2, 4, 1e4));
  const SDESystem naive = to_chart(base, Chart::log_naive);
  const SDESystem ito = to_chart(base, Chart::log_ito);
  const Eigen::VectorXd q = vec({std::log(0.5), std::log(0.25)});
  const Eigen::VectorXd wn = naive.drift_at(q);
  const Eigen::VectorXd wi = ito.drift_at(q);
  CHECK(std::abs(wn(0)) < 1e-14);
  CHECK(wi(0) == doctest::Approx(-1e-4 / 0.25));
  CHECK(wi(1) == doctest::Approx(-1e-4 / 0.0625));
  CHECK(to_chart(ito, Chart::concentration).chart() == Chart::concentration);
  CHECK_THROWS_AS(ito.to_state(vec({-1.0, 1.0})), DomainError);
  CHECK(ito.to_concentration(q)(1) == doctest::Approx(0.25));
}

TEST_CASE("linear system: Jacobian is -K, isotropy defect zero for h = sqrt2 I") {
  Eigen::MatrixXd K(2, 2);
  K << 1.0, 0.3, 0.3, 0.8;
  const SDESystem sys = linear_system(K, Eigen::VectorXd::Zero(2), std::sqrt(2.0) * Eigen::MatrixXd::Identity(2, 2));
  const Eigen::MatrixXd J = drift_jacobian(sys, vec({0.2, -0.4}));
  CHECK((J + K).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(diffusion_isotropy_defect(sys, {vec({0, 0}), vec({1, 2})}) < 1e-15);
}

TEST_CASE("network validation") {
  CHECK_THROWS_AS(ReactionNetwork({"A"}, {Reaction{{1, 0}, 1.0, {0}}}, 1.0), ConfigError);
  CHECK_THROWS_AS(ReactionNetwork({"A"}, {Reaction{{1}, 1.0, {0}}}, 0.0), ConfigError);
  CHECK_THROWS_AS(ReactionNetwork({}, {}, 1.0), ConfigError);
}

TEST_CASE("CLE stays in the non-negative orthant") {
  const SDESystem sys = build_cle(chain_network(1, 2, 4, 100));
  CHECK(sys.in_domain(std::vector<double>{0.0, 0.1}));
  CHECK_FALSE(sys.in_domain(std::vector<double>{-1e-3, 0.1}));
  std::vector<double> q{-0.2, 0.3};
  sys.clamp(q);
  CHECK(q[0] == 0.0);
}
