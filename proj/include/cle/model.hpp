#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace cle {

/// Coordinate chart of an SDE system. `log_naive` substitutes q = ln x with
/// dq = dx / x and no correction term; `log_ito` adds the Ito correction
/// -D_ii / x_i^2 to the drift.
enum class Chart { concentration, log_naive, log_ito };

std::string to_string(Chart c);
Chart chart_from_string(const std::string& s);

struct Reaction {
  std::vector<int> stoichiometry;  ///< net change per species
  double rate = 0.0;               ///< mass-action rate constant
  std::vector<int> orders;         ///< reactant order per species

  bool operator==(const Reaction&) const = default;
};

/// Species, mass-action reactions and the system size. Immutable; the
/// constructor validates and throws ConfigError.
class ReactionNetwork {
 public:
  ReactionNetwork(std::vector<std::string> species, std::vector<Reaction> reactions, double volume);

  std::size_t species_count() const noexcept { return species_.size(); }
  std::size_t reaction_count() const noexcept { return reactions_.size(); }
  const std::vector<std::string>& species() const noexcept { return species_; }
  const std::vector<Reaction>& reactions() const noexcept { return reactions_; }
  double volume() const noexcept { return volume_; }

  /// a_r(x) = k_r prod_s x_s^order_sr. May be negative off the positive orthant.
  double propensity(std::size_t r, std::span<const double> x) const;

  bool operator==(const ReactionNetwork&) const = default;

 private:
  std::vector<std::string> species_;
  std::vector<Reaction> reactions_;
  double volume_;
};

/// The two-species chain  -> A -> B ->  with rates k0 (influx), k1, k2.
ReactionNetwork chain_network(double k0, double k1, double k2, double volume);

/// drift(state, out[n])
using DriftFn = std::function<void(std::span<const double>, std::span<double>)>;
/// noise(state, out[n*m] row-major); returns true if a negative propensity
/// was clamped to zero under the square root.
using NoiseFn = std::function<bool(std::span<const double>, std::span<double>)>;
using DomainFn = std::function<bool(std::span<const double>)>;
using ClampFn = std::function<void(std::span<double>)>;

/// dq = w(q) dt + h(q) dW with D = h h^T / 2. Immutable after construction;
/// all members are const and safe to call concurrently.
class SDESystem {
 public:
  SDESystem(std::size_t n, std::size_t m, DriftFn drift, NoiseFn noise,
            Chart chart = Chart::concentration, DomainFn domain = {}, ClampFn clamp = {});

  std::size_t dimension() const noexcept { return n_; }
  std::size_t channels() const noexcept { return m_; }
  Chart chart() const noexcept { return chart_; }

  // Unchecked fast paths used by the integrators.
  void drift(std::span<const double> q, std::span<double> out) const { drift_(q, out); }
  bool noise(std::span<const double> q, std::span<double> out) const { return noise_(q, out); }
  /// D = h h^T / 2 written row-major into out[n*n].
  bool diffusion(std::span<const double> q, std::span<double> out) const;

  bool in_domain(std::span<const double> q) const;
  /// Projects a state back into the domain (no-op when no clamp was supplied).
  void clamp(std::span<double> q) const;
  bool has_clamp() const noexcept { return static_cast<bool>(clamp_); }

  // Checked evaluations: throw DomainError outside the chart domain.
  Eigen::VectorXd drift_at(const Eigen::VectorXd& q) const;
  Eigen::MatrixXd noise_at(const Eigen::VectorXd& q) const;
  Eigen::MatrixXd diffusion_at(const Eigen::VectorXd& q) const;

  /// Maps concentrations into this chart (identity or ln); throws DomainError
  /// for x_i <= 0 in a log chart.
  Eigen::VectorXd to_state(const Eigen::VectorXd& x) const;
  /// Inverse of to_state.
  Eigen::VectorXd to_concentration(const Eigen::VectorXd& q) const;

  /// The concentration-chart system a log chart was derived from (null for
  /// concentration charts).
  const std::shared_ptr<const SDESystem>& base() const noexcept { return base_; }

 private:
  friend SDESystem to_chart(const SDESystem&, Chart);

  std::size_t n_;
  std::size_t m_;
  DriftFn drift_;
  NoiseFn noise_;
  Chart chart_;
  DomainFn domain_;
  ClampFn clamp_;
  std::shared_ptr<const SDESystem> base_;
};

/// Chemical Langevin system of a network: n = species, m = reactions,
/// drift_i = sum_r nu_ir a_r(x), noise column r = nu_r sqrt(a_r(x) / volume).
/// The domain is the closed non-negative orthant; clamp projects onto it.
SDESystem build_cle(const ReactionNetwork& network);

/// Re-expresses a concentration-chart system in another chart. Converting a
/// system to its own chart returns a copy; converting a log chart back to
/// `concentration` returns its base.
SDESystem to_chart(const SDESystem& system, Chart chart);

/// drift = offset - K q, constant noise coupling h (n x m). Domain: all finite states.
SDESystem linear_system(const Eigen::MatrixXd& K, const Eigen::VectorXd& offset,
                        const Eigen::MatrixXd& h);

/// max over samples of ( max_{i!=j} |D_ij| + max_i D_ii - min_i D_ii );
/// zero iff D is a multiple of the identity at every sample.
double diffusion_isotropy_defect(const SDESystem& system, const std::vector<Eigen::VectorXd>& states);

/// Central finite-difference Jacobian J_ij = dw_i / dq_j.
Eigen::MatrixXd drift_jacobian(const SDESystem& system, const Eigen::VectorXd& q,
                               double rel_step = 1e-6);

/// Newton iteration on the drift; throws ConvergenceError if it stalls.
Eigen::VectorXd find_fixed_point(const SDESystem& system, const Eigen::VectorXd& guess,
                                 double tol = 1e-14, int max_iter = 100);

}  // namespace cle
