#include "cle/model.hpp"

#include <algorithm>
#include <cmath>

#include "cle/errors.hpp"

namespace cle {

std::string to_string(Chart c) {
  switch (c) {
    case Chart::concentration: return "concentration";
    case Chart::log_naive: return "log_naive";
    case Chart::log_ito: return "log_ito";
  }
  return "?";
}

Chart chart_from_string(const std::string& s) {
  if (s == "concentration") return Chart::concentration;
  if (s == "log_naive") return Chart::log_naive;
  if (s == "log_ito") return Chart::log_ito;
  throw ConfigError("unknown chart '" + s + "'");
}

ReactionNetwork::ReactionNetwork(std::vector<std::string> species, std::vector<Reaction> reactions,
                                 double volume)
    : species_(std::move(species)), reactions_(std::move(reactions)), volume_(volume) {
  if (species_.empty()) throw ConfigError("reaction network needs at least one species");
  if (reactions_.empty()) throw ConfigError("reaction network needs at least one reaction");
  if (!(volume_ > 0.0) || !std::isfinite(volume_)) throw ConfigError("volume must be positive");
  for (std::size_t r = 0; r < reactions_.size(); ++r) {
    const Reaction& rx = reactions_[r];
    const std::string tag = "reaction " + std::to_string(r);
    if (rx.stoichiometry.size() != species_.size()) {
      throw ConfigError(tag + ": stoichiometry needs one entry per species");
    }
    if (rx.orders.size() != species_.size()) {
      throw ConfigError(tag + ": orders need one entry per species");
    }
    if (!(rx.rate >= 0.0) || !std::isfinite(rx.rate)) {
      throw ConfigError(tag + ": rate constant must be non-negative");
    }
    if (std::any_of(rx.orders.begin(), rx.orders.end(), [](int o) { return o < 0; })) {
      throw ConfigError(tag + ": reactant orders must be non-negative");
    }
  }
}

double ReactionNetwork::propensity(std::size_t r, std::span<const double> x) const {
  const Reaction& rx = reactions_[r];
  double a = rx.rate;
  for (std::size_t s = 0; s < species_.size(); ++s) {
    for (int k = 0; k < rx.orders[s]; ++k) a *= x[s];
  }
  return a;
}

ReactionNetwork chain_network(double k0, double k1, double k2, double volume) {
  return ReactionNetwork({"A", "B"},
                         {{{1, 0}, k0, {0, 0}}, {{-1, 1}, k1, {1, 0}}, {{0, -1}, k2, {0, 1}}},
                         volume);
}

SDESystem::SDESystem(std::size_t n, std::size_t m, DriftFn drift, NoiseFn noise, Chart chart,
                     DomainFn domain, ClampFn clamp)
    : n_(n),
      m_(m),
      drift_(std::move(drift)),
      noise_(std::move(noise)),
      chart_(chart),
      domain_(std::move(domain)),
      clamp_(std::move(clamp)) {
  if (n_ == 0) throw ConfigError("SDE system needs dimension >= 1");
  if (!drift_ || !noise_) throw ConfigError("SDE system needs drift and noise functions");
}

bool SDESystem::diffusion(std::span<const double> q, std::span<double> out) const {
  std::vector<double> h(n_ * m_);
  const bool clamped = noise_(q, h);
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t j = i; j < n_; ++j) {
      double s = 0.0;
      for (std::size_t r = 0; r < m_; ++r) s += h[i * m_ + r] * h[j * m_ + r];
      out[i * n_ + j] = 0.5 * s;
      out[j * n_ + i] = 0.5 * s;
    }
  }
  return clamped;
}

bool SDESystem::in_domain(std::span<const double> q) const {
  for (double v : q) {
    if (!std::isfinite(v)) return false;
  }
  return domain_ ? domain_(q) : true;
}

void SDESystem::clamp(std::span<double> q) const {
  if (clamp_) clamp_(q);
}

namespace {
std::span<const double> as_span(const Eigen::VectorXd& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }
}  // namespace

Eigen::VectorXd SDESystem::drift_at(const Eigen::VectorXd& q) const {
  if (static_cast<std::size_t>(q.size()) != n_) throw ConfigError("state has wrong dimension");
  if (!in_domain(as_span(q))) throw DomainError("state outside the " + to_string(chart_) + " chart domain");
  Eigen::VectorXd out(n_);
  drift_(as_span(q), {out.data(), n_});
  return out;
}

Eigen::MatrixXd SDESystem::noise_at(const Eigen::VectorXd& q) const {
  if (static_cast<std::size_t>(q.size()) != n_) throw ConfigError("state has wrong dimension");
  if (!in_domain(as_span(q))) throw DomainError("state outside the " + to_string(chart_) + " chart domain");
  std::vector<double> h(n_ * m_);
  noise_(as_span(q), h);
  Eigen::MatrixXd out(n_, m_);
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t r = 0; r < m_; ++r) out(i, r) = h[i * m_ + r];
  return out;
}

Eigen::MatrixXd SDESystem::diffusion_at(const Eigen::VectorXd& q) const {
  if (static_cast<std::size_t>(q.size()) != n_) throw ConfigError("state has wrong dimension");
  if (!in_domain(as_span(q))) throw DomainError("state outside the " + to_string(chart_) + " chart domain");
  Eigen::MatrixXd d(n_, n_);
  std::vector<double> buf(n_ * n_);
  diffusion(as_span(q), buf);
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t j = 0; j < n_; ++j) d(i, j) = buf[i * n_ + j];
  return d;
}

Eigen::VectorXd SDESystem::to_state(const Eigen::VectorXd& x) const {
  if (chart_ == Chart::concentration) return x;
  Eigen::VectorXd q(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (!(x(i) > 0.0)) throw DomainError("log chart requires strictly positive concentrations");
    q(i) = std::log(x(i));
  }
  return q;
}

Eigen::VectorXd SDESystem::to_concentration(const Eigen::VectorXd& q) const {
  if (chart_ == Chart::concentration) return q;
  return q.array().exp().matrix();
}

SDESystem build_cle(const ReactionNetwork& network) {
  const std::size_t n = network.species_count();
  const std::size_t m = network.reaction_count();
  auto net = std::make_shared<const ReactionNetwork>(network);

  DriftFn drift = [net, n, m](std::span<const double> x, std::span<double> out) {
    std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(n), 0.0);
    for (std::size_t r = 0; r < m; ++r) {
      const double a = net->propensity(r, x);
      const auto& nu = net->reactions()[r].stoichiometry;
      for (std::size_t i = 0; i < n; ++i) {
        if (nu[i] != 0) out[i] += nu[i] * a;
      }
    }
  };
  const double inv_volume = 1.0 / network.volume();
  NoiseFn noise = [net, n, m, inv_volume](std::span<const double> x, std::span<double> out) {
    bool clamped = false;
    for (std::size_t r = 0; r < m; ++r) {
      double a = net->propensity(r, x);
      if (a < 0.0) {
        a = 0.0;
        clamped = true;
      }
      const double amp = std::sqrt(a * inv_volume);
      const auto& nu = net->reactions()[r].stoichiometry;
      for (std::size_t i = 0; i < n; ++i) out[i * m + r] = nu[i] * amp;
    }
    return clamped;
  };
  DomainFn domain = [](std::span<const double> x) {
    return std::all_of(x.begin(), x.end(), [](double v) { return v >= 0.0; });
  };
  ClampFn clamp = [](std::span<double> x) {
    for (double& v : x) v = std::max(v, 0.0);
  };
  return SDESystem(n, m, std::move(drift), std::move(noise), Chart::concentration,
                   std::move(domain), std::move(clamp));
}

SDESystem to_chart(const SDESystem& system, Chart chart) {
  if (chart == system.chart()) return system;
  if (system.chart() != Chart::concentration) {
    if (chart == Chart::concentration) return *system.base();
    return to_chart(*system.base(), chart);
  }
  auto base = std::make_shared<const SDESystem>(system);
  const std::size_t n = system.dimension();
  const std::size_t m = system.channels();
  const bool ito = chart == Chart::log_ito;

  // Scratch buffers are per call; the closures stay free of shared mutable state.
  DriftFn drift = [base, n, m, ito](std::span<const double> q, std::span<double> out) {
    std::vector<double> xv(n);
    double* xp = xv.data();
    for (std::size_t i = 0; i < n; ++i) xp[i] = std::exp(q[i]);
    base->drift({xp, n}, out);
    for (std::size_t i = 0; i < n; ++i) out[i] /= xp[i];
    if (ito) {
      std::vector<double> h(n * m);
      base->noise({xp, n}, h);
      for (std::size_t i = 0; i < n; ++i) {
        double dii = 0.0;
        for (std::size_t r = 0; r < m; ++r) dii += h[i * m + r] * h[i * m + r];
        out[i] -= 0.5 * dii / (xp[i] * xp[i]);
      }
    }
  };
  NoiseFn noise = [base, n, m](std::span<const double> q, std::span<double> out) {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = std::exp(q[i]);
    const bool clamped = base->noise(x, out);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t r = 0; r < m; ++r) out[i * m + r] /= x[i];
    return clamped;
  };
  // exp(q) must stay a positive finite concentration.
  DomainFn domain = [](std::span<const double> q) {
    return std::all_of(q.begin(), q.end(), [](double v) {
      const double x = std::exp(v);
      return x > 0.0 && std::isfinite(x);
    });
  };
  SDESystem out(n, m, std::move(drift), std::move(noise), chart, std::move(domain));
  out.base_ = std::move(base);
  return out;
}

SDESystem linear_system(const Eigen::MatrixXd& K, const Eigen::VectorXd& offset,
                        const Eigen::MatrixXd& h) {
  const auto n = static_cast<std::size_t>(K.rows());
  if (K.cols() != K.rows() || offset.size() != K.rows() || h.rows() != K.rows() || h.cols() < 1) {
    throw ConfigError("linear system: inconsistent matrix shapes");
  }
  const auto m = static_cast<std::size_t>(h.cols());
  DriftFn drift = [K, offset, n](std::span<const double> q, std::span<double> out) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = offset(static_cast<Eigen::Index>(i));
      for (std::size_t j = 0; j < n; ++j) s -= K(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * q[j];
      out[i] = s;
    }
  };
  NoiseFn noise = [h, n, m](std::span<const double>, std::span<double> out) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t r = 0; r < m; ++r) out[i * m + r] = h(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(r));
    return false;
  };
  return SDESystem(n, m, std::move(drift), std::move(noise));
}

double diffusion_isotropy_defect(const SDESystem& system, const std::vector<Eigen::VectorXd>& states) {
  if (states.empty()) throw ConfigError("diffusion_isotropy_defect needs at least one state");
  double worst = 0.0;
  for (const auto& q : states) {
    const Eigen::MatrixXd d = system.diffusion_at(q);
    double off = 0.0;
    for (Eigen::Index i = 0; i < d.rows(); ++i)
      for (Eigen::Index j = 0; j < d.cols(); ++j)
        if (i != j) off = std::max(off, std::abs(d(i, j)));
    const Eigen::VectorXd diag = d.diagonal();
    worst = std::max(worst, off + diag.maxCoeff() - diag.minCoeff());
  }
  return worst;
}

Eigen::MatrixXd drift_jacobian(const SDESystem& system, const Eigen::VectorXd& q, double rel_step) {
  const auto n = q.size();
  Eigen::MatrixXd J(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double step = rel_step * std::max(1.0, std::abs(q(j)));
    Eigen::VectorXd plus = q, minus = q;
    plus(j) += step;
    minus(j) -= step;
    J.col(j) = (system.drift_at(plus) - system.drift_at(minus)) / (2.0 * step);
  }
  return J;
}

Eigen::VectorXd find_fixed_point(const SDESystem& system, const Eigen::VectorXd& guess, double tol,
                                 int max_iter) {
  Eigen::VectorXd q = guess;
  double res = system.drift_at(q).norm();
  for (int it = 0; it < max_iter && res > tol; ++it) {
    const Eigen::MatrixXd J = drift_jacobian(system, q);
    q -= J.fullPivLu().solve(system.drift_at(q));
    res = system.drift_at(q).norm();
  }
  if (!(res <= tol)) throw ConvergenceError("fixed point search did not converge", res);
  return q;
}

}  // namespace cle
