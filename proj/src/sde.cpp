#include "cle/sde.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <thread>

#include "cle/errors.hpp"
#include "cle/field_io.hpp"

namespace cle {

std::string to_string(BoundaryPolicy p) {
  switch (p) {
    case BoundaryPolicy::reject_step: return "reject_step";
    case BoundaryPolicy::clamp: return "clamp";
    case BoundaryPolicy::absorb_and_flag: return "absorb_and_flag";
  }
  return "?";
}

BoundaryPolicy boundary_policy_from_string(const std::string& s) {
  if (s == "reject_step") return BoundaryPolicy::reject_step;
  if (s == "clamp") return BoundaryPolicy::clamp;
  if (s == "absorb_and_flag") return BoundaryPolicy::absorb_and_flag;
  throw ConfigError("unknown boundary policy '" + s + "' (expected reject_step, clamp or absorb_and_flag)");
}

void SimConfig::validate() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("sim.dt must be positive and finite");
  if (steps < 1) throw ConfigError("sim.steps must be >= 1");
  if (n_traj < 1) throw ConfigError("sim.n_traj must be >= 1");
  if (burn_in >= steps) throw ConfigError("sim.burn_in must be smaller than sim.steps");
  if (record_stride < 1) throw ConfigError("sim.record_stride must be >= 1");
  if (!std::isfinite(dt * static_cast<double>(steps))) throw ConfigError("total simulated time is not finite");
}

std::size_t SimConfig::records_per_trajectory() const { return (steps - burn_in) / record_stride + 1; }

std::size_t TrajectoryEnsemble::valid_records() const {
  return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), static_cast<unsigned char>(1)));
}

std::size_t TrajectoryEnsemble::dead_trajectories() const {
  return static_cast<std::size_t>(
      std::count_if(flags.begin(), flags.end(), [](const TrajectoryFlags& f) { return !f.alive(); }));
}

InitialSampler fixed_initial(const Eigen::VectorXd& q0, const Eigen::VectorXd& p0) {
  return [q0, p0](std::size_t, RandomStream&, std::span<double> q, std::span<double> p) {
    for (std::size_t i = 0; i < q.size(); ++i) q[i] = q0(static_cast<Eigen::Index>(i));
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = p0.size() ? p0(static_cast<Eigen::Index>(i)) : 0.0;
  };
}

bool overdamped_step(const SDESystem& system, std::span<double> q, std::span<const double> xi, double dt,
                     std::span<double> work) {
  const std::size_t n = system.dimension(), m = system.channels();
  std::span<double> w = work.subspan(0, n), h = work.subspan(n, n * m);
  system.drift(q, w);
  const bool clamped = system.noise(q, h);
  const double sdt = std::sqrt(dt);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t r = 0; r < m; ++r) s += h[i * m + r] * xi[r];
    q[i] += w[i] * dt + sdt * s;
  }
  return clamped;
}

bool underdamped_step(const SDESystem& system, std::span<double> q, std::span<double> p,
                      std::span<const double> xi, double mass, double dt, std::span<double> work) {
  const std::size_t n = system.dimension(), m = system.channels();
  std::span<double> g = work.subspan(0, n), h = work.subspan(n, n * m);
  system.drift(q, g);
  const bool clamped = system.noise(q, h);
  const double sdt = std::sqrt(dt);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t r = 0; r < m; ++r) s += h[i * m + r] * xi[r];
    const double pi = p[i];
    q[i] += pi / mass * dt;
    p[i] = pi + (-pi / mass + g[i]) * dt + sdt * s;
  }
  return clamped;
}

std::vector<std::string> stability_warnings(const SDESystem& system, const Eigen::VectorXd& q0, double dt,
                                            double mass) {
  std::vector<std::string> out;
  const Eigen::MatrixXd j = drift_jacobian(system, q0);
  const double rho = j.eigenvalues().cwiseAbs().maxCoeff();
  if (!(dt * rho < 0.5)) {
    out.push_back("dt * spectral radius of the drift Jacobian at q0 is " + format_double(dt * rho) +
                  " (>= 0.5); Euler-Maruyama may be unstable");
  }
  if (mass > 0.0 && !(dt < 0.5 * mass)) {
    out.push_back("dt = " + format_double(dt) + " is not below m/2 = " + format_double(0.5 * mass) +
                  "; the momentum damping step is unstable");
  }
  return out;
}

namespace {

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

TrajectoryEnsemble run(const SDESystem& system, const InitialSampler& init, double mass,
                       const SimConfig& config) {
  config.validate();
  const bool under = mass > 0.0;
  const std::size_t n = system.dimension(), m = system.channels();
  const std::size_t records = config.records_per_trajectory();
  const double nan = std::numeric_limits<double>::quiet_NaN();

  TrajectoryEnsemble ens;
  ens.chart = system.chart();
  ens.dimension = n;
  ens.n_traj = config.n_traj;
  ens.mass = under ? mass : 0.0;
  ens.config = config;
  for (std::size_t k = 0; k < records; ++k) {
    ens.times.push_back(static_cast<double>(config.burn_in + k * config.record_stride) * config.dt);
  }
  ens.states.assign(config.n_traj * records * n, nan);
  if (under) ens.momenta.assign(config.n_traj * records * n, nan);
  ens.valid.assign(config.n_traj * records, 0);
  ens.flags.assign(config.n_traj, {});

  {
    // Stability self-check at trajectory 0's initial state.
    RandomStream probe(config.seed, 0);
    std::vector<double> q(n), p(under ? n : 0);
    init(0, probe, q, p);
    if (all_finite(q) && system.in_domain(q)) {
      ens.warnings = stability_warnings(system, Eigen::Map<Eigen::VectorXd>(q.data(), static_cast<Eigen::Index>(n)),
                                        config.dt, under ? mass : 0.0);
    }
  }

  auto simulate_one = [&](std::size_t traj, std::vector<double>& work) {
    RandomStream rng(config.seed, traj);
    std::vector<double> q(n), p(under ? n : 0), qn(n), pn(under ? n : 0), xi(m), ahead(n);
    init(traj, rng, q, p);
    if (!all_finite(q) || !all_finite(p) || !system.in_domain(q)) {
      throw DomainError("initial state of trajectory " + std::to_string(traj) + " is outside the chart domain");
    }
    TrajectoryFlags& flags = ens.flags[traj];
    std::size_t rec = 0;
    for (std::size_t s = 0;; ++s) {
      if (s >= config.burn_in && (s - config.burn_in) % config.record_stride == 0 && rec < records) {
        const std::size_t base = traj * records + rec;
        std::copy(q.begin(), q.end(), ens.states.begin() + static_cast<std::ptrdiff_t>(base * n));
        if (under) std::copy(p.begin(), p.end(), ens.momenta.begin() + static_cast<std::ptrdiff_t>(base * n));
        ens.valid[base] = 1;
        ++rec;
      }
      if (s == config.steps) break;
      const double t_next = static_cast<double>(s + 1) * config.dt;
      bool accepted = false;
      for (std::size_t attempt = 0; !accepted; ++attempt) {
        for (double& x : xi) x = rng.normal();
        qn = q;
        bool clamped;
        if (under) {
          pn = p;
          clamped = underdamped_step(system, qn, pn, xi, mass, config.dt, work);
        } else {
          clamped = overdamped_step(system, qn, xi, config.dt, work);
        }
        if (clamped) ++flags.noise_clamps;
        if (!all_finite(qn) || !all_finite(pn)) {
          flags.nonfinite = true;
          break;
        }
        bool inside = system.in_domain(qn);
        if (under && config.boundary_policy == BoundaryPolicy::reject_step) {
          // The position update does not depend on this step's noise, so a
          // position already outside cannot be fixed by a redraw.
          if (!inside) {
            flags.absorbed = true;
            break;
          }
          for (std::size_t i = 0; i < n; ++i) ahead[i] = qn[i] + pn[i] / mass * config.dt;
          inside = system.in_domain(ahead);
        }
        if (inside) {
          accepted = true;
          break;
        }
        if (config.boundary_policy == BoundaryPolicy::reject_step) {
          ++flags.rejections;
          if (attempt + 1 >= config.max_redraws) {
            flags.absorbed = true;
            break;
          }
        } else if (config.boundary_policy == BoundaryPolicy::clamp) {
          system.clamp(qn);
          ++flags.clamps;
          if (!system.in_domain(qn)) {
            flags.absorbed = true;
            break;
          }
          accepted = true;
        } else {
          flags.absorbed = true;
          break;
        }
      }
      if (!accepted) {
        flags.stopped_at = t_next;
        break;
      }
      q.swap(qn);
      if (under) p.swap(pn);
    }
  };

  std::size_t workers = config.threads ? config.threads : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, config.n_traj);
  std::vector<std::exception_ptr> errors(workers);
  auto chunk = [&](std::size_t w) {
    std::vector<double> work(n + n * m);
    const std::size_t lo = w * config.n_traj / workers, hi = (w + 1) * config.n_traj / workers;
    try {
      for (std::size_t t = lo; t < hi; ++t) simulate_one(t, work);
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  if (workers == 1) {
    chunk(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(chunk, w);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  if (ens.dead_trajectories() == ens.n_traj) {
    throw SimulationError("every trajectory left the domain or became non-finite");
  }
  return ens;
}

}  // namespace

TrajectoryEnsemble simulate_overdamped(const SDESystem& system, const InitialSampler& q0,
                                       const SimConfig& config) {
  return run(system, q0, 0.0, config);
}

TrajectoryEnsemble simulate_overdamped(const SDESystem& system, const Eigen::VectorXd& q0,
                                       const SimConfig& config) {
  if (static_cast<std::size_t>(q0.size()) != system.dimension()) throw ConfigError("q0 has the wrong dimension");
  return run(system, fixed_initial(q0), 0.0, config);
}

TrajectoryEnsemble simulate_underdamped(const SDESystem& system, const InitialSampler& init, double mass,
                                        const SimConfig& config) {
  if (!(mass > 0.0) || !std::isfinite(mass)) throw ConfigError("mass must be positive");
  return run(system, init, mass, config);
}

TrajectoryEnsemble simulate_underdamped(const SDESystem& system, const Eigen::VectorXd& q0,
                                        const Eigen::VectorXd& p0, double mass, const SimConfig& config) {
  if (static_cast<std::size_t>(q0.size()) != system.dimension() ||
      static_cast<std::size_t>(p0.size()) != system.dimension()) {
    throw ConfigError("q0/p0 have the wrong dimension");
  }
  return simulate_underdamped(system, fixed_initial(q0, p0), mass, config);
}

std::vector<double> Histogram::density() const {
  std::vector<double> d(counts.size(), 0.0);
  if (total <= 0.0) return d;
  const double scale = 1.0 / (total * grid.cell_volume());
  for (std::size_t i = 0; i < counts.size(); ++i) d[i] = counts[i] * scale;
  return d;
}

Histogram histogram(std::span<const double> samples, std::size_t dimension, const GridSpec& grid) {
  if (grid.centering() != Centering::cell) throw ConfigError("histograms need a cell-centred grid");
  if (grid.dimension() != dimension) throw GridMismatchError("histogram grid dimension differs from the samples");
  if (samples.empty()) throw SimulationError("histogram of an empty sample set");
  Histogram h;
  h.grid = grid;
  h.counts.assign(grid.size(), 0.0);
  for (std::size_t s = 0; s + dimension <= samples.size(); s += dimension) {
    const std::size_t c = grid.locate(samples.data() + s);
    h.total += 1.0;
    if (c == grid.size()) {
      h.outside += 1.0;
    } else {
      h.counts[c] += 1.0;
    }
  }
  return h;
}

Histogram histogram(const TrajectoryEnsemble& ensemble, const GridSpec& grid, bool use_momentum) {
  if (use_momentum && !ensemble.has_momentum()) throw ConfigError("ensemble carries no momenta");
  std::vector<double> samples;
  samples.reserve(ensemble.valid_records() * ensemble.dimension);
  for (std::size_t t = 0; t < ensemble.n_traj; ++t) {
    for (std::size_t r = 0; r < ensemble.records(); ++r) {
      if (!ensemble.is_valid(t, r)) continue;
      const double* x = use_momentum ? ensemble.momentum(t, r) : ensemble.state(t, r);
      samples.insert(samples.end(), x, x + ensemble.dimension);
    }
  }
  if (samples.empty()) throw SimulationError("ensemble has no valid records to histogram");
  return histogram(samples, ensemble.dimension, grid);
}

EnsembleMoments ensemble_moments(const TrajectoryEnsemble& ensemble, bool use_momentum, std::size_t batches) {
  if (use_momentum && !ensemble.has_momentum()) throw ConfigError("ensemble carries no momenta");
  const auto n = static_cast<Eigen::Index>(ensemble.dimension);
  const std::size_t recs = ensemble.records();
  // Samples in (trajectory, record) order; batching groups trajectories, or
  // records when there is only one trajectory.
  std::vector<Eigen::VectorXd> xs;
  std::vector<std::size_t> unit;
  for (std::size_t t = 0; t < ensemble.n_traj; ++t) {
    for (std::size_t r = 0; r < recs; ++r) {
      if (!ensemble.is_valid(t, r)) continue;
      const double* x = use_momentum ? ensemble.momentum(t, r) : ensemble.state(t, r);
      xs.emplace_back(Eigen::Map<const Eigen::VectorXd>(x, n));
      unit.push_back(ensemble.n_traj > 1 ? t : r);
    }
  }
  if (xs.empty()) throw SimulationError("ensemble has no valid records");
  EnsembleMoments mo;
  mo.samples = xs.size();
  mo.mean = Eigen::VectorXd::Zero(n);
  for (const auto& x : xs) mo.mean += x;
  mo.mean /= static_cast<double>(xs.size());
  mo.covariance = Eigen::MatrixXd::Zero(n, n);
  for (const auto& x : xs) mo.covariance += (x - mo.mean) * (x - mo.mean).transpose();
  if (xs.size() > 1) mo.covariance /= static_cast<double>(xs.size() - 1);

  const std::size_t units = ensemble.n_traj > 1 ? ensemble.n_traj : recs;
  const std::size_t b = std::min(batches, units);
  mo.batches = b;
  mo.mean_se = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::quiet_NaN());
  mo.variance_se = mo.mean_se;
  if (b < 2) return mo;
  std::vector<Eigen::VectorXd> bm(b, Eigen::VectorXd::Zero(n)), bv(b, Eigen::VectorXd::Zero(n));
  std::vector<double> bc(b, 0.0);
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const std::size_t g = std::min(b - 1, unit[k] * b / units);
    bm[g] += xs[k];
    bv[g] += (xs[k] - mo.mean).cwiseAbs2();
    bc[g] += 1.0;
  }
  Eigen::VectorXd sm = Eigen::VectorXd::Zero(n), sv = sm, sm2 = sm, sv2 = sm;
  std::size_t used = 0;
  for (std::size_t g = 0; g < b; ++g) {
    if (bc[g] == 0.0) continue;
    const Eigen::VectorXd mg = bm[g] / bc[g], vg = bv[g] / bc[g];
    sm += mg;
    sm2 += mg.cwiseAbs2();
    sv += vg;
    sv2 += vg.cwiseAbs2();
    ++used;
  }
  if (used < 2) return mo;
  const double u = static_cast<double>(used);
  auto se = [u](const Eigen::VectorXd& s, const Eigen::VectorXd& s2) {
    const Eigen::VectorXd var = ((s2 - s.cwiseAbs2() / u) / (u - 1.0)).cwiseMax(0.0);
    return Eigen::VectorXd((var / u).cwiseSqrt());
  };
  mo.mean_se = se(sm, sm2);
  mo.variance_se = se(sv, sv2);
  return mo;
}

std::vector<std::filesystem::path> write_ensemble(const std::filesystem::path& stem,
                                                  const TrajectoryEnsemble& ensemble) {
  const std::size_t n = ensemble.dimension;
  std::string out = "trajectory,time";
  for (const auto& a : axis_names(n, "q")) out += "," + a;
  if (ensemble.has_momentum()) {
    for (const auto& a : axis_names(n, "p")) out += "," + a;
  }
  out += ",valid\n";
  for (std::size_t t = 0; t < ensemble.n_traj; ++t) {
    for (std::size_t r = 0; r < ensemble.records(); ++r) {
      out += std::to_string(t) + "," + format_double(ensemble.times[r]);
      const double* q = ensemble.state(t, r);
      for (std::size_t i = 0; i < n; ++i) out += "," + format_double(q[i]);
      if (ensemble.has_momentum()) {
        const double* p = ensemble.momentum(t, r);
        for (std::size_t i = 0; i < n; ++i) out += "," + format_double(p[i]);
      }
      out += ensemble.is_valid(t, r) ? ",1\n" : ",0\n";
    }
  }
  std::filesystem::path data = stem;
  data += ".csv";
  write_file_atomic(data, out);

  std::string fl = "trajectory,rejections,clamps,noise_clamps,absorbed,nonfinite,stopped_at\n";
  for (std::size_t t = 0; t < ensemble.n_traj; ++t) {
    const auto& f = ensemble.flags[t];
    fl += std::to_string(t) + "," + std::to_string(f.rejections) + "," + std::to_string(f.clamps) + "," +
          std::to_string(f.noise_clamps) + "," + (f.absorbed ? "1" : "0") + "," + (f.nonfinite ? "1" : "0") +
          "," + format_double(f.stopped_at) + "\n";
  }
  std::filesystem::path flags = stem;
  flags += ".flags.csv";
  write_file_atomic(flags, fl);
  return {data, flags};
}

std::vector<std::filesystem::path> write_histogram(const std::filesystem::path& stem, const Histogram& hist,
                                                   const std::string& axis_prefix) {
  FieldTable t;
  t.grid = hist.grid;
  t.names = {"density", "count"};
  t.columns = {hist.density(), hist.counts};
  return write_field(stem, t, axis_prefix);
}

}  // namespace cle
