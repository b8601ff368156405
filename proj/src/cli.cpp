#include <chrono>
#include <cmath>
#include <iostream>
#include <sstream>

#include "cle/cli.hpp"
#include "cle/errors.hpp"
#include "cle/field_io.hpp"
#include "cle/fokker_planck.hpp"
#include "cle/hodge.hpp"
#include "cle/kramers.hpp"

namespace cle::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

// Validation failure inside a command: outputs are complete, a check failed.
struct ValidationFailed {
  std::string what;
};

class Run {
 public:
  Run(fs::path out, std::string command) : out_(std::move(out)), command_(std::move(command)) {}

  const fs::path& out() const { return out_; }
  fs::path path(const std::string& name) const { return out_ / name; }

  void add(const std::vector<fs::path>& written) {
    for (const auto& p : written) files_.push_back(p.lexically_relative(out_).generic_string());
  }
  void write_text(const std::string& name, const std::string& text) {
    write_file_atomic(path(name), text);
    files_.push_back(name);
  }
  void write_json(const std::string& name, const ordered_json& j) { write_text(name, j.dump(2) + "\n"); }

  void seed(const std::string& stage, std::uint64_t s) { seeds_[stage] = s; }
  void warn(const std::vector<std::string>& w) {
    for (const auto& s : w) warnings_.push_back(s);
  }

  // Runs `f`, records wall time under `name` and returns its result.
  template <class F>
  auto timed(const std::string& name, F&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    auto finish = [&] {
      timings_[name] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };
    if constexpr (std::is_void_v<decltype(f())>) {
      f();
      finish();
    } else {
      auto r = f();
      finish();
      return r;
    }
  }

  void stage(const std::string& name, bool pass, ordered_json metrics) {
    ordered_json s;
    s["name"] = name;
    s["pass"] = pass;
    s["metrics"] = std::move(metrics);
    stages_.push_back(std::move(s));
    all_pass_ = all_pass_ && pass;
  }
  bool all_pass() const { return all_pass_; }

  ordered_json manifest(const std::optional<RunConfig>& config, int exit_code, const std::string& status,
                        const ordered_json& error) {
    ordered_json m;
    m["tool"] = kToolName;
    m["version"] = kToolVersion;
    m["command"] = command_;
    m["status"] = status;
    m["exit_code"] = exit_code;
    m["config"] = config ? to_json(*config) : ordered_json();
    m["seeds"] = seeds_;
    m["stages"] = stages_;
    m["warnings"] = warnings_;
    if (!error.is_null()) m["error"] = error;
    ordered_json files = files_;
    files.push_back("timings.json");
    m["files"] = files;
    m["nondeterministic_files"] = ordered_json::array({"timings.json"});
    return m;
  }

  ordered_json timings() const { return timings_; }

 private:
  fs::path out_;
  std::string command_;
  std::vector<std::string> files_;
  ordered_json seeds_ = ordered_json::object();
  ordered_json stages_ = ordered_json::array();
  ordered_json timings_ = ordered_json::object();
  std::vector<std::string> warnings_;
  bool all_pass_ = true;
};

Eigen::VectorXd to_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Eigen::MatrixXd to_mat(const std::vector<std::vector<double>>& m) {
  Eigen::MatrixXd out(m.size(), m.front().size());
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < m[i].size(); ++j) out(i, j) = m[i][j];
  return out;
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

ordered_json mat_json(const Eigen::MatrixXd& m) {
  ordered_json out = ordered_json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    ordered_json row = ordered_json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    out.push_back(row);
  }
  return out;
}

template <class T>
const T& need(const std::optional<T>& section, const char* name, const std::string& command) {
  if (!section) throw ConfigError("command '" + command + "' needs a '" + name + "' section");
  return *section;
}

// Initial q in concentration coordinates, mapped into the chart; an optional
// per-axis normal spread is drawn from the trajectory's own stream.
InitialSampler make_sampler(const SDESystem& system, const InitialConfig& init) {
  const Eigen::VectorXd q0 = system.to_state(to_vec(init.q));
  const Eigen::VectorXd p0 = init.p.empty() ? Eigen::VectorXd::Zero(q0.size()) : to_vec(init.p);
  const std::vector<double> sd = init.sd;
  return [q0, p0, sd](std::size_t, RandomStream& rng, std::span<double> q, std::span<double> p) {
    for (std::size_t i = 0; i < q.size(); ++i) {
      q[i] = q0(static_cast<Eigen::Index>(i));
      if (!sd.empty() && sd[i] > 0.0) q[i] += sd[i] * rng.normal();
    }
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = p0(static_cast<Eigen::Index>(i));
  };
}

SimConfig stage_sim(SimConfig sim, const RunConfig& cfg, Run& run, const std::string& stage) {
  sim.seed = derive_seed(cfg.seed, stage);
  sim.threads = cfg.threads;
  run.seed(stage, sim.seed);
  return sim;
}

ordered_json moments_json(const EnsembleMoments& m) {
  ordered_json j;
  j["samples"] = m.samples;
  j["batches"] = m.batches;
  j["mean"] = to_std(m.mean);
  j["mean_se"] = to_std(m.mean_se);
  j["covariance"] = mat_json(m.covariance);
  j["variance_se"] = to_std(m.variance_se);
  return j;
}

ordered_json flag_totals(const TrajectoryEnsemble& ens) {
  std::size_t rej = 0, cl = 0, nc = 0, abs = 0, nf = 0;
  for (const auto& f : ens.flags) {
    rej += f.rejections;
    cl += f.clamps;
    nc += f.noise_clamps;
    abs += f.absorbed ? 1 : 0;
    nf += f.nonfinite ? 1 : 0;
  }
  ordered_json j;
  j["trajectories"] = ens.n_traj;
  j["records"] = ens.records();
  j["valid_records"] = ens.valid_records();
  j["dead_trajectories"] = ens.dead_trajectories();
  j["rejections"] = rej;
  j["clamps"] = cl;
  j["noise_clamps"] = nc;
  j["absorbed"] = abs;
  j["nonfinite"] = nf;
  return j;
}

// ---------------------------------------------------------------- FP from model

struct ModelFP {
  FPCoefficients coeffs;
  std::optional<HodgeParts> parts;  // absent in 1D
  VectorFieldGrid solenoidal;
};

// FP coefficients from the drift: phi and A = -harmonic (`harmonic`) or
// -(harmonic + solenoidal) (`full`). The decomposition runs on the nodes that
// coincide with the cell centres. In 1D every field is a gradient and phi is
// the trapezoid integral of -w.
ModelFP model_fp(const SDESystem& system, const GridSpec& cells, const std::string& fp_drift,
                 const HodgeOptions& hopt) {
  ModelFP out;
  const std::size_t n = cells.dimension();
  out.coeffs = FPCoefficients(cells, Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)));
  set_diffusion_from_system(out.coeffs, system);
  if (n == 1) {
    const GridSpec nodes = cells.cell_centres_as_nodes();
    const VectorFieldGrid w = sample_field(system, nodes);
    const double h = cells.spacing(0);
    auto& phi = out.coeffs.phi.values;
    phi[0] = 0.0;
    for (std::size_t i = 1; i < cells.size(); ++i)
      phi[i] = phi[i - 1] - 0.5 * h * (w.components[0][i - 1] + w.components[0][i]);
    return out;
  }
  const VectorFieldGrid w = sample_field(system, cells.cell_centres_as_nodes());
  out.parts = decompose(w, hopt);
  out.solenoidal = solenoidal_part(*out.parts);
  out.coeffs.phi.values = out.parts->phi.values;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < cells.size(); ++p) {
      double a = -out.parts->harmonic.components[i][p];
      if (fp_drift == "full") a -= out.solenoidal.components[i][p];
      out.coeffs.A.components[i][p] = a;
    }
  }
  return out;
}

ordered_json operator_json(const FPOperator& op) {
  ordered_json j;
  j["positivity_ok"] = op.positivity_ok;
  j["min_edge_rate"] = op.min_edge_rate;
  j["max_peclet"] = op.max_peclet;
  j["connected"] = op.connected;
  return j;
}

ordered_json solution_json(const FPSolution& s) {
  ordered_json j;
  j["method"] = to_string(s.method);
  j["residual"] = s.residual;
  j["mass"] = s.mass;
  j["iterations"] = s.iterations;
  j["clipped"] = s.clipped;
  return j;
}

struct HodgeSummary {
  ordered_json metrics;
  bool quality_ok = true;
};

HodgeSummary summarize_hodge(const VectorFieldGrid& field, const HodgeParts& parts, double pure_threshold) {
  const VectorFieldGrid g = gradient_part(parts);
  const VectorFieldGrid s = solenoidal_part(parts);
  const double fn = l2_norm(field);
  const double f2 = std::max(fn * fn, 1e-300);
  const double scale = std::max(fn, 1e-300);
  const ScalarFieldGrid defect = jacobian_symmetry_defect(field);
  double dmax = 0.0, dint = 0.0;
  for (std::size_t p = 0; p < defect.values.size(); ++p) {
    dmax = std::max(dmax, defect.values[p]);
    if (!field.grid.on_boundary(p)) dint = std::max(dint, defect.values[p]);
  }
  const HarmonicConstancy hc = harmonic_constancy_report(parts.harmonic);
  const double gn = l2_norm(g), sn = l2_norm(s), hn = l2_norm(parts.harmonic);
  ordered_json m;
  m["field_norm"] = fn;
  m["gradient_norm"] = gn;
  m["solenoidal_norm"] = sn;
  m["harmonic_norm"] = hn;
  m["reconstruction_error"] = l2_norm(field - reconstruct(parts)) / scale;
  m["residual_norm"] = l2_norm(parts.residual) / scale;
  m["cross_gradient_solenoidal"] = std::abs(inner_product(g, s)) / f2;
  m["cross_gradient_harmonic"] = std::abs(inner_product(g, parts.harmonic)) / f2;
  m["cross_solenoidal_harmonic"] = std::abs(inner_product(s, parts.harmonic)) / f2;
  m["integrability_defect_max"] = dmax;
  m["integrability_defect_interior_max"] = dint;
  m["harmonic_mean"] = hc.mean;
  m["harmonic_constancy_deviation"] = hc.max_deviation;
  m["harmonic_reduction_applicable"] = hc.reduction_applicable;
  m["pure_gradient"] = (sn + hn) <= pure_threshold * scale;
  m["dominant_solenoidal"] = sn > gn && sn > hn;
  const HodgeDiagnostics& d = parts.diagnostics;
  m["phi_iterations"] = d.phi_iterations;
  m["harmonic_div_rms"] = d.harmonic_div_rms;
  m["harmonic_curl_rms"] = d.harmonic_curl_rms;
  m["quality_bound"] = d.quality_bound;
  m["quality_ok"] = d.quality_ok;
  return {m, d.quality_ok};
}

std::vector<fs::path> write_hodge(const fs::path& stem, const VectorFieldGrid& field, const HodgeParts& parts) {
  std::vector<fs::path> all;
  auto add = [&](const std::vector<fs::path>& w) { all.insert(all.end(), w.begin(), w.end()); };
  FieldTable scalars = to_table(parts.phi, "phi");
  for (std::size_t k = 0; k < parts.stream.size(); ++k) {
    scalars.names.push_back(parts.stream.size() == 1 ? "psi" : "psi" + std::to_string(k + 1));
    scalars.columns.push_back(parts.stream[k].values);
  }
  scalars.names.push_back("integrability_defect");
  scalars.columns.push_back(jacobian_symmetry_defect(field).values);
  add(write_field(fs::path(stem.string() + "_scalars"), scalars));
  FieldTable vec;
  vec.grid = field.grid;
  auto push = [&](const VectorFieldGrid& v, const std::string& prefix) {
    for (std::size_t i = 0; i < v.dimension(); ++i) {
      vec.names.push_back(prefix + "_" + std::to_string(i + 1));
      vec.columns.push_back(v.components[i]);
    }
  };
  push(field, "field");
  push(gradient_part(parts), "gradient");
  push(solenoidal_part(parts), "solenoidal");
  push(parts.harmonic, "harmonic");
  push(parts.residual, "residual");
  add(write_field(fs::path(stem.string() + "_vectors"), vec));
  return all;
}

HodgeOptions hodge_options(const std::optional<HodgeConfig>& h) {
  HodgeOptions o;
  if (h) {
    o.poisson.rel_tol = h->rel_tol;
    o.quality_factor = h->quality_factor;
  }
  return o;
}

// Stationary covariance of the linearised system: J S + S J^T + 2 D = 0.
Eigen::MatrixXd lyapunov_covariance(const Eigen::MatrixXd& J, const Eigen::MatrixXd& D) {
  const Eigen::Index n = J.rows();
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n * n, n * n);
  Eigen::VectorXd rhs(n * n);
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = 0; b < n; ++b) {
      rhs(a * n + b) = -2.0 * D(a, b);
      for (Eigen::Index c = 0; c < n; ++c) {
        K(a * n + b, c * n + b) += J(a, c);
        K(a * n + b, a * n + c) += J(b, c);
      }
    }
  }
  const Eigen::VectorXd s = K.fullPivLu().solve(rhs);
  Eigen::MatrixXd S(n, n);
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b < n; ++b) S(a, b) = s(a * n + b);
  return S;
}

// ---------------------------------------------------------------- commands

void cmd_simulate(const RunConfig& cfg, Run& run) {
  const std::string cmd = "simulate";
  const SdeConfig& sde = need(cfg.sde, "sde", cmd);
  const SDESystem system = build_model(need(cfg.model, "model", cmd));
  const SimConfig sim = stage_sim(sde.sim, cfg, run, "simulate");
  const InitialSampler init = make_sampler(system, sde.initial);
  const bool under = sde.mode == "underdamped";
  const TrajectoryEnsemble ens = run.timed("simulate", [&] {
    return under ? simulate_underdamped(system, init, sde.mass, sim) : simulate_overdamped(system, init, sim);
  });
  run.warn(ens.warnings);
  run.add(write_ensemble(run.path("ensemble"), ens));
  ordered_json metrics = flag_totals(ens);
  ordered_json moments;
  moments["position"] = moments_json(ensemble_moments(ens));
  if (under) moments["momentum"] = moments_json(ensemble_moments(ens, true));
  run.write_json("moments.json", moments);
  metrics["mean"] = moments["position"]["mean"];
  metrics["mean_se"] = moments["position"]["mean_se"];
  if (sde.histogram) {
    const Histogram h = histogram(ens, GridSpec(*sde.histogram, Centering::cell));
    run.add(write_histogram(run.path("histogram"), h));
    metrics["out_of_grid_fraction"] = h.out_of_grid_fraction();
  }
  run.stage("simulate", true, metrics);
}

VectorFieldGrid analytic_field(const HodgeConfig& h, const GridSpec& grid) {
  VectorFieldGrid f(grid);
  std::vector<double> x(grid.dimension());
  for (std::size_t p = 0; p < grid.size(); ++p) {
    grid.point(p, x.data());
    for (std::size_t i = 0; i < grid.dimension(); ++i) {
      double v = 0.0;
      if (h.field == "linear_gradient") v = -x[i];
      if (h.field == "constant") v = h.constant[i];
      if (h.field == "rotation") v = i == 0 ? -x[1] : (i == 1 ? x[0] : 0.0);
      f.components[i][p] = v;
    }
  }
  return f;
}

void cmd_decompose(const RunConfig& cfg, Run& run) {
  const HodgeConfig& h = need(cfg.hodge, "hodge", "decompose");
  const GridSpec grid(h.grid, Centering::node);
  const VectorFieldGrid field = h.field == "model"
                                    ? sample_field(build_model(need(cfg.model, "model", "decompose")), grid)
                                    : analytic_field(h, grid);
  const HodgeParts parts = run.timed("decompose", [&] { return decompose(field, hodge_options(cfg.hodge)); });
  const HodgeSummary sum = summarize_hodge(field, parts, h.pure_threshold);
  run.add(write_hodge(run.path("hodge"), field, parts));
  run.write_json("report.json", sum.metrics);
  run.stage("decompose", sum.quality_ok, sum.metrics);
  if (!sum.quality_ok) throw ValidationFailed{"harmonic part failed the divergence/curl quality check"};
}

void cmd_fpsolve(const RunConfig& cfg, Run& run) {
  const FokkerPlanckConfig& f = need(cfg.fokker_planck, "fokker_planck", "fpsolve");
  const GridSpec grid(f.grid, Centering::cell);
  const std::size_t n = grid.dimension();
  const bool needs_model = f.diffusion_from_model || f.potential.type == "from_model";
  std::optional<SDESystem> system;
  if (needs_model) system = build_model(need(cfg.model, "model", "fpsolve"));

  FPCoefficients coeffs;
  std::optional<HodgeParts> parts;
  if (f.potential.type == "from_model") {
    ModelFP mf = run.timed("decompose", [&] { return model_fp(*system, grid, f.fp_drift, hodge_options(cfg.hodge)); });
    coeffs = std::move(mf.coeffs);
    parts = std::move(mf.parts);
    if (!f.diffusion_from_model) {
      for (std::size_t c = 0; c < grid.size(); ++c) coeffs.set_diffusion(c, to_mat(f.diffusion));
    }
  } else {
    const Eigen::MatrixXd M = to_mat(f.potential.matrix);
    const Eigen::VectorXd c0 = to_vec(f.potential.center);
    coeffs = FPCoefficients(grid, f.diffusion_from_model ? Eigen::MatrixXd::Identity(n, n) : to_mat(f.diffusion));
    if (f.diffusion_from_model) set_diffusion_from_system(coeffs, *system);
    Eigen::VectorXd x(n);
    for (std::size_t p = 0; p < grid.size(); ++p) {
      grid.point(p, x.data());
      const Eigen::VectorXd d = x - c0;
      coeffs.phi.values[p] = 0.5 * d.dot(M * d);
    }
  }
  const Eigen::VectorXd a = f.tilt.empty() ? Eigen::VectorXd::Zero(n) : to_vec(f.tilt);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < grid.size(); ++p) coeffs.A.components[i][p] += a(static_cast<Eigen::Index>(i));

  const FPOperator op = run.timed("assemble", [&] { return assemble(coeffs); });
  run.warn(op.warnings);
  SteadyOptions so;
  so.tol = f.tol;
  so.max_steps = f.max_steps;
  const SteadyMethod method = steady_method_from_string(f.method);
  const FPSolution sol = run.timed("steady_state", [&] { return steady_state(op, method, so); });

  ordered_json metrics = solution_json(sol);
  metrics["operator"] = operator_json(op);
  bool pass = sol.residual < f.tol;
  if (f.compare_methods) {
    const SteadyMethod other = method == SteadyMethod::bordered ? SteadyMethod::time_marching : SteadyMethod::bordered;
    const FPSolution alt = run.timed("steady_state_alternate", [&] { return steady_state(op, other, so); });
    const double agree = l1_distance(grid, sol.density, alt.density);
    metrics["alternate"] = solution_json(alt);
    metrics["method_agreement_l1"] = agree;
    pass = pass && agree < 1e-8;
  }
  const ScalarFieldGrid phibar = effective_potential(coeffs.phi, a);
  // Isotropic constant D with a constant tilt: the Boltzmann state is exact.
  if (f.potential.type == "quadratic" && !f.diffusion_from_model) {
    const Eigen::MatrixXd D = to_mat(f.diffusion);
    const double d = D(0, 0);
    if ((D - d * Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff() == 0.0 && d > 0.0) {
      double lo = phibar.values[0];
      for (double v : phibar.values) lo = std::min(lo, v);
      std::vector<double> ref(grid.size());
      double z = 0.0;
      for (std::size_t p = 0; p < grid.size(); ++p) z += (ref[p] = std::exp(-(phibar.values[p] - lo) / d));
      for (double& r : ref) r /= z * grid.cell_volume();
      metrics["discrete_boltzmann_l1"] = l1_distance(grid, sol.density, ref);
    }
  }
  std::vector<std::string> names{"phi"};
  std::vector<std::vector<double>> extra{coeffs.phi.values};
  if (!f.tilt.empty()) {
    names.push_back("phibar");
    extra.push_back(phibar.values);
  }
  run.add(write_solution(run.path("steady_state"), sol, names, extra));
  if (parts) {
    const VectorFieldGrid field = sample_field(*system, grid.cell_centres_as_nodes());
    run.add(write_hodge(run.path("hodge"), field, *parts));
    metrics["hodge_quality_ok"] = parts->diagnostics.quality_ok;
  }
  run.write_json("report.json", metrics);
  run.stage("fpsolve", pass, metrics);
  if (!pass) throw ValidationFailed{"steady-state methods disagree beyond 1e-8 L1"};
}

void identities(const RunConfig& cfg, Run& run) {
  const KramersConfig& k = need(cfg.kramers, "kramers", "validate-limit");
  const IdentityConfig& ic = k.identities;
  const GaussianKernel kernel =
      make_kernel(ic.mass, to_mat(ic.diffusion), kernel_normalization_from_string(ic.normalization));
  const Eigen::VectorXd c = to_vec(ic.c);
  std::vector<double> hs, ann, eig;
  std::ostringstream csv;
  csv << "points,h,annihilation_defect,eigen_defect,points_per_sd,kernel_integral\n";
  bool under = false;
  run.timed("identities", [&] {
    for (std::size_t pts : ic.points) {
      const GridSpec g = momentum_grid(kernel, pts, ic.box_sigmas);
      const IdentityDefect a = l1_annihilation_defect(kernel, g);
      const IdentityDefect e = l1_eigencheck(c, kernel, g);
      hs.push_back(g.spacing(0));
      ann.push_back(a.defect);
      eig.push_back(e.defect);
      under = under || a.under_resolved;
      csv << pts << ',' << format_double(g.spacing(0)) << ',' << format_double(a.defect) << ','
          << format_double(e.defect) << ',' << format_double(a.points_per_sd) << ','
          << format_double(kernel_integral(kernel, g)) << '\n';
    }
  });
  const GridSpec centre = momentum_grid(kernel, ic.centre_points, ic.box_sigmas);
  const IdentityDefect ac = l1_annihilation_defect(kernel, centre);
  const double centre_value = ac.field.values[centre.size() / 2];
  run.write_text("identities.csv", csv.str());
  ordered_json m;
  m["normalization"] = ic.normalization;
  m["points"] = ic.points;
  m["annihilation_defect"] = ann;
  m["eigen_defect"] = eig;
  m["annihilation_slope"] = refinement_slope(hs, ann);
  m["eigen_slope"] = refinement_slope(hs, eig);
  m["centre_annihilation_value"] = centre_value;
  m["under_resolved"] = under;
  const bool pass = ann.front() < ic.defect_threshold && eig.front() < ic.defect_threshold &&
                    m["annihilation_slope"].get<double>() >= ic.min_slope &&
                    m["eigen_slope"].get<double>() >= ic.min_slope;
  run.write_json("identities.json", m);
  run.stage("identities", pass, m);
  if (!pass) throw ValidationFailed{"projection identity defects or slopes out of bounds"};
}

void cmd_validate_limit(const RunConfig& cfg, Run& run, bool identities_only) {
  if (identities_only) return identities(cfg, run);
  const std::string cmd = "validate-limit";
  const KramersConfig& k = need(cfg.kramers, "kramers", cmd);
  const SdeConfig& sde = need(cfg.sde, "sde", cmd);
  if (k.grid.empty()) throw ConfigError("validate-limit needs kramers.grid");
  const SDESystem system = build_model(need(cfg.model, "model", cmd));
  const GridSpec grid(k.grid, Centering::cell);

  const ModelFP mf = run.timed("fp_reference", [&] { return model_fp(system, grid, "harmonic", hodge_options(cfg.hodge)); });
  const FPOperator op = assemble(mf.coeffs);
  run.warn(op.warnings);
  const FPSolution ref = steady_state(op);
  run.add(write_solution(run.path("fp_reference"), ref, {"phi"}, {mf.coeffs.phi.values}));
  ordered_json fpm = solution_json(ref);
  fpm["operator"] = operator_json(op);
  run.stage("fp_reference", true, fpm);

  MassSweepOptions opt;
  opt.sim = stage_sim(sde.sim, cfg, run, "validate-limit/mass-sweep");
  opt.init = make_sampler(system, sde.initial);
  opt.batches = k.batches;
  const ZeroMassReport rep = run.timed("mass_sweep", [&] { return zero_mass_convergence(system, k.masses, ref, opt); });
  run.warn(rep.warnings);
  run.write_text("mass_table.csv", mass_table_csv(rep));
  ordered_json rows = ordered_json::array();
  for (const MassRow& r : rep.rows)
    rows.push_back({{"mass", r.mass}, {"distance", r.distance}, {"standard_error", r.standard_error}, {"pass", r.pass}});
  ordered_json sm;
  sm["rows"] = rows;
  sm["overdamped_distance"] = rep.overdamped_distance;
  sm["overdamped_se"] = rep.overdamped_se;
  sm["monotone"] = rep.monotone;
  sm["terminal_distance"] = rep.rows.back().distance;
  sm["terminal_threshold"] = k.terminal_threshold;
  sm["terminal_within_reference"] = rep.terminal_within_reference;
  sm["effective_samples"] = opt.sim.n_traj * opt.sim.records_per_trajectory();
  const bool sweep_ok = rep.monotone && rep.rows.back().distance < k.terminal_threshold && rep.terminal_within_reference;
  run.stage("mass_sweep", sweep_ok, sm);
  ordered_json report;
  report["mass_sweep"] = sm;

  bool momentum_ok = true;
  if (k.momentum_check) {
    const MomentumCheckConfig& mc = *k.momentum_check;
    const SimConfig sim = stage_sim(mc.sim, cfg, run, "validate-limit/momentum");
    const TrajectoryEnsemble ens =
        run.timed("momentum_check", [&] { return simulate_underdamped(system, opt.init, mc.mass, sim); });
    run.warn(ens.warnings);
    // D at the initial state; exact for constant-noise systems.
    const Eigen::MatrixXd D = system.diffusion_at(system.to_state(to_vec(sde.initial.q)));
    const MomentumCheck chk = momentum_marginal_check(ens, mc.mass, D, mc.tolerance);
    ordered_json mm;
    mm["mass"] = mc.mass;
    mm["applicable"] = chk.applicable;
    mm["samples"] = chk.samples;
    if (chk.applicable) {
      mm["mean"] = to_std(chk.mean);
      mm["mean_se"] = to_std(chk.mean_se);
      mm["covariance"] = mat_json(chk.covariance);
      mm["expected"] = mat_json(chk.expected);
    }
    mm["mean_ok"] = chk.mean_ok;
    mm["max_relative_deviation"] = chk.max_relative_deviation;
    mm["covariance_ok"] = chk.covariance_ok;
    momentum_ok = chk.applicable && chk.mean_ok && chk.covariance_ok;
    run.stage("momentum_check", momentum_ok, mm);
    report["momentum_check"] = mm;
  }
  report["pass"] = sweep_ok && momentum_ok;
  run.write_json("limit_report.json", report);
  if (!(sweep_ok && momentum_ok)) throw ValidationFailed{"zero-mass limit checks failed"};
}

void cmd_pipeline(const RunConfig& cfg, Run& run) {
  const std::string cmd = "pipeline";
  const PipelineConfig& pc = need(cfg.pipeline, "pipeline", cmd);
  const SdeConfig& sde = need(cfg.sde, "sde", cmd);
  if (sde.mode != "overdamped") throw ConfigError("pipeline simulates the overdamped system (sde.mode)");
  const SDESystem system = build_model(need(cfg.model, "model", cmd));
  const std::size_t n = system.dimension();

  // Fixed point and linear-noise covariance set the automatic grid.
  const Eigen::VectorXd q0 = system.to_state(to_vec(sde.initial.q));
  const Eigen::VectorXd xs = find_fixed_point(system, q0);
  const Eigen::MatrixXd S = lyapunov_covariance(drift_jacobian(system, xs), system.diffusion_at(xs));
  std::vector<Axis> axes;
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    if (!(S(ii, ii) > 0.0)) throw DomainError("linear-noise covariance is not positive at the fixed point");
    const double s = std::sqrt(S(ii, ii));
    axes.push_back({xs(ii) - pc.sigmas * s, xs(ii) + pc.sigmas * s, pc.count});
  }
  const GridSpec grid(axes, Centering::cell);
  ordered_json gm;
  gm["fixed_point"] = to_std(xs);
  gm["covariance"] = mat_json(S);
  gm["grid"] = ordered_json::array();
  for (const Axis& a : axes) gm["grid"].push_back(ordered_json::array({a.lower, a.upper, a.count}));
  run.stage("grid", true, gm);

  const SimConfig sim = stage_sim(sde.sim, cfg, run, "pipeline/simulate");
  const TrajectoryEnsemble ens =
      run.timed("simulate", [&] { return simulate_overdamped(system, make_sampler(system, sde.initial), sim); });
  run.warn(ens.warnings);
  if (pc.write_ensemble) run.add(write_ensemble(run.path("ensemble"), ens));
  const EnsembleMoments mo = ensemble_moments(ens);
  bool mean_ok = true;
  std::vector<double> z(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    z[i] = std::abs(mo.mean(ii) - xs(ii)) / mo.mean_se(ii);
    mean_ok = mean_ok && z[i] <= pc.mean_se_bound;
  }
  ordered_json sm = flag_totals(ens);
  sm["moments"] = moments_json(mo);
  sm["mean_deviation_in_se"] = z;
  sm["mean_se_bound"] = pc.mean_se_bound;
  sm["effective_samples"] = mo.samples;
  run.stage("simulate", mean_ok, sm);

  const Histogram hist = histogram(ens, grid);
  run.add(write_histogram(run.path("histogram"), hist));

  const ModelFP mf = run.timed("decompose", [&] { return model_fp(system, grid, pc.fp_drift, hodge_options(cfg.hodge)); });
  bool hodge_ok = true;
  if (mf.parts) {
    const VectorFieldGrid field = sample_field(system, grid.cell_centres_as_nodes());
    const HodgeSummary hs = summarize_hodge(field, *mf.parts, cfg.hodge ? cfg.hodge->pure_threshold : 1e-6);
    run.add(write_hodge(run.path("hodge"), field, *mf.parts));
    hodge_ok = hs.quality_ok;
    run.stage("decompose", hodge_ok, hs.metrics);
  }

  const FPOperator op = run.timed("assemble", [&] { return assemble(mf.coeffs); });
  run.warn(op.warnings);
  const FPSolution sol = run.timed("steady_state", [&] { return steady_state(op); });
  run.add(write_solution(run.path("steady_state"), sol, {"phi"}, {mf.coeffs.phi.values}));
  ordered_json fm = solution_json(sol);
  fm["operator"] = operator_json(op);
  fm["fp_drift"] = pc.fp_drift;
  // Linear model with symmetric K and isotropic constant D: the stationary
  // density is exp(-(q-mu)^T K (q-mu) / (2d)).
  if (cfg.model->type == "linear") {
    const Eigen::MatrixXd K = to_mat(cfg.model->drift_matrix);
    const Eigen::MatrixXd D = system.diffusion_at(xs);
    const double d = D(0, 0);
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    if ((K - K.transpose()).cwiseAbs().maxCoeff() == 0.0 && (D - d * I).cwiseAbs().maxCoeff() <= 1e-14 * d) {
      std::vector<double> ref(grid.size());
      Eigen::VectorXd x(static_cast<Eigen::Index>(n));
      double zsum = 0.0;
      for (std::size_t p = 0; p < grid.size(); ++p) {
        grid.point(p, x.data());
        const Eigen::VectorXd y = x - xs;
        zsum += (ref[p] = std::exp(-0.5 * y.dot(K * y) / d));
      }
      for (double& v : ref) v /= zsum * grid.cell_volume();
      fm["boltzmann_l1"] = l1_distance(grid, sol.density, ref);
    }
  }
  run.stage("fpsolve", true, fm);

  const FPComparison cmp = fp_vs_simulation(sol, hist);
  ordered_json cm;
  cm["distance"] = cmp.distance;
  cm["threshold"] = pc.threshold;
  cm["empty_cells"] = cmp.empty_cells.size();
  cm["empty_cell_threshold"] = cmp.threshold;
  cm["out_of_grid_fraction"] = cmp.out_of_grid_fraction;
  const bool cmp_ok = cmp.distance < pc.threshold;
  run.stage("compare", cmp_ok, cm);

  ordered_json report;
  report["mean_ok"] = mean_ok;
  report["hodge_quality_ok"] = hodge_ok;
  report["distance"] = cmp.distance;
  report["threshold"] = pc.threshold;
  report["pass"] = mean_ok && hodge_ok && cmp_ok;
  run.write_json("pipeline_report.json", report);
  if (!report["pass"].get<bool>()) throw ValidationFailed{"pipeline checks failed"};
}

void check_sections(const RunConfig& cfg, const RunOptions& opt) {
  const std::string& c = opt.command;
  if (c == "simulate") {
    need(cfg.model, "model", c);
    need(cfg.sde, "sde", c);
  } else if (c == "decompose") {
    if (need(cfg.hodge, "hodge", c).field == "model") need(cfg.model, "model", c);
  } else if (c == "fpsolve") {
    const auto& f = need(cfg.fokker_planck, "fokker_planck", c);
    if (f.diffusion_from_model || f.potential.type == "from_model") need(cfg.model, "model", c);
  } else if (c == "validate-limit") {
    const auto& k = need(cfg.kramers, "kramers", c);
    if (!opt.identities) {
      need(cfg.model, "model", c);
      need(cfg.sde, "sde", c);
      if (k.grid.empty()) throw ConfigError("validate-limit needs kramers.grid");
    }
  } else if (c == "pipeline") {
    need(cfg.model, "model", c);
    need(cfg.sde, "sde", c);
    need(cfg.pipeline, "pipeline", c);
  } else {
    throw ConfigError("unknown command '" + c + "'");
  }
}

}  // namespace

RunResult run(const RunOptions& options) {
  RunResult result;
  Run r(options.out, options.command);
  std::optional<RunConfig> cfg;
  std::string status = "ok";
  ordered_json error;
  auto fail = [&](int code, const std::string& type, const std::string& what) {
    result.exit_code = code;
    result.message = what;
    status = type == "validation" ? "validation_failed" : "error";
    error = {{"type", type}, {"message", what}};
  };
  try {
    RunConfig c = load_config(options.config);
    if (options.seed) c.seed = *options.seed;
    if (options.threads) c.threads = *options.threads;
    cfg = c;
    check_sections(c, options);
    fs::create_directories(options.out);
    if (options.dry_run) {
      status = "dry_run";
    } else if (options.command == "simulate") {
      cmd_simulate(c, r);
    } else if (options.command == "decompose") {
      cmd_decompose(c, r);
    } else if (options.command == "fpsolve") {
      cmd_fpsolve(c, r);
    } else if (options.command == "validate-limit") {
      cmd_validate_limit(c, r, options.identities);
    } else {
      cmd_pipeline(c, r);
    }
  } catch (const ValidationFailed& e) {
    fail(kValidationFailed, "validation", e.what);
  } catch (const ConfigError& e) {
    fail(kConfigError, "config", e.what());
  } catch (const GridMismatchError& e) {
    fail(kConfigError, "config", e.what());
  } catch (const ConvergenceError& e) {
    fail(kNonConvergence, "non_convergence", e.what());
    error["residual"] = e.residual();
  } catch (const DomainError& e) {
    fail(kDomainError, "domain", e.what());
  } catch (const SimulationError& e) {
    fail(kSimulationError, "simulation", e.what());
  } catch (const std::exception& e) {
    fail(kOtherError, "other", e.what());
  }
  result.manifest = r.manifest(cfg, result.exit_code, status, error);
  try {
    fs::create_directories(options.out);
    write_file_atomic(r.path("timings.json"), r.timings().dump(2) + "\n");
    write_file_atomic(r.path("manifest.json"), result.manifest.dump(2) + "\n");
  } catch (const std::exception& e) {
    if (result.exit_code == kOk) {
      result.exit_code = kOtherError;
      result.message = std::string("cannot write the manifest: ") + e.what();
    }
  }
  return result;
}

}  // namespace cle::cli
