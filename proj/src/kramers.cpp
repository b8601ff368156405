#include "cle/kramers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "cle/errors.hpp"
#include "cle/field_io.hpp"

namespace cle {

std::string to_string(KernelNormalization k) { return k == KernelNormalization::exact ? "exact" : "det_power"; }

KernelNormalization kernel_normalization_from_string(const std::string& s) {
  if (s == "exact") return KernelNormalization::exact;
  if (s == "det_power") return KernelNormalization::det_power;
  throw ConfigError("unknown kernel normalization '" + s + "' (expected exact or det_power)");
}

GaussianKernel make_kernel(double mass, const Eigen::MatrixXd& D, KernelNormalization normalization) {
  if (!(mass > 0.0) || !std::isfinite(mass)) throw ConfigError("kernel mass must be positive");
  if (D.rows() == 0 || D.rows() != D.cols() || D.rows() > 3) throw ConfigError("kernel D must be square, 1x1 to 3x3");
  if (!D.allFinite() || (D - D.transpose()).cwiseAbs().maxCoeff() > 1e-14 * D.cwiseAbs().maxCoeff()) {
    throw ConfigError("kernel D must be symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(D);
  if (!(es.eigenvalues().minCoeff() > 0.0)) throw ConfigError("kernel D is singular or not positive definite");
  GaussianKernel k;
  k.mass = mass;
  k.D = D;
  k.D_inv = D.inverse();
  k.normalization = normalization;
  const double n = static_cast<double>(D.rows());
  const double det = D.determinant();
  if (normalization == KernelNormalization::exact) {
    k.prefactor = 1.0 / (std::pow(2.0 * std::numbers::pi * mass, 0.5 * n) * std::sqrt(det));
  } else {
    k.prefactor = std::pow(std::sqrt(2.0 * std::numbers::pi * mass * det), -n);
  }
  return k;
}

double kernel_value(const GaussianKernel& kernel, std::span<const double> p) {
  const auto n = static_cast<Eigen::Index>(kernel.dimension());
  if (static_cast<Eigen::Index>(p.size()) != n) throw ConfigError("momentum has the wrong dimension");
  const Eigen::Map<const Eigen::VectorXd> v(p.data(), n);
  return kernel.prefactor * std::exp(-v.dot(kernel.D_inv * v) / (2.0 * kernel.mass));
}

GridSpec momentum_grid(const GaussianKernel& kernel, std::size_t points, double k) {
  if (!(k > 0.0)) throw ConfigError("momentum box factor must be positive");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(kernel.D);
  const double half = k * std::sqrt(kernel.mass * es.eigenvalues().maxCoeff());
  std::vector<Axis> axes(kernel.dimension(), Axis{-half, half, points});
  return GridSpec(axes, Centering::node);
}

double kernel_integral(const GaussianKernel& kernel, const GridSpec& grid) {
  if (grid.centering() != Centering::node || grid.dimension() != kernel.dimension()) {
    throw GridMismatchError("kernel integral needs a node grid of the kernel's dimension");
  }
  std::vector<double> p(grid.dimension());
  double s = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    grid.point(i, p.data());
    s += grid.weight(i) * kernel_value(kernel, p);
  }
  return s;
}

namespace {

void require_momentum_grid(const GaussianKernel& kernel, const GridSpec& grid) {
  if (grid.centering() != Centering::node || grid.dimension() != kernel.dimension()) {
    throw GridMismatchError("identity checks need a node grid of the kernel's dimension");
  }
  for (const auto& ax : grid.axes()) {
    if (ax.count < 3) throw ConfigError("identity checks need at least 3 points per axis");
  }
}

double points_per_sd(const GaussianKernel& kernel, const GridSpec& grid) {
  double r = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < grid.dimension(); ++a) {
    const auto ai = static_cast<Eigen::Index>(a);
    r = std::min(r, std::sqrt(kernel.mass * kernel.D(ai, ai)) / grid.spacing(a));
  }
  return r;
}

std::vector<double> sample_kernel(const GaussianKernel& kernel, const GridSpec& grid) {
  std::vector<double> k(grid.size());
  std::vector<double> p(grid.dimension());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    grid.point(i, p.data());
    k[i] = kernel_value(kernel, p);
  }
  return k;
}

// Central first difference along axis a at interior node x.
double d1(const GridSpec& g, const std::vector<double>& f, std::size_t x, std::size_t a) {
  const std::size_t s = g.stride(a);
  return (f[x + s] - f[x - s]) / (2.0 * g.spacing(a));
}


}  // namespace

IdentityDefect l1_annihilation_defect(const GaussianKernel& kernel, const GridSpec& grid) {
  require_momentum_grid(kernel, grid);
  const std::size_t n = grid.dimension();
  const std::vector<double> k = sample_kernel(kernel, grid);
  IdentityDefect out;
  out.field = ScalarFieldGrid(grid);
  out.points_per_sd = points_per_sd(kernel, grid);
  out.under_resolved = out.points_per_sd < 8.0;
  const double peak = kernel.prefactor;
  std::vector<double> p(n);
  for (std::size_t x = 0; x < grid.size(); ++x) {
    if (grid.on_boundary(x)) continue;
    grid.point(x, p.data());
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double r = p[i] / kernel.mass * k[x];
      for (std::size_t j = 0; j < n; ++j) {
        r += kernel.D(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * d1(grid, k, x, j);
      }
      worst = std::max(worst, std::abs(r));
    }
    out.field.values[x] = worst / peak;
    out.defect = std::max(out.defect, out.field.values[x]);
  }
  return out;
}

IdentityDefect l1_eigencheck(const Eigen::VectorXd& c, const GaussianKernel& kernel, const GridSpec& grid) {
  require_momentum_grid(kernel, grid);
  const std::size_t n = grid.dimension();
  if (static_cast<std::size_t>(c.size()) != n) throw ConfigError("coefficient vector has the wrong dimension");
  if (c.cwiseAbs().maxCoeff() == 0.0) throw ConfigError("coefficient vector must be nonzero");
  const double m = kernel.mass;
  std::vector<double> psi = sample_kernel(kernel, grid);
  std::vector<double> p(n);
  double peak = 0.0;
  for (std::size_t x = 0; x < grid.size(); ++x) {
    grid.point(x, p.data());
    double pc = 0.0;
    for (std::size_t i = 0; i < n; ++i) pc += p[i] * c(static_cast<Eigen::Index>(i));
    psi[x] *= pc;
    peak = std::max(peak, std::abs(psi[x]));
  }
  IdentityDefect out;
  out.field = ScalarFieldGrid(grid);
  out.points_per_sd = points_per_sd(kernel, grid);
  out.under_resolved = out.points_per_sd < 8.0;
  const double scale = peak / m;
  // Divergence form L1 psi = sum_i (F_i(x + h_i/2) - F_i(x - h_i/2)) / h_i with
  // the flux F_i = p_i psi / m + D_ij d_j psi taken at half nodes: psi and p
  // averaged, d_i psi compact, cross derivatives averaged central differences.
  std::vector<double> q(n);
  auto flux = [&](std::size_t lo, std::size_t hi, std::size_t i) {
    grid.point(lo, p.data());
    grid.point(hi, q.data());
    const double ph = 0.5 * (p[i] + q[i]);
    double f = ph / m * 0.5 * (psi[lo] + psi[hi]);
    for (std::size_t j = 0; j < n; ++j) {
      const double dij = kernel.D(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (j == i) {
        f += dij * (psi[hi] - psi[lo]) / grid.spacing(i);
      } else {
        f += dij * 0.5 * (d1(grid, psi, lo, j) + d1(grid, psi, hi, j));
      }
    }
    return f;
  };
  for (std::size_t x = 0; x < grid.size(); ++x) {
    if (grid.on_boundary(x)) continue;
    double l1 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t st = grid.stride(i);
      l1 += (flux(x, x + st, i) - flux(x - st, x, i)) / grid.spacing(i);
    }
    out.field.values[x] = std::abs(l1 + psi[x] / m) / scale;
    out.defect = std::max(out.defect, out.field.values[x]);
  }
  return out;
}

double refinement_slope(const std::vector<double>& h, const std::vector<double>& error) {
  if (h.size() != error.size() || h.size() < 2) throw ConfigError("refinement slope needs at least two levels");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double k = static_cast<double>(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double x = std::log(h[i]), y = std::log(error[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (k * sxy - sx * sy) / (k * sxx - sx * sx);
}

std::pair<double, double> ensemble_distance(const TrajectoryEnsemble& ensemble, const GridSpec& grid,
                                            const std::vector<double>& reference, std::size_t batches) {
  if (grid.centering() != Centering::cell) throw ConfigError("distance grid must be cell-centred");
  if (grid.dimension() != ensemble.dimension) throw GridMismatchError("distance grid dimension differs from the ensemble");
  if (reference.size() != grid.size()) throw GridMismatchError("reference density does not match the grid");
  const std::size_t B = std::max<std::size_t>(1, std::min(batches, ensemble.n_traj));
  std::vector<std::vector<double>> counts(B, std::vector<double>(grid.size(), 0.0));
  std::vector<double> totals(B, 0.0);
  for (std::size_t t = 0; t < ensemble.n_traj; ++t) {
    const std::size_t b = t * B / ensemble.n_traj;
    for (std::size_t r = 0; r < ensemble.records(); ++r) {
      if (!ensemble.is_valid(t, r)) continue;
      const std::size_t c = grid.locate(ensemble.state(t, r));
      totals[b] += 1.0;
      if (c < grid.size()) counts[b][c] += 1.0;
    }
  }
  std::vector<double> all(grid.size(), 0.0);
  double total = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < grid.size(); ++c) all[c] += counts[b][c];
    total += totals[b];
  }
  if (total == 0.0) throw SimulationError("ensemble has no valid records");
  const double vol = grid.cell_volume();
  auto distance = [&](const std::vector<double>& cnt, double tot) {
    double s = 0.0;
    for (std::size_t c = 0; c < grid.size(); ++c) s += std::abs(cnt[c] / (tot * vol) - reference[c]);
    return s * vol;
  };
  const double d = distance(all, total);
  if (B < 2) return {d, 0.0};
  std::vector<double> loo(B);
  std::vector<double> cnt(grid.size());
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < grid.size(); ++c) cnt[c] = all[c] - counts[b][c];
    loo[b] = distance(cnt, total - totals[b]);
  }
  double mean = 0.0;
  for (double v : loo) mean += v;
  mean /= static_cast<double>(B);
  double ss = 0.0;
  for (double v : loo) ss += (v - mean) * (v - mean);
  return {d, std::sqrt(ss * static_cast<double>(B - 1) / static_cast<double>(B))};
}

ZeroMassReport zero_mass_convergence(const SDESystem& system, const std::vector<double>& masses,
                                     const FPSolution& fp_reference, const MassSweepOptions& options) {
  if (masses.empty()) throw ConfigError("mass list is empty");
  for (std::size_t i = 0; i < masses.size(); ++i) {
    if (!(masses[i] > 0.0)) throw ConfigError("masses must be positive");
    if (i > 0 && !(masses[i] < masses[i - 1])) throw ConfigError("masses must be strictly decreasing");
  }
  if (!options.init) throw ConfigError("mass sweep needs an initial sampler");
  const GridSpec& grid = fp_reference.grid;
  if (grid.dimension() != system.dimension()) throw GridMismatchError("FP reference grid dimension differs from the system");
  ZeroMassReport rep;
  auto note = [&](const std::vector<std::string>& w) {
    for (const auto& s : w) {
      if (std::find(rep.warnings.begin(), rep.warnings.end(), s) == rep.warnings.end()) rep.warnings.push_back(s);
    }
  };
  for (double m : masses) {
    const TrajectoryEnsemble ens = simulate_underdamped(system, options.init, m, options.sim);
    note(ens.warnings);
    const auto [d, se] = ensemble_distance(ens, grid, fp_reference.density, options.batches);
    MassRow row{m, d, se, true};
    if (!rep.rows.empty()) {
      const MassRow& prev = rep.rows.back();
      row.pass = d <= prev.distance + std::max(se, prev.standard_error);
    }
    rep.monotone = rep.monotone && row.pass;
    rep.rows.push_back(row);
  }
  if (options.overdamped_reference) {
    const TrajectoryEnsemble ens = simulate_overdamped(system, options.init, options.sim);
    note(ens.warnings);
    const auto [d, se] = ensemble_distance(ens, grid, fp_reference.density, options.batches);
    rep.overdamped_distance = d;
    rep.overdamped_se = se;
    rep.terminal_within_reference = rep.rows.back().distance <= 2.0 * d;
  }
  return rep;
}

MomentumCheck momentum_marginal_check(const TrajectoryEnsemble& ensemble, double mass, const Eigen::MatrixXd& D,
                                      double tolerance) {
  MomentumCheck out;
  const auto n = static_cast<Eigen::Index>(ensemble.dimension);
  out.expected = mass * D;
  if (!ensemble.has_momentum() || D.rows() != n || D.cols() != n || D.cwiseAbs().maxCoeff() == 0.0) {
    out.applicable = false;
    return out;
  }
  if (ensemble.valid_records() < 2) throw SimulationError("momentum check needs at least two samples");
  const EnsembleMoments mo = ensemble_moments(ensemble, true);
  out.samples = mo.samples;
  out.mean = mo.mean;
  out.mean_se = mo.mean_se;
  out.covariance = mo.covariance;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::isfinite(mo.mean_se(i)) && std::abs(mo.mean(i)) > 3.0 * mo.mean_se(i)) out.mean_ok = false;
  }
  const double scale = out.expected.diagonal().cwiseAbs().maxCoeff();
  out.max_relative_deviation = (out.covariance - out.expected).cwiseAbs().maxCoeff() / scale;
  out.covariance_ok = out.max_relative_deviation <= tolerance;
  return out;
}

std::string mass_table_csv(const ZeroMassReport& report) {
  std::string s = "mass,distance,standard_error,pass\n";
  for (const auto& r : report.rows) {
    s += format_double(r.mass) + "," + format_double(r.distance) + "," + format_double(r.standard_error) + "," +
         (r.pass ? "true" : "false") + "\n";
  }
  return s;
}

}  // namespace cle
