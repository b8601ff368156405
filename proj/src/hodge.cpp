#include "cle/hodge.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "cle/errors.hpp"

namespace cle {

namespace {

void require_node_grid(const GridSpec& g, const char* what) {
  if (g.centering() != Centering::node) throw ConfigError(std::string(what) + " needs a node grid");
}

double interior_rms(const GridSpec& g, const std::vector<double>& v) {
  double s = 0.0;
  std::size_t count = 0;
  for (std::size_t p = 0; p < g.size(); ++p) {
    if (g.on_boundary(p)) continue;
    s += v[p] * v[p];
    ++count;
  }
  return count ? std::sqrt(s / static_cast<double>(count)) : 0.0;
}

double weighted_rms(const VectorFieldGrid& f) {
  double s = 0.0, w = 0.0;
  for (std::size_t p = 0; p < f.grid.size(); ++p) {
    double m2 = 0.0;
    for (const auto& c : f.components) m2 += c[p] * c[p];
    s += f.grid.weight(p) * m2;
    w += f.grid.weight(p);
  }
  return std::sqrt(s / w);
}

// Dense 1D derivative matrix. Central inside; faces are second-order one-sided
// (matching partial_derivative) or, with `sbp`, first-order one-sided. The
// first-order closure satisfies summation by parts against trapezoid weights.
Eigen::MatrixXd derivative_matrix(std::size_t n, double h, bool sbp = false) {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  const double c = 1.0 / (2.0 * h);
  const auto last = static_cast<Eigen::Index>(n) - 1;
  for (Eigen::Index i = 1; i < last; ++i) {
    d(i, i - 1) = -c;
    d(i, i + 1) = c;
  }
  if (sbp) {
    d(0, 0) = -1.0 / h, d(0, 1) = 1.0 / h;
    d(last, last) = 1.0 / h, d(last, last - 1) = -1.0 / h;
    return d;
  }
  d(0, 0) = -3.0 * c, d(0, 1) = 4.0 * c, d(0, 2) = -c;
  d(last, last) = 3.0 * c, d(last, last - 1) = -4.0 * c, d(last, last - 2) = c;
  return d;
}

// Node derivative along one axis with the SBP face closure.
std::vector<double> sbp_partial(const GridSpec& g, const std::vector<double>& v, std::size_t axis) {
  const std::size_t n = g.count(axis), st = g.stride(axis);
  const double h = g.spacing(axis);
  std::vector<double> out(v.size());
  for (std::size_t p = 0; p < g.size(); ++p) {
    const std::size_t i = g.unravel(p)[axis];
    if (i == 0) out[p] = (v[p + st] - v[p]) / h;
    else if (i + 1 == n) out[p] = (v[p] - v[p - st]) / h;
    else out[p] = (v[p + st] - v[p - st]) / (2.0 * h);
  }
  return out;
}

// Solves (D1 S1 + D2 S2) psi = rhs on interior nodes with psi = 0 on the
// boundary. S is the SBP derivative that builds (d2 psi, -d1 psi), D the
// operator of scalar_curl; this is what curl of the solenoidal part applies,
// so the remainder has zero discrete curl at interior nodes. Summation by
// parts then makes the remainder trapezoid-orthogonal to the solenoidal part.
ScalarFieldGrid stream_solve_2d(const ScalarFieldGrid& rhs) {
  const GridSpec& g = rhs.grid;
  const std::size_t n0 = g.count(0), n1 = g.count(1);
  const std::size_t m0 = n0 - 2, m1 = n1 - 2;
  const Eigen::MatrixXd d0 = derivative_matrix(n0, g.spacing(0));
  const Eigen::MatrixXd d1 = derivative_matrix(n1, g.spacing(1));
  const Eigen::MatrixXd a0 = (d0 * derivative_matrix(n0, g.spacing(0), true)).block(1, 1, m0, m0);
  const Eigen::MatrixXd a1 = (d1 * derivative_matrix(n1, g.spacing(1), true)).block(1, 1, m1, m1);

  using Sparse = Eigen::SparseMatrix<double>;
  std::vector<Eigen::Triplet<double>> trip;
  auto k = [&](std::size_t i, std::size_t j) { return static_cast<Eigen::Index>(i * m1 + j); };
  for (std::size_t i = 0; i < m0; ++i) {
    for (std::size_t j = 0; j < m1; ++j) {
      for (std::size_t l = 0; l < m0; ++l) {
        const double v = a0(i, l);
        if (v != 0.0) trip.emplace_back(k(i, j), k(l, j), v);
      }
      for (std::size_t l = 0; l < m1; ++l) {
        const double v = a1(j, l);
        if (v != 0.0) trip.emplace_back(k(i, j), k(i, l), v);
      }
    }
  }
  Sparse a(static_cast<Eigen::Index>(m0 * m1), static_cast<Eigen::Index>(m0 * m1));
  a.setFromTriplets(trip.begin(), trip.end());
  a.makeCompressed();
  Eigen::SparseLU<Sparse> lu;
  lu.compute(a);
  if (lu.info() != Eigen::Success) throw ConvergenceError("stream-function factorisation failed", 1.0);
  Eigen::VectorXd b(a.rows());
  for (std::size_t i = 0; i < m0; ++i) {
    for (std::size_t j = 0; j < m1; ++j) b(k(i, j)) = rhs.values[(i + 1) * n1 + (j + 1)];
  }
  const Eigen::VectorXd x = lu.solve(b);
  if (lu.info() != Eigen::Success || !x.allFinite()) throw ConvergenceError("stream-function solve failed", 1.0);
  const double bn = b.norm();
  const double rel = bn > 0.0 ? (a * x - b).norm() / bn : 0.0;
  if (rel > 1e-10) throw ConvergenceError("stream-function solve residual too large", rel);
  ScalarFieldGrid psi(g);
  for (std::size_t i = 0; i < m0; ++i) {
    for (std::size_t j = 0; j < m1; ++j) psi.values[(i + 1) * n1 + (j + 1)] = x(k(i, j));
  }
  return psi;
}

double max_spacing(const GridSpec& g) {
  double h = 0.0;
  for (std::size_t a = 0; a < g.dimension(); ++a) h = std::max(h, g.spacing(a));
  return h;
}

}  // namespace

std::vector<double> partial_derivative(const GridSpec& grid, const std::vector<double>& values,
                                       std::size_t axis) {
  require_node_grid(grid, "partial_derivative");
  const std::size_t n = grid.count(axis);
  if (n < 3) throw ConfigError("partial_derivative needs at least 3 points along the axis");
  const std::size_t st = grid.stride(axis);
  const double inv2h = 1.0 / (2.0 * grid.spacing(axis));
  std::vector<double> out(values.size());
  for (std::size_t p = 0; p < grid.size(); ++p) {
    const std::size_t i = grid.unravel(p)[axis];
    if (i == 0) {
      out[p] = (-3.0 * values[p] + 4.0 * values[p + st] - values[p + 2 * st]) * inv2h;
    } else if (i + 1 == n) {
      out[p] = (3.0 * values[p] - 4.0 * values[p - st] + values[p - 2 * st]) * inv2h;
    } else {
      out[p] = (values[p + st] - values[p - st]) * inv2h;
    }
  }
  return out;
}

VectorFieldGrid gradient(const ScalarFieldGrid& f) {
  VectorFieldGrid g(f.grid);
  for (std::size_t a = 0; a < f.grid.dimension(); ++a) {
    g.components[a] = partial_derivative(f.grid, f.values, a);
  }
  return g;
}

ScalarFieldGrid divergence(const VectorFieldGrid& v) {
  ScalarFieldGrid d(v.grid);
  for (std::size_t a = 0; a < v.dimension(); ++a) {
    const auto da = partial_derivative(v.grid, v.components[a], a);
    for (std::size_t p = 0; p < d.values.size(); ++p) d.values[p] += da[p];
  }
  return d;
}

ScalarFieldGrid scalar_curl(const VectorFieldGrid& v) {
  if (v.dimension() != 2) throw ConfigError("scalar_curl is defined in 2D only");
  const auto d1v2 = partial_derivative(v.grid, v.components[1], 0);
  const auto d2v1 = partial_derivative(v.grid, v.components[0], 1);
  ScalarFieldGrid c(v.grid);
  for (std::size_t p = 0; p < c.values.size(); ++p) c.values[p] = d1v2[p] - d2v1[p];
  return c;
}

VectorFieldGrid vector_curl(const VectorFieldGrid& v) {
  if (v.dimension() != 3) throw ConfigError("vector_curl is defined in 3D only");
  const auto& g = v.grid;
  auto d = [&](std::size_t comp, std::size_t axis) { return partial_derivative(g, v.components[comp], axis); };
  const auto d1v2 = d(1, 0), d1v3 = d(2, 0), d2v1 = d(0, 1), d2v3 = d(2, 1), d3v1 = d(0, 2), d3v2 = d(1, 2);
  VectorFieldGrid c(g);
  for (std::size_t p = 0; p < g.size(); ++p) {
    c.components[0][p] = d2v3[p] - d3v2[p];
    c.components[1][p] = d3v1[p] - d1v3[p];
    c.components[2][p] = d1v2[p] - d2v1[p];
  }
  return c;
}

VectorFieldGrid sample_field(const SDESystem& system, const GridSpec& grid) {
  if (system.dimension() != grid.dimension()) {
    throw ConfigError("sample_field: system and grid dimensions differ");
  }
  const std::size_t n = grid.dimension();
  VectorFieldGrid f(grid);
  std::vector<double> x(n), w(n);
  for (std::size_t p = 0; p < grid.size(); ++p) {
    grid.point(p, x.data());
    if (!system.in_domain(x)) {
      throw DomainError("sample_field: grid point " + std::to_string(p) + " lies outside the " +
                        to_string(system.chart()) + " chart domain");
    }
    system.drift(x, w);
    for (std::size_t i = 0; i < n; ++i) f.components[i][p] = w[i];
  }
  f.validate();
  return f;
}

ScalarFieldGrid jacobian_symmetry_defect(const VectorFieldGrid& field) {
  const GridSpec& g = field.grid;
  require_node_grid(g, "jacobian_symmetry_defect");
  for (const auto& ax : g.axes()) {
    if (ax.count < 4) throw ConfigError("jacobian_symmetry_defect needs at least 4 points per axis");
  }
  const std::size_t n = field.dimension();
  ScalarFieldGrid out(g);
  for (std::size_t mu = 0; mu < n; ++mu) {
    for (std::size_t nu = mu + 1; nu < n; ++nu) {
      const auto dnu_wmu = partial_derivative(g, field.components[mu], nu);
      const auto dmu_wnu = partial_derivative(g, field.components[nu], mu);
      for (std::size_t p = 0; p < g.size(); ++p) {
        out.values[p] = std::max(out.values[p], std::abs(dnu_wmu[p] - dmu_wnu[p]));
      }
    }
  }
  return out;
}

HodgeParts decompose(const VectorFieldGrid& field, const HodgeOptions& options) {
  const GridSpec& g = field.grid;
  require_node_grid(g, "decompose");
  const std::size_t dim = g.dimension();
  if (dim != 2 && dim != 3) throw ConfigError("decompose supports 2D and 3D grids");
  field.validate();

  HodgeParts parts;
  HodgeDiagnostics& diag = parts.diagnostics;

  // Largest first derivative of the input sets the scale below which div and
  // curl are rounding noise.
  double jac_scale = 0.0;
  for (std::size_t c = 0; c < dim; ++c) {
    for (std::size_t a = 0; a < dim; ++a) {
      for (double v : partial_derivative(g, field.components[c], a)) jac_scale = std::max(jac_scale, std::abs(v));
    }
  }

  // Stage 1: gradient part. Face rows of -div use the SBP closure: the ghost-node
  // Neumann row is a half-cell balance and this is the divergence that matches it.
  ScalarFieldGrid rhs(g);
  for (std::size_t a = 0; a < dim; ++a) {
    const auto d = sbp_partial(g, field.components[a], a);
    for (std::size_t p = 0; p < g.size(); ++p) rhs.values[p] -= d[p];
  }
  double source = 0.0;
  for (std::size_t p = 0; p < g.size(); ++p) source += g.weight(p) * rhs.values[p];
  diag.neumann_flux = source / boundary_measure(g);
  PoissonOptions phi_opts = options.poisson;
  phi_opts.neumann_flux = diag.neumann_flux;
  phi_opts.rhs_scale = std::max(phi_opts.rhs_scale, jac_scale);
  PoissonResult phi = poisson_solve(rhs, PoissonBC::neumann, phi_opts);
  diag.mean_shift = phi.mean_shift;
  diag.phi_iterations = phi.iterations;
  parts.phi = std::move(phi.u);

  VectorFieldGrid remainder = field + gradient(parts.phi);

  // Stage 2: solenoidal part from stream function(s).
  PoissonOptions psi_opts = options.poisson;
  psi_opts.neumann_flux = 0.0;
  psi_opts.rhs_scale = std::max(psi_opts.rhs_scale, jac_scale);
  if (dim == 2) {
    ScalarFieldGrid c = scalar_curl(remainder);
    for (double& v : c.values) v = -v;
    parts.stream.push_back(stream_solve_2d(c));
  } else {
    VectorFieldGrid c = vector_curl(remainder);
    for (std::size_t k = 0; k < 3; ++k) {
      ScalarFieldGrid ck(g, c.components[k]);
      for (double& v : ck.values) v = -v;
      PoissonResult psi = poisson_solve(ck, PoissonBC::dirichlet_zero, psi_opts);
      diag.stream_iterations += psi.iterations;
      parts.stream.push_back(std::move(psi.u));
    }
  }

  // Stage 3: harmonic remainder and closure.
  const VectorFieldGrid sol = solenoidal_part(parts);
  parts.harmonic = remainder - sol;
  const VectorFieldGrid grad_part = gradient_part(parts);
  parts.residual = VectorFieldGrid(g);
  for (std::size_t c = 0; c < dim; ++c) {
    for (std::size_t p = 0; p < g.size(); ++p) {
      parts.residual.components[c][p] = field.components[c][p] -
                                        (grad_part.components[c][p] + sol.components[c][p] +
                                         parts.harmonic.components[c][p]);
    }
  }

  diag.harmonic_div_rms = interior_rms(g, divergence(parts.harmonic).values);
  if (dim == 2) {
    diag.harmonic_curl_rms = interior_rms(g, scalar_curl(parts.harmonic).values);
  } else {
    const VectorFieldGrid c = vector_curl(parts.harmonic);
    std::vector<double> mag(g.size());
    for (std::size_t p = 0; p < g.size(); ++p) {
      mag[p] = std::sqrt(c.components[0][p] * c.components[0][p] + c.components[1][p] * c.components[1][p] +
                         c.components[2][p] * c.components[2][p]);
    }
    diag.harmonic_curl_rms = interior_rms(g, mag);
  }
  const double h = max_spacing(g);
  diag.quality_bound = options.quality_factor * h * h * weighted_rms(field);
  diag.quality_ok = diag.harmonic_div_rms <= diag.quality_bound && diag.harmonic_curl_rms <= diag.quality_bound;
  return parts;
}

VectorFieldGrid gradient_part(const HodgeParts& parts) {
  VectorFieldGrid g = gradient(parts.phi);
  for (auto& c : g.components)
    for (double& v : c) v = -v;
  return g;
}

VectorFieldGrid solenoidal_part(const HodgeParts& parts) {
  const GridSpec& g = parts.phi.grid;
  if (g.dimension() == 2) {
    if (parts.stream.size() != 1) throw GridMismatchError("2D parts need one stream function");
    require_same_grid(g, parts.stream[0].grid, "solenoidal_part");
    VectorFieldGrid s(g);
    s.components[0] = sbp_partial(g, parts.stream[0].values, 1);
    s.components[1] = sbp_partial(g, parts.stream[0].values, 0);
    for (double& v : s.components[1]) v = -v;
    return s;
  }
  if (parts.stream.size() != 3) throw GridMismatchError("3D parts need three stream components");
  VectorFieldGrid psi(g);
  for (std::size_t k = 0; k < 3; ++k) {
    require_same_grid(g, parts.stream[k].grid, "solenoidal_part");
    psi.components[k] = parts.stream[k].values;
  }
  return vector_curl(psi);
}

VectorFieldGrid reconstruct(const HodgeParts& parts) {
  require_same_grid(parts.phi.grid, parts.harmonic.grid, "reconstruct");
  require_same_grid(parts.phi.grid, parts.residual.grid, "reconstruct");
  const VectorFieldGrid grad_part = gradient_part(parts);
  const VectorFieldGrid sol = solenoidal_part(parts);
  VectorFieldGrid out(parts.phi.grid);
  for (std::size_t c = 0; c < out.dimension(); ++c) {
    for (std::size_t p = 0; p < out.grid.size(); ++p) {
      out.components[c][p] = grad_part.components[c][p] + sol.components[c][p] +
                             parts.harmonic.components[c][p] + parts.residual.components[c][p];
    }
  }
  return out;
}

HarmonicConstancy harmonic_constancy_report(const VectorFieldGrid& harmonic, double rel_tol) {
  HarmonicConstancy rep;
  const std::size_t n = harmonic.grid.size();
  double magnitude = 0.0;
  for (const auto& c : harmonic.components) {
    rep.mean.push_back(std::accumulate(c.begin(), c.end(), 0.0) / static_cast<double>(n));
    for (double v : c) magnitude = std::max(magnitude, std::abs(v));
  }
  for (std::size_t p = 0; p < n; ++p) {
    double dev = 0.0;
    for (std::size_t c = 0; c < harmonic.dimension(); ++c) {
      dev = std::max(dev, std::abs(harmonic.components[c][p] - rep.mean[c]));
    }
    rep.max_deviation = std::max(rep.max_deviation, dev);
  }
  rep.reduction_applicable = rep.max_deviation <= rel_tol * magnitude;
  return rep;
}

DriftFn interpolate_field(const VectorFieldGrid& field) {
  require_node_grid(field.grid, "interpolate_field");
  auto f = std::make_shared<const VectorFieldGrid>(field);
  return [f](std::span<const double> q, std::span<double> out) {
    const GridSpec& g = f->grid;
    const std::size_t dim = g.dimension();
    std::array<std::size_t, 3> lo{0, 0, 0};
    std::array<double, 3> t{0, 0, 0};
    for (std::size_t a = 0; a < dim; ++a) {
      const double s = std::clamp((q[a] - g.axis(a).lower) / g.spacing(a), 0.0,
                                  static_cast<double>(g.count(a) - 1));
      std::size_t i = static_cast<std::size_t>(s);
      if (i + 1 >= g.count(a)) i = g.count(a) - 2;
      lo[a] = i;
      t[a] = s - static_cast<double>(i);
    }
    for (std::size_t c = 0; c < f->dimension(); ++c) out[c] = 0.0;
    for (std::size_t corner = 0; corner < (std::size_t{1} << dim); ++corner) {
      double w = 1.0;
      std::size_t flat = 0;
      for (std::size_t a = 0; a < dim; ++a) {
        const bool up = (corner >> a) & 1U;
        w *= up ? t[a] : 1.0 - t[a];
        flat += (lo[a] + (up ? 1 : 0)) * g.stride(a);
      }
      for (std::size_t c = 0; c < f->dimension(); ++c) out[c] += w * f->components[c][flat];
    }
  };
}

}  // namespace cle
