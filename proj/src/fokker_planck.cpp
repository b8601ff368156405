#include "cle/fokker_planck.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "cle/errors.hpp"
#include "cle/field_io.hpp"

namespace cle {

namespace {

// B(x) = x / (e^x - 1), the Bernoulli weight of exponential fitting.
double bernoulli(double x) {
  if (std::abs(x) < 1e-10) return 1.0 - 0.5 * x;
  return x / std::expm1(x);
}

// d/dq_axis of cell values: central inside, second-order one-sided at the ends.
std::vector<double> cell_partial(const GridSpec& g, const std::vector<double>& v, std::size_t axis) {
  const std::size_t n = g.count(axis), st = g.stride(axis);
  const double inv2h = 1.0 / (2.0 * g.spacing(axis));
  std::vector<double> out(v.size());
  for (std::size_t p = 0; p < g.size(); ++p) {
    const std::size_t i = g.unravel(p)[axis];
    if (i == 0) {
      out[p] = (-3.0 * v[p] + 4.0 * v[p + st] - v[p + 2 * st]) * inv2h;
    } else if (i + 1 == n) {
      out[p] = (3.0 * v[p] - 4.0 * v[p - st] + v[p - 2 * st]) * inv2h;
    } else {
      out[p] = (v[p + st] - v[p - st]) * inv2h;
    }
  }
  return out;
}

struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) { parent[find(a)] = find(b); }
};

// P(a < Z < b) for a standard normal Z, accurate in both tails.
double normal_mass(double a, double b) {
  const double s = 1.0 / std::sqrt(2.0);
  if (a >= 0.0) return 0.5 * (std::erfc(a * s) - std::erfc(b * s));
  if (b <= 0.0) return 0.5 * (std::erfc(-b * s) - std::erfc(-a * s));
  return 1.0 - 0.5 * (std::erfc(-a * s) + std::erfc(b * s));
}

}  // namespace

FPCoefficients::FPCoefficients(GridSpec cell_grid, const Eigen::MatrixXd& D)
    : grid(std::move(cell_grid)), A(grid), phi(grid) {
  const std::size_t n = grid.dimension();
  if (static_cast<std::size_t>(D.rows()) != n || static_cast<std::size_t>(D.cols()) != n) {
    throw ConfigError("diffusion matrix size does not match the grid dimension");
  }
  diffusion.resize(grid.size() * n * n);
  for (std::size_t c = 0; c < grid.size(); ++c) set_diffusion(c, D);
}

Eigen::MatrixXd FPCoefficients::diffusion_at(std::size_t cell) const {
  const auto n = static_cast<Eigen::Index>(dimension());
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      diffusion.data() + cell * static_cast<std::size_t>(n * n), n, n);
}

void FPCoefficients::set_diffusion(std::size_t cell, const Eigen::MatrixXd& D) {
  const std::size_t n = dimension();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      diffusion[(cell * n + i) * n + j] = D(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
  }
}

void FPCoefficients::validate() const {
  if (grid.centering() != Centering::cell) throw ConfigError("FP coefficients need a cell-centred grid");
  require_same_grid(grid, A.grid, "FP coefficient A");
  require_same_grid(grid, phi.grid, "FP coefficient phi");
  A.validate();
  phi.validate();
  const std::size_t n = dimension();
  if (diffusion.size() != grid.size() * n * n) throw ConfigError("FP diffusion field has the wrong size");
  for (std::size_t c = 0; c < grid.size(); ++c) {
    const Eigen::MatrixXd D = diffusion_at(c);
    if (!D.allFinite()) throw ConfigError("FP diffusion is not finite at cell " + std::to_string(c));
    const double scale = std::max(1.0, D.cwiseAbs().maxCoeff());
    if ((D - D.transpose()).cwiseAbs().maxCoeff() > 1e-14 * scale) {
      throw ConfigError("FP diffusion is not symmetric at cell " + std::to_string(c));
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(D);
    if (es.eigenvalues().minCoeff() < -1e-10) {
      throw ConfigError("FP diffusion has a negative eigenvalue at cell " + std::to_string(c));
    }
  }
}

void set_diffusion_from_system(FPCoefficients& coeffs, const SDESystem& system) {
  const GridSpec& g = coeffs.grid;
  if (system.dimension() != g.dimension()) throw ConfigError("system and FP grid dimensions differ");
  Eigen::VectorXd q(static_cast<Eigen::Index>(g.dimension()));
  for (std::size_t c = 0; c < g.size(); ++c) {
    g.point(c, q.data());
    coeffs.set_diffusion(c, system.diffusion_at(q));
  }
}

FPOperator assemble(const FPCoefficients& coeffs) {
  coeffs.validate();
  const GridSpec& g = coeffs.grid;
  const std::size_t n = g.dimension(), N = g.size();
  FPOperator op;
  op.grid = g;
  op.min_edge_rate = std::numeric_limits<double>::infinity();

  std::vector<std::vector<double>> grad_phi(n);
  for (std::size_t a = 0; a < n; ++a) grad_phi[a] = cell_partial(g, coeffs.phi.values, a);
  std::vector<double> h(n);
  for (std::size_t a = 0; a < n; ++a) h[a] = g.spacing(a);

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(N * (2 * n + 2 * n * n));
  UnionFind uf(N);
  Eigen::VectorXd v(static_cast<Eigen::Index>(n)), b(static_cast<Eigen::Index>(n));

  // Edge x -> y = x + offset, offset in {-1, 0, 1}^n with its first nonzero
  // entry +1 so that each undirected edge is visited once.
  auto edge = [&](std::size_t x, const std::array<int, 3>& off, int kind_i, int kind_j) {
    auto ix = g.unravel(x);
    std::array<std::size_t, 3> iy = ix;
    for (std::size_t a = 0; a < n; ++a) {
      const long t = static_cast<long>(ix[a]) + off[a];
      if (t < 0 || t >= static_cast<long>(g.count(a))) return;
      iy[a] = static_cast<std::size_t>(t);
    }
    const std::size_t y = g.flat_index(iy);
    const Eigen::MatrixXd De = 0.5 * (coeffs.diffusion_at(x) + coeffs.diffusion_at(y));
    double rate;
    if (kind_j < 0) {
      const auto i = static_cast<Eigen::Index>(kind_i);
      rate = De(i, i) / (h[kind_i] * h[kind_i]);
      for (std::size_t j = 0; j < n; ++j) {
        if (static_cast<int>(j) != kind_i) rate -= std::abs(De(i, static_cast<Eigen::Index>(j))) / (h[kind_i] * h[j]);
      }
    } else {
      const double s = static_cast<double>(off[kind_i] * off[kind_j]);
      rate = std::max(0.0, s * De(kind_i, kind_j)) / (h[kind_i] * h[kind_j]);
      if (rate == 0.0) return;
    }
    op.min_edge_rate = std::min(op.min_edge_rate, rate);
    if (rate == 0.0) return;
    double vv = 0.0, vg = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
      v(static_cast<Eigen::Index>(a)) = off[a] * h[a];
      vv += v(static_cast<Eigen::Index>(a)) * v(static_cast<Eigen::Index>(a));
    }
    for (std::size_t a = 0; a < n; ++a) {
      const double ga = 0.5 * (grad_phi[a][x] + grad_phi[a][y]);
      b(static_cast<Eigen::Index>(a)) = ga;
      vg += v(static_cast<Eigen::Index>(a)) * ga;
    }
    // Make the phi part exact along the edge.
    const double dphi = coeffs.phi.values[y] - coeffs.phi.values[x];
    b += v * ((dphi - vg) / vv);
    for (std::size_t a = 0; a < n; ++a) {
      b(static_cast<Eigen::Index>(a)) += 0.5 * (coeffs.A.components[a][x] + coeffs.A.components[a][y]);
    }
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(De);
    if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 0.0)) {
      throw ConfigError("FP assembly needs a positive definite diffusion matrix on every edge");
    }
    const double delta = v.dot(ldlt.solve(b));
    op.max_peclet = std::max(op.max_peclet, std::abs(delta));
    const double fwd = rate * bernoulli(delta), bwd = rate * bernoulli(-delta);
    const auto xi = static_cast<Eigen::Index>(x), yi = static_cast<Eigen::Index>(y);
    trip.emplace_back(xi, xi, -fwd);
    trip.emplace_back(yi, xi, fwd);
    trip.emplace_back(xi, yi, bwd);
    trip.emplace_back(yi, yi, -bwd);
    if (rate > 0.0) uf.unite(x, y);
  };

  for (std::size_t x = 0; x < N; ++x) {
    for (std::size_t i = 0; i < n; ++i) {
      std::array<int, 3> off{0, 0, 0};
      off[i] = 1;
      edge(x, off, static_cast<int>(i), -1);
      for (std::size_t j = i + 1; j < n; ++j) {
        for (int s : {1, -1}) {
          std::array<int, 3> d{0, 0, 0};
          d[i] = 1;
          d[j] = s;
          edge(x, d, static_cast<int>(i), static_cast<int>(j));
        }
      }
    }
  }
  op.L.resize(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(N));
  op.L.setFromTriplets(trip.begin(), trip.end());
  op.L.makeCompressed();

  if (op.min_edge_rate < 0.0) {
    op.positivity_ok = false;
    op.warnings.push_back("diffusion is not diagonally dominant at this grid aspect ratio; minimum edge rate " +
                          format_double(op.min_edge_rate) + " breaks the M-matrix property");
  }
  if (op.max_peclet > 20.0) {
    op.warnings.push_back("cell Peclet number reaches " + format_double(op.max_peclet) +
                          "; the grid under-resolves the drift");
  }
  const std::size_t root = uf.find(0);
  for (std::size_t x = 1; x < N; ++x) {
    if (uf.find(x) != root) {
      op.connected = false;
      op.warnings.push_back("operator is reducible: the grid graph has disconnected support");
      break;
    }
  }
  return op;
}

FPStepper::FPStepper(const FPOperator& op, double dt) : op_(&op), dt_(dt) {
  if (!(dt > 0.0)) throw ConfigError("FP step needs dt > 0");
  Eigen::SparseMatrix<double> I(op.L.rows(), op.L.cols());
  I.setIdentity();
  const Eigen::SparseMatrix<double> M = I - dt * op.L;
  lu_.compute(M);
  if (lu_.info() != Eigen::Success) throw ConvergenceError("factorising I - dt L failed", 1.0);
}

StepResult FPStepper::step(const std::vector<double>& rho) const {
  if (rho.size() != static_cast<std::size_t>(op_->L.rows())) throw GridMismatchError("density size differs from the operator");
  const Eigen::Map<const Eigen::VectorXd> r(rho.data(), static_cast<Eigen::Index>(rho.size()));
  const Eigen::VectorXd x = lu_.solve(r);
  if (lu_.info() != Eigen::Success || !x.allFinite()) throw ConvergenceError("implicit FP step failed", 1.0);
  StepResult out;
  out.rho.assign(x.data(), x.data() + x.size());
  out.min_value = x.minCoeff();
  for (double& v : out.rho) {
    if (v < -1e-14) out.clipped = true;
    if (v < 0.0) v = 0.0;
  }
  return out;
}

StepResult step(const FPOperator& op, const std::vector<double>& rho, double dt) {
  return FPStepper(op, dt).step(rho);
}

std::string to_string(SteadyMethod m) { return m == SteadyMethod::bordered ? "bordered" : "time_marching"; }

SteadyMethod steady_method_from_string(const std::string& s) {
  if (s == "bordered") return SteadyMethod::bordered;
  if (s == "time_marching") return SteadyMethod::time_marching;
  throw ConfigError("unknown steady-state method '" + s + "' (expected bordered or time_marching)");
}

double stationarity_residual(const FPOperator& op, const std::vector<double>& rho) {
  const Eigen::Map<const Eigen::VectorXd> r(rho.data(), static_cast<Eigen::Index>(rho.size()));
  const double den = r.lpNorm<1>();
  return den > 0.0 ? (op.L * r).lpNorm<1>() / den : 0.0;
}

FPSolution steady_state(const FPOperator& op, SteadyMethod method, const SteadyOptions& options) {
  if (!op.connected) {
    throw ConvergenceError("steady state is not unique: the FP operator is reducible", 1.0);
  }
  const GridSpec& g = op.grid;
  const std::size_t N = g.size();
  const double vol = g.cell_volume();
  FPSolution sol;
  sol.grid = g;
  sol.method = method;

  auto normalise = [&](std::vector<double>& rho) {
    double mass = 0.0;
    for (double v : rho) mass += v * vol;
    for (double& v : rho) v /= mass;
  };

  if (method == SteadyMethod::bordered) {
    // Replace row 0 of L by the normalisation row vol * 1^T.
    std::vector<Eigen::Triplet<double>> trip;
    for (Eigen::Index c = 0; c < op.L.outerSize(); ++c) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(op.L, c); it; ++it) {
        if (it.row() != 0) trip.emplace_back(it.row(), it.col(), it.value());
      }
    }
    for (std::size_t c = 0; c < N; ++c) trip.emplace_back(0, static_cast<Eigen::Index>(c), vol);
    Eigen::SparseMatrix<double> M(op.L.rows(), op.L.cols());
    M.setFromTriplets(trip.begin(), trip.end());
    M.makeCompressed();
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(M);
    if (lu.info() != Eigen::Success) throw ConvergenceError("bordered steady-state factorisation failed", 1.0);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(N));
    rhs(0) = 1.0;
    const Eigen::VectorXd x = lu.solve(rhs);
    if (lu.info() != Eigen::Success || !x.allFinite()) throw ConvergenceError("bordered steady-state solve failed", 1.0);
    sol.density.assign(x.data(), x.data() + x.size());
    for (double& v : sol.density) {
      if (v < -1e-14) sol.clipped = true;
      if (v < 0.0) v = 0.0;
    }
    normalise(sol.density);
    sol.iterations = 1;
  } else {
    double diag = 0.0;
    for (Eigen::Index k = 0; k < op.L.rows(); ++k) diag = std::max(diag, std::abs(op.L.coeff(k, k)));
    double dt = options.dt0 > 0.0 ? options.dt0 : 0.1 / std::max(diag, 1e-300);
    std::vector<double> rho(N, 1.0);
    normalise(rho);
    sol.residual = stationarity_residual(op, rho);
    for (std::size_t s = 0; s < options.max_steps && sol.residual >= options.tol; ++s) {
      StepResult r = FPStepper(op, dt).step(rho);
      sol.clipped = sol.clipped || r.clipped;
      rho = std::move(r.rho);
      normalise(rho);
      sol.residual = stationarity_residual(op, rho);
      sol.iterations = s + 1;
      dt = std::min(dt * options.growth, options.dt_max);
    }
    sol.density = std::move(rho);
  }
  sol.residual = stationarity_residual(op, sol.density);
  sol.mass = 0.0;
  for (double v : sol.density) sol.mass += v * vol;
  if (!(sol.residual < options.tol)) {
    throw ConvergenceError("FP steady state missed the stationarity target with method " + to_string(method),
                           sol.residual);
  }
  return sol;
}

ScalarFieldGrid effective_potential(const ScalarFieldGrid& phi, const Eigen::VectorXd& a) {
  const GridSpec& g = phi.grid;
  if (static_cast<std::size_t>(a.size()) != g.dimension()) throw ConfigError("tilt vector has the wrong dimension");
  ScalarFieldGrid out = phi;
  std::vector<double> q(g.dimension());
  for (std::size_t p = 0; p < g.size(); ++p) {
    g.point(p, q.data());
    for (std::size_t i = 0; i < q.size(); ++i) out.values[p] += a(static_cast<Eigen::Index>(i)) * q[i];
  }
  return out;
}

double l1_distance(const GridSpec& grid, const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != grid.size() || b.size() != grid.size()) throw GridMismatchError("density sizes differ from the grid");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s * grid.cell_volume();
}

FPComparison fp_vs_simulation(const FPSolution& fp, const Histogram& hist, double threshold) {
  require_same_grid(fp.grid, hist.grid, "fp_vs_simulation");
  FPComparison out;
  const std::vector<double> d = hist.density();
  out.distance = l1_distance(fp.grid, fp.density, d);
  const double peak = *std::max_element(fp.density.begin(), fp.density.end());
  out.threshold = threshold >= 0.0 ? threshold : 1e-3 * peak;
  for (std::size_t c = 0; c < d.size(); ++c) {
    if (hist.counts[c] == 0.0 && fp.density[c] > out.threshold) out.empty_cells.push_back(c);
  }
  out.out_of_grid_fraction = hist.out_of_grid_fraction();
  return out;
}

std::vector<double> gaussian_cell_averages(const GridSpec& grid, const Eigen::VectorXd& mean, const Eigen::VectorXd& sd) {
  if (grid.centering() != Centering::cell) throw ConfigError("cell averages need a cell-centred grid");
  const std::size_t n = grid.dimension();
  std::vector<std::vector<double>> axis(n);
  for (std::size_t a = 0; a < n; ++a) {
    const double h = grid.spacing(a), lo = grid.axis(a).lower;
    const double mu = mean(static_cast<Eigen::Index>(a)), s = sd(static_cast<Eigen::Index>(a));
    for (std::size_t i = 0; i < grid.count(a); ++i) {
      const double x0 = lo + static_cast<double>(i) * h, x1 = x0 + h;
      axis[a].push_back(normal_mass((x0 - mu) / s, (x1 - mu) / s) / h);
    }
  }
  std::vector<double> out(grid.size(), 1.0);
  for (std::size_t p = 0; p < grid.size(); ++p) {
    const auto idx = grid.unravel(p);
    for (std::size_t a = 0; a < n; ++a) out[p] *= axis[a][idx[a]];
  }
  return out;
}

std::vector<std::filesystem::path> write_solution(const std::filesystem::path& stem, const FPSolution& sol,
                                                  const std::vector<std::string>& extra_names,
                                                  const std::vector<std::vector<double>>& extra) {
  if (extra_names.size() != extra.size()) throw ConfigError("extra field names and values differ in count");
  FieldTable t;
  t.grid = sol.grid;
  t.names = {"density"};
  t.columns = {sol.density};
  for (std::size_t k = 0; k < extra.size(); ++k) {
    t.names.push_back(extra_names[k]);
    t.columns.push_back(extra[k]);
  }
  auto paths = write_field(stem, t);
  nlohmann::ordered_json m;
  m["method"] = to_string(sol.method);
  m["residual"] = sol.residual;
  m["mass"] = sol.mass;
  m["iterations"] = sol.iterations;
  m["clipped"] = sol.clipped;
  m["files"] = nlohmann::json::array();
  for (const auto& p : paths) m["files"].push_back(p.filename().string());
  std::filesystem::path mp = stem;
  mp += ".manifest.json";
  write_file_atomic(mp, m.dump(2) + "\n");
  paths.push_back(mp);
  return paths;
}

}  // namespace cle
