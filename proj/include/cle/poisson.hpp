#pragma once

#include <cstddef>

#include "cle/grid.hpp"

namespace cle {

enum class PoissonBC {
  /// du/dn = g on every face, g uniform (zero by default). The right-hand side is
  /// shifted by its weighted mean when needed for solvability.
  neumann,
  /// u = 0 on every face.
  dirichlet_zero,
};

struct PoissonOptions {
  double rel_tol = 1e-10;
  /// 0 selects the default cap 10 * (max points per axis)^2.
  std::size_t max_iter = 0;
  /// Uniform outward normal derivative for PoissonBC::neumann.
  double neumann_flux = 0.0;
  /// Reference magnitude of the right-hand side: residuals are measured
  /// relative to max(|rhs|, rhs_scale) pointwise, so a right-hand side made of
  /// rounding noise does not demand an absolute accuracy below that noise.
  double rhs_scale = 0.0;
};

struct PoissonResult {
  ScalarFieldGrid u;
  std::size_t iterations = 0;
  double relative_residual = 0.0;
  /// Constant subtracted from the right-hand side to make a Neumann problem solvable.
  double mean_shift = 0.0;
};

/// Solves the node-centred 5-point (7-point in 3D, 3-point in 1D) discrete
/// Poisson problem lap(u) = rhs by conjugate gradients. Neumann faces use
/// ghost nodes, which keeps the operator symmetric in the trapezoid inner
/// product; Neumann solutions are returned with zero arithmetic mean.
/// Throws ConvergenceError when the iteration cap is hit.
PoissonResult poisson_solve(const ScalarFieldGrid& rhs, PoissonBC bc, const PoissonOptions& options = {});

/// Discrete Laplacian under the same boundary treatment (Neumann ghost nodes
/// with the given flux; Dirichlet boundary rows are returned as zero).
ScalarFieldGrid apply_laplacian(const ScalarFieldGrid& u, PoissonBC bc, double neumann_flux = 0.0);

/// Sum of trapezoid face weights, i.e. the discrete measure of the box boundary
/// as seen by the Neumann ghost-node scheme.
double boundary_measure(const GridSpec& grid);

}  // namespace cle
