#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "cle/grid.hpp"
#include "cle/model.hpp"
#include "cle/sde.hpp"

namespace cle {

/// Coefficients of  d_t rho = d_i [ D_ij d_j + A_i + d_i phi ] rho  on a
/// cell-centred grid. The bracket is the i-th (negated) flux component; the
/// physical force is -(A + grad phi).
struct FPCoefficients {
  GridSpec grid;
  /// D per cell, row-major n x n blocks: diffusion[(cell * n + i) * n + j].
  std::vector<double> diffusion;
  VectorFieldGrid A;
  ScalarFieldGrid phi;

  FPCoefficients() = default;
  /// Constant D; A and phi default to zero.
  FPCoefficients(GridSpec cell_grid, const Eigen::MatrixXd& D);

  std::size_t dimension() const noexcept { return grid.dimension(); }
  Eigen::MatrixXd diffusion_at(std::size_t cell) const;
  void set_diffusion(std::size_t cell, const Eigen::MatrixXd& D);
  /// Shared cell grid, finite values, D symmetric with no eigenvalue below
  /// -1e-10 at every cell. Throws ConfigError / GridMismatchError.
  void validate() const;
};

/// D(q) = h h^T / 2 of `system` evaluated at every cell centre.
void set_diffusion_from_system(FPCoefficients& coeffs, const SDESystem& system);

struct FPOperator {
  GridSpec grid;
  Eigen::SparseMatrix<double> L;  ///< d_t rho = L rho, columns sum to zero
  /// False when the lattice split of D produced a negative edge rate
  /// (D not diagonally dominant at this grid aspect ratio).
  bool positivity_ok = true;
  double min_edge_rate = 0.0;
  double max_peclet = 0.0;        ///< max |delta| over edges
  bool connected = true;
  std::vector<std::string> warnings;
};

/// No-flux finite-volume operator with exponentially fitted
/// (Scharfetter-Gummel) edge fluxes. D is split over lattice directions:
/// axis edges carry D_ii/h_i^2 - sum_j |D_ij|/(h_i h_j), diagonal edges
/// h_i e_i + sign(D_ij) h_j e_j carry |D_ij|/(h_i h_j). Each edge flux is
/// gamma [B(delta) rho_x - B(-delta) rho_y] with B(x) = x/(e^x - 1) and
/// delta = v . D^-1 (A + grad phi) along the edge, the phi part made exact
/// along v. For scalar D and A = 0 the null vector is exp(-phi/D) exactly.
FPOperator assemble(const FPCoefficients& coeffs);

struct StepResult {
  std::vector<double> rho;
  bool clipped = false;   ///< a value below -1e-14 was clipped to zero
  double min_value = 0.0; ///< before clipping
};

/// Implicit Euler with a cached factorisation of (I - dt L).
class FPStepper {
 public:
  FPStepper(const FPOperator& op, double dt);
  StepResult step(const std::vector<double>& rho) const;
  double dt() const noexcept { return dt_; }

 private:
  const FPOperator* op_;
  double dt_;
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu_;
};

StepResult step(const FPOperator& op, const std::vector<double>& rho, double dt);

enum class SteadyMethod { bordered, time_marching };
std::string to_string(SteadyMethod m);
SteadyMethod steady_method_from_string(const std::string& s);

struct SteadyOptions {
  double tol = 1e-10;           ///< on ||L rho||_1 / ||rho||_1
  std::size_t max_steps = 400;  ///< time marching only
  double dt0 = 0.0;             ///< 0: 0.1 / max |L_ii|
  double growth = 2.0;
  double dt_max = 1e12;
};

struct FPSolution {
  GridSpec grid;
  std::vector<double> density;
  double mass = 0.0;       ///< sum rho * cell volume
  double residual = 0.0;   ///< ||L rho||_1 / ||rho||_1
  std::size_t iterations = 0;
  SteadyMethod method = SteadyMethod::bordered;
  bool clipped = false;
};

/// Relative stationarity residual ||L rho||_1 / ||rho||_1.
double stationarity_residual(const FPOperator& op, const std::vector<double>& rho);

/// Steady state, normalised to unit mass. Throws ConvergenceError if the
/// residual target is missed, or if the operator is reducible.
FPSolution steady_state(const FPOperator& op, SteadyMethod method = SteadyMethod::bordered,
                        const SteadyOptions& options = {});

/// phibar(q) = phi(q) + a . q.
ScalarFieldGrid effective_potential(const ScalarFieldGrid& phi, const Eigen::VectorXd& a);

/// Sum |a - b| * cell volume over the cells of a shared grid.
double l1_distance(const GridSpec& grid, const std::vector<double>& a, const std::vector<double>& b);

struct FPComparison {
  double distance = 0.0;
  /// Cells with no simulated mass where the FP density exceeds the threshold.
  std::vector<std::size_t> empty_cells;
  double threshold = 0.0;
  double out_of_grid_fraction = 0.0;
};

/// L1 distance between the FP density and the histogram density. The
/// threshold defaults to 1e-3 of the peak FP density.
FPComparison fp_vs_simulation(const FPSolution& fp, const Histogram& hist, double threshold = -1.0);

/// Exact cell averages of a product of 1D normal densities (mean mu_a,
/// standard deviation sd_a per axis) on a cell grid.
std::vector<double> gaussian_cell_averages(const GridSpec& grid, const Eigen::VectorXd& mean,
                                           const Eigen::VectorXd& sd);

/// Writes the density (and optional extra named fields on the same grid) in
/// the shared field format plus `<stem>.manifest.json` with residual, mass,
/// method and iterations. Returns every path written.
std::vector<std::filesystem::path> write_solution(const std::filesystem::path& stem, const FPSolution& sol,
                                                  const std::vector<std::string>& extra_names = {},
                                                  const std::vector<std::vector<double>>& extra = {});

}  // namespace cle
