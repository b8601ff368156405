#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cle/fokker_planck.hpp"
#include "cle/grid.hpp"
#include "cle/model.hpp"
#include "cle/sde.hpp"

namespace cle {

/// `exact` normalises the momentum Gaussian to unit mass in n dimensions,
/// 1 / ((2 pi m)^(n/2) sqrt(det D)). `det_power` uses the prefactor
/// (sqrt(2 pi m det D))^(-n); the two agree for n = 1 only.
enum class KernelNormalization { exact, det_power };

std::string to_string(KernelNormalization k);
KernelNormalization kernel_normalization_from_string(const std::string& s);

/// Momentum kernel prefactor * exp(-p^T D^-1 p / (2m)) at a fixed q.
struct GaussianKernel {
  double mass = 1.0;
  Eigen::MatrixXd D;
  Eigen::MatrixXd D_inv;
  double prefactor = 0.0;
  KernelNormalization normalization = KernelNormalization::exact;

  std::size_t dimension() const noexcept { return static_cast<std::size_t>(D.rows()); }
};

/// Throws ConfigError for m <= 0, non-symmetric or non-positive-definite D.
GaussianKernel make_kernel(double mass, const Eigen::MatrixXd& D,
                           KernelNormalization normalization = KernelNormalization::exact);

double kernel_value(const GaussianKernel& kernel, std::span<const double> p);

/// Node grid over p with `points` nodes per axis on [-k s_a, k s_a],
/// s_a = sqrt(m lambda_max(D)).
GridSpec momentum_grid(const GaussianKernel& kernel, std::size_t points, double k = 6.0);

/// Trapezoidal integral of the kernel over a momentum node grid.
double kernel_integral(const GaussianKernel& kernel, const GridSpec& grid);

struct IdentityDefect {
  double defect = 0.0;          ///< max over interior nodes of the normalised field
  ScalarFieldGrid field;        ///< normalised per-node defect (0 on the boundary)
  double points_per_sd = 0.0;   ///< min over axes of sqrt(m D_aa) / h_a
  bool under_resolved = false;  ///< fewer than 8 points per standard deviation
};

/// (D_ij d_pj + p_i/m) K = 0: max over interior nodes and components of the
/// central-difference residual, normalised by the peak kernel value.
IdentityDefect l1_annihilation_defect(const GaussianKernel& kernel, const GridSpec& grid);

/// L1 psi = -psi/m for psi = (p . c) K with
/// L1 = d_pi (p_i/m + D_ij d_pj), discretised in divergence form with fluxes
/// at half nodes: max over interior nodes of |L1 psi + psi/m| normalised by
/// max|psi|/m. Throws ConfigError for c = 0.
IdentityDefect l1_eigencheck(const Eigen::VectorXd& c, const GaussianKernel& kernel, const GridSpec& grid);

/// Log-log slope of successive (h, error) pairs, fitted by least squares.
double refinement_slope(const std::vector<double>& h, const std::vector<double>& error);

struct MassRow {
  double mass = 0.0;
  double distance = 0.0;
  double standard_error = 0.0;
  bool pass = true;  ///< not larger than the previous (larger-mass) row beyond 1 SE
};

struct MassSweepOptions {
  SimConfig sim;                ///< shared by every mass (common random numbers)
  InitialSampler init;          ///< initial q and p
  std::size_t batches = 20;     ///< jackknife groups of trajectories
  bool overdamped_reference = true;
};

struct ZeroMassReport {
  std::vector<MassRow> rows;
  double overdamped_distance = -1.0;  ///< overdamped simulation vs FP reference (-1: not run)
  double overdamped_se = 0.0;
  bool monotone = true;
  /// smallest-mass distance <= 2 x overdamped distance (true when no reference was run)
  bool terminal_within_reference = true;
  std::vector<std::string> warnings;
};

/// For each mass (positive, strictly decreasing) simulates the underdamped
/// system, bins q into the grid of `fp_reference` and reports the L1
/// distance with a jackknife standard error over trajectory groups.
ZeroMassReport zero_mass_convergence(const SDESystem& system, const std::vector<double>& masses,
                                     const FPSolution& fp_reference, const MassSweepOptions& options);

/// L1 distance of the q-histogram of an ensemble to a reference density and
/// its jackknife standard error over `batches` groups of trajectories.
std::pair<double, double> ensemble_distance(const TrajectoryEnsemble& ensemble, const GridSpec& grid,
                                            const std::vector<double>& reference, std::size_t batches);

struct MomentumCheck {
  bool applicable = true;       ///< false for zero noise or missing momenta
  std::size_t samples = 0;
  Eigen::VectorXd mean;
  Eigen::VectorXd mean_se;
  Eigen::MatrixXd covariance;
  Eigen::MatrixXd expected;     ///< m D
  bool mean_ok = true;          ///< |mean| <= 3 SE per component
  double max_relative_deviation = 0.0;  ///< max_ij |C_ij - mD_ij| / max_k mD_kk
  bool covariance_ok = true;    ///< within 5%
};

/// p-marginal of an underdamped ensemble against N(0, m D). Throws
/// SimulationError with fewer than 2 valid samples.
MomentumCheck momentum_marginal_check(const TrajectoryEnsemble& ensemble, double mass, const Eigen::MatrixXd& D,
                                      double tolerance = 0.05);

/// Convergence table as CSV: mass, distance, standard_error, pass.
std::string mass_table_csv(const ZeroMassReport& report);

}  // namespace cle
