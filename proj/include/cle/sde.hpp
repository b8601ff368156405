#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cle/grid.hpp"
#include "cle/model.hpp"
#include "cle/rng.hpp"

namespace cle {

/// What to do when a step leaves the chart domain.
///  reject_step: redraw the noise of that step (counted); after
///    `max_redraws` failures the trajectory is absorbed.
///  clamp: project the state back into the domain (counted).
///  absorb_and_flag: stop the trajectory and flag it.
/// Non-finite states always absorb the trajectory.
enum class BoundaryPolicy { reject_step, clamp, absorb_and_flag };

std::string to_string(BoundaryPolicy p);
BoundaryPolicy boundary_policy_from_string(const std::string& s);

struct SimConfig {
  double dt = 1e-3;
  std::size_t steps = 1000;
  std::size_t n_traj = 1;
  std::uint64_t seed = 0;
  /// Steps discarded before the first record.
  std::size_t burn_in = 0;
  /// Record every `record_stride` steps from `burn_in` on (step burn_in included).
  std::size_t record_stride = 1;
  BoundaryPolicy boundary_policy = BoundaryPolicy::reject_step;
  std::size_t max_redraws = 1000;
  /// Worker threads; 0 means hardware concurrency. Results do not depend on it.
  std::size_t threads = 1;

  /// Throws ConfigError.
  void validate() const;
  std::size_t records_per_trajectory() const;
  bool operator==(const SimConfig&) const = default;
};

struct TrajectoryFlags {
  std::size_t rejections = 0;     ///< noise redraws (reject_step)
  std::size_t clamps = 0;         ///< projections (clamp)
  std::size_t noise_clamps = 0;   ///< steps where a negative propensity was clamped under the sqrt
  bool absorbed = false;          ///< left the domain under absorb_and_flag or ran out of redraws
  bool nonfinite = false;         ///< produced NaN/Inf
  double stopped_at = 0.0;        ///< time of absorption

  bool alive() const noexcept { return !absorbed && !nonfinite; }
  bool operator==(const TrajectoryFlags&) const = default;
};

struct TrajectoryEnsemble {
  Chart chart = Chart::concentration;
  std::size_t dimension = 0;
  std::size_t n_traj = 0;
  std::vector<double> times;     ///< recorded times, shared by all trajectories
  /// states[(traj * times.size() + record) * dimension + i]; records after a
  /// trajectory stopped are NaN and marked invalid.
  std::vector<double> states;
  std::vector<double> momenta;   ///< same layout; empty for overdamped runs
  std::vector<unsigned char> valid;  ///< per (traj, record)
  std::vector<TrajectoryFlags> flags;
  double mass = 0.0;             ///< 0 for overdamped runs
  SimConfig config;
  std::vector<std::string> warnings;

  bool has_momentum() const noexcept { return !momenta.empty(); }
  std::size_t records() const noexcept { return times.size(); }
  const double* state(std::size_t traj, std::size_t rec) const {
    return states.data() + (traj * times.size() + rec) * dimension;
  }
  const double* momentum(std::size_t traj, std::size_t rec) const {
    return momenta.data() + (traj * times.size() + rec) * dimension;
  }
  bool is_valid(std::size_t traj, std::size_t rec) const { return valid[traj * times.size() + rec] != 0; }
  std::size_t valid_records() const;
  std::size_t dead_trajectories() const;
};

/// Initial-state sampler: fills `q` (and `p` for underdamped runs, which is
/// empty otherwise) for trajectory `traj`, drawing from `rng` if it needs
/// randomness. The stream passed in is the trajectory's own.
using InitialSampler = std::function<void(std::size_t traj, RandomStream& rng, std::span<double> q,
                                          std::span<double> p)>;

InitialSampler fixed_initial(const Eigen::VectorXd& q0, const Eigen::VectorXd& p0 = {});

/// Euler-Maruyama for dq = w dt + h dW (Ito):
///   q <- q + w(q) dt + h(q) sqrt(dt) xi,  xi ~ N(0, I_m).
TrajectoryEnsemble simulate_overdamped(const SDESystem& system, const InitialSampler& q0,
                                       const SimConfig& config);
TrajectoryEnsemble simulate_overdamped(const SDESystem& system, const Eigen::VectorXd& q0,
                                       const SimConfig& config);

/// Euler-Maruyama on the momentum embedding with mass m, G = system drift:
///   q <- q + (p/m) dt;  p <- p + (-p/m + G(q)) dt + h(q) sqrt(dt) xi.
/// Noise enters the momentum equation only. Under reject_step the noise is
/// redrawn when the next position q + (p/m) dt would leave the domain.
TrajectoryEnsemble simulate_underdamped(const SDESystem& system, const InitialSampler& init, double mass,
                                        const SimConfig& config);
TrajectoryEnsemble simulate_underdamped(const SDESystem& system, const Eigen::VectorXd& q0,
                                        const Eigen::VectorXd& p0, double mass, const SimConfig& config);

/// One overdamped step with caller-supplied standard normals xi (size m).
/// `work` needs n + n*m doubles. Returns true if a propensity was clamped.
bool overdamped_step(const SDESystem& system, std::span<double> q, std::span<const double> xi, double dt,
                     std::span<double> work);
/// One underdamped step (old-state Euler-Maruyama). `work` needs n + n*m doubles.
bool underdamped_step(const SDESystem& system, std::span<double> q, std::span<double> p,
                      std::span<const double> xi, double mass, double dt, std::span<double> work);

/// Stability self-checks; return human-readable warnings (empty if fine).
/// Overdamped: dt * (spectral radius of the drift Jacobian at q0) < 0.5.
std::vector<std::string> stability_warnings(const SDESystem& system, const Eigen::VectorXd& q0, double dt,
                                            double mass = 0.0);

struct Histogram {
  GridSpec grid;                 ///< cell-centred
  std::vector<double> counts;
  double total = 0.0;            ///< samples offered, inside or outside the grid
  double outside = 0.0;          ///< samples that fell outside the grid

  double out_of_grid_fraction() const { return total > 0.0 ? outside / total : 0.0; }
  /// counts / (total * cell volume).
  std::vector<double> density() const;
};

/// Bins every valid record (positions, or momenta when use_momentum) into the
/// cell grid. Throws SimulationError if there are no valid records.
Histogram histogram(const TrajectoryEnsemble& ensemble, const GridSpec& grid, bool use_momentum = false);
/// Bins raw samples (row-major, `dimension` values per sample).
Histogram histogram(std::span<const double> samples, std::size_t dimension, const GridSpec& grid);

struct EnsembleMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  Eigen::VectorXd mean_se;       ///< standard error of the mean (batch means)
  Eigen::VectorXd variance_se;   ///< standard error of each diagonal variance (batch means)
  std::size_t samples = 0;
  std::size_t batches = 0;
};

/// Moments over all valid records. Standard errors come from batch means:
/// contiguous groups of trajectories (or of records, for one trajectory).
EnsembleMoments ensemble_moments(const TrajectoryEnsemble& ensemble, bool use_momentum = false,
                                 std::size_t batches = 20);

/// Ensemble export: `<stem>.csv` with one row per (trajectory, record):
/// trajectory, time, q..., p..., valid; and `<stem>.flags.csv` with the
/// per-trajectory flags. Returns the paths written.
std::vector<std::filesystem::path> write_ensemble(const std::filesystem::path& stem,
                                                  const TrajectoryEnsemble& ensemble);

/// Histogram export in the shared field format (columns density, count).
std::vector<std::filesystem::path> write_histogram(const std::filesystem::path& stem, const Histogram& hist,
                                                   const std::string& axis_prefix = "q");

}  // namespace cle
