#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cle/grid.hpp"
#include "cle/model.hpp"
#include "cle/sde.hpp"

namespace cle::cli {

inline constexpr const char* kToolName = "clekit";
inline constexpr const char* kToolVersion = "1.0.0";

/// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kOtherError = 1,
  kConfigError = 2,
  kNonConvergence = 3,
  kDomainError = 4,
  kValidationFailed = 5,
  kSimulationError = 6,
};

struct ModelConfig {
  std::string type = "network";  ///< network | linear
  std::optional<ReactionNetwork> network;
  std::vector<std::vector<double>> drift_matrix;  ///< linear: drift = offset - K q
  std::vector<double> offset;
  std::vector<std::vector<double>> noise;         ///< linear: constant h (n x m)
  Chart chart = Chart::concentration;
  bool operator==(const ModelConfig&) const = default;
};

struct InitialConfig {
  std::vector<double> q;
  std::vector<double> p;   ///< empty: zero momentum
  std::vector<double> sd;  ///< empty: fixed q; otherwise q ~ N(q, sd^2) per trajectory
  bool operator==(const InitialConfig&) const = default;
};

struct SdeConfig {
  std::string mode = "overdamped";  ///< overdamped | underdamped
  double mass = 1.0;
  SimConfig sim;
  InitialConfig initial;
  std::optional<std::vector<Axis>> histogram;  ///< cell grid for a histogram
  bool operator==(const SdeConfig&) const = default;
};

struct HodgeConfig {
  /// model | linear_gradient | rotation | constant
  std::string field = "model";
  std::vector<double> constant;
  std::vector<Axis> grid;
  double rel_tol = 1e-12;
  double quality_factor = 10.0;
  double pure_threshold = 1e-6;
  bool operator==(const HodgeConfig&) const = default;
};

struct PotentialConfig {
  std::string type = "quadratic";  ///< quadratic | from_model
  std::vector<std::vector<double>> matrix;  ///< phi = (q-c)^T M (q-c) / 2
  std::vector<double> center;
  bool operator==(const PotentialConfig&) const = default;
};

struct FokkerPlanckConfig {
  std::vector<Axis> grid;
  bool diffusion_from_model = false;
  std::vector<std::vector<double>> diffusion;  ///< constant D
  PotentialConfig potential;
  std::vector<double> tilt;                    ///< constant A = a (empty: zero)
  std::string fp_drift = "harmonic";              ///< harmonic | full (from_model only)
  std::string method = "bordered";
  bool compare_methods = true;
  double tol = 1e-10;
  std::size_t max_steps = 400;
  bool operator==(const FokkerPlanckConfig&) const = default;
};

struct MomentumCheckConfig {
  double mass = 0.01;
  SimConfig sim;
  double tolerance = 0.05;
  bool operator==(const MomentumCheckConfig&) const = default;
};

struct IdentityConfig {
  std::vector<std::size_t> points{256, 512, 1024};
  double mass = 1.0;
  std::vector<std::vector<double>> diffusion{{1.0}};
  std::vector<double> c{1.0};
  double box_sigmas = 6.0;
  std::size_t centre_points = 257;
  std::string normalization = "exact";
  double defect_threshold = 1e-3;
  double min_slope = 1.9;
  bool operator==(const IdentityConfig&) const = default;
};

struct KramersConfig {
  std::vector<double> masses{0.5, 0.1, 0.02};
  std::vector<Axis> grid;
  std::size_t batches = 20;
  double terminal_threshold = 0.08;
  std::optional<MomentumCheckConfig> momentum_check;
  IdentityConfig identities;
  bool operator==(const KramersConfig&) const = default;
};

struct PipelineConfig {
  std::size_t count = 64;   ///< cells per axis of the automatic grid
  double sigmas = 6.0;      ///< half-width in linear-noise standard deviations
  std::string fp_drift = "harmonic";
  double threshold = 0.1;
  double mean_se_bound = 3.0;
  bool write_ensemble = false;
  bool operator==(const PipelineConfig&) const = default;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::optional<ModelConfig> model;
  std::optional<SdeConfig> sde;
  std::optional<HodgeConfig> hodge;
  std::optional<FokkerPlanckConfig> fokker_planck;
  std::optional<KramersConfig> kramers;
  std::optional<PipelineConfig> pipeline;
  bool operator==(const RunConfig&) const = default;
};

/// Parses a config document. Relative model file paths resolve against
/// `base_dir`; the network is read at parse time. Unknown keys, wrong types
/// and missing files throw ConfigError.
RunConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = ".");
RunConfig load_config(const std::filesystem::path& path);
/// Fully resolved echo (networks inline, every default spelled out).
nlohmann::ordered_json to_json(const RunConfig& config);

/// Reads a reaction network document: species, volume, reactions.
ReactionNetwork parse_network(const nlohmann::json& doc);
nlohmann::ordered_json network_to_json(const ReactionNetwork& network);

SDESystem build_model(const ModelConfig& model);

/// Stage seed: splitmix64 of the top-level seed mixed with a hash of the stage name.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stage);

struct RunOptions {
  std::string command;            ///< simulate | decompose | fpsolve | validate-limit | pipeline
  std::filesystem::path config;
  std::filesystem::path out = "out";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  bool dry_run = false;
  bool identities = false;        ///< validate-limit: identity checks only
};

struct RunResult {
  int exit_code = kOk;
  std::string message;
  nlohmann::ordered_json manifest;
};

/// Runs one command end to end: loads the config, applies overrides, runs the
/// stages, writes outputs, `manifest.json` (deterministic) and
/// `timings.json` (wall-clock, not deterministic). Never throws; errors map
/// to exit codes and are recorded in the manifest when the output directory
/// is writable.
RunResult run(const RunOptions& options);

}  // namespace cle::cli
