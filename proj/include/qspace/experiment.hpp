// Declarative experiment configuration and the end-to-end runners behind the CLI.
#pragma once

#include "qspace/design.hpp"
#include "qspace/metrics.hpp"
#include "qspace/prior.hpp"
#include "qspace/sim.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace qspace {

struct SimConfig {
  std::uint64_t seed = 1;
  int max_degree = 8;
  int n_train = 200;
  int n_test = 100;
  int dense_size = 90;
  NoiseSpec noise;
  std::vector<int> budgets{5, 10, 15, 20, 30, 45, 60, 90};
  RankRule rank_rule = RankRule::variance(0.90);
  GenerativeConfig generative;
  std::vector<double> lambda_grid = default_lambda_grid();
  int candidates = 321;
  int esr_iterations = 2000;
  /// Estimate sigma^2 from simulated b=0 repeats instead of using the true value.
  bool estimate_noise = true;
  int b0_repeats = 18;
  int b0_voxels = 1000;
  PeakOptions peaks;
  std::array<int, 3> field_dims{1, 1, 1};
  /// Rotation of the generative mean directions per voxel step (prior-build only).
  double field_rotation_deg = 10.0;
  int threads = 1;
  std::filesystem::path output_dir = "out";

  /// Throws ValidationError on the first violated constraint.
  void validate() const;
};

SimConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const SimConfig& config);
SimConfig load_config(const std::filesystem::path& path);

struct MetricRow {
  int budget = 0;
  std::string method;
  double mise = 0.0;
  double pfp = 0.0;
  double ea = 0.0;
  int n_test = 0;
  std::uint64_t seed = 0;
  double peak_match_rate = 0.0;
  int empty_estimates = 0;
  int gcv_fallbacks = 0;
};

struct ExperimentResult {
  std::vector<MetricRow> rows;  // per budget: CU-GDS then SHLS-ESR
  std::vector<Directiond> dense_design;
  std::vector<int> gds_selected;  // indices into the candidate set, for the largest budget
  std::vector<double> gds_objective;
  std::vector<Directiond> candidates;
  std::vector<std::vector<Directiond>> esr_designs;  // one per budget
  double noise_variance = 0.0;
  int prior_rank = 0;
  double seconds = 0.0;

  const MetricRow& row(int budget, const std::string& method) const;
};

inline constexpr const char* kMethodCu = "CU-GDS";
inline constexpr const char* kMethodShls = "SHLS-ESR";

/// Runs fn(i) for i in [0, n) on up to `threads` workers.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

/// QSPACE_THREADS when set, otherwise `requested`.
int resolve_threads(int requested);

/// Prior from the dense training protocol: ESR dense design, noisy observation,
/// SHLS+GCV fits, empirical moments and eigentruncation.
struct TrainedPrior {
  VoxelPriord prior;
  std::vector<Vectord> fits;
  std::vector<Directiond> dense_design;
};
TrainedPrior train_prior(const SimConfig& config, const Simulator& simulator, std::uint64_t seed);

/// sigma^2 from simulated b=0 repeats, or the configured value.
double prior_noise_variance(const SimConfig& config, std::uint64_t seed);

ExperimentResult run_simulation(const SimConfig& config);

/// metrics.csv with columns budget,method,mise,pfp,ea,n_test,seed,peak_match_rate.
std::string metrics_csv(const ExperimentResult& result);

/// Writes metrics.csv, designs/*.txt and summary.json into `dir`.
void write_experiment(const ExperimentResult& result, const SimConfig& config,
                      const std::filesystem::path& dir);

/// "x y z" per line, 9 significant digits.
std::string gradient_table(const std::vector<Directiond>& directions);
void write_gradient_table(const std::vector<Directiond>& directions, const std::filesystem::path& path);
std::vector<Directiond> read_gradient_table(const std::filesystem::path& path);

/// Prior field over config.field_dims; each voxel's cohort uses the generative
/// directions rotated about z by field_rotation_deg * (x + y + z).
PriorField build_prior_field(const SimConfig& config);

/// Single-voxel field from a coefficient CSV (one subject per row).
PriorField prior_field_from_cohort(const std::vector<Vectord>& fits, const RankRule& rule,
                                   double noise_variance);

enum class DesignMode { Single, Region };

struct DesignRequest {
  DesignMode mode = DesignMode::Single;
  int budget = 10;
  int candidates = 321;
  std::optional<Eigen::Vector3d> query;  // single mode; default is the first voxel
};

struct DesignReport {
  std::vector<Directiond> directions;
  std::vector<int> selected;
  std::vector<double> objective;
  BoundCertificate<double> bound;
  nlohmann::json to_json() const;
};

DesignReport run_design(const PriorField& field, const DesignRequest& request);

}  // namespace qspace
