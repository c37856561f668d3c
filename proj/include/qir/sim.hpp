#pragma once

// Data-generating process Y = Q(U, theta(X, beta0)), U ~ Uniform(0,1), and the
// Monte Carlo experiment runners for the low- and high-dimensional studies.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "qir/inference.hpp"
#include "qir/model.hpp"
#include "qir/optim.hpp"

namespace qir {

struct SimScenario {
  QuantileFamily family = QuantileFamily::tukey();
  LinkSet links = default_links(QuantileFamily::tukey());
  Eigen::Index p = 3;
  Eigen::VectorXd beta0;
  bool tail_scaling = false;
  Eigen::Index n = 500;
  std::uint64_t seed = 1;

  /// beta01 = (1, 0.5, -1), beta02 = (1, 0.5, -1), beta03 = (1, -1, 1).
  static SimScenario lowdim(Eigen::Index n, std::uint64_t seed);
  /// The low-dimensional coefficients padded with zeros to length p per block.
  static SimScenario highdim(Eigen::Index p, Eigen::Index n, std::uint64_t seed);

  QirModel true_model(std::optional<TailScaling> scaling = std::nullopt) const;
};

/// Counter-based stream derivation (splitmix64 over master, stream, index).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index);

/// Rows are (1, N(0,1), ..., N(0,1)); deterministic in scenario.seed.
Dataset generate_sample(const SimScenario& scenario);
double true_quantile(const SimScenario& scenario, std::span<const double> x, double tau,
                     const std::optional<TailScaling>& scaling = std::nullopt);
/// Squared prediction error against the true conditional quantile.
double pes(const QirModel& model, const SimScenario& scenario, std::span<const double> x, double tau_star);

struct SelectionMetrics {
  int size = 0;
  bool hit_ai = false;
  bool hit_a = false;
  bool hit_i = false;
  double fp_rate = 0.0;
  double fn_rate = 0.0;
};

/// `size` counts every selected coefficient; rates are percentages.
SelectionMetrics selection_metrics(const Eigen::VectorXd& beta_hat, const Eigen::VectorXd& beta0,
                                   double zero_tol = 1e-6);

// ---------------------------------------------------------------------------
// Experiments

struct QuantileRange {
  double tau_L = 0.5;
  double tau_U = 0.99;
};

struct LowDimConfig {
  std::vector<Eigen::Index> sample_sizes{500, 1000, 2000};
  std::vector<QuantileRange> ranges{{0.5, 0.99}, {0.7, 0.99}, {0.9, 0.99}};
  int K = 10;
  int replications = 100;
  std::uint64_t master_seed = 20240501;
  std::vector<std::vector<double>> x_points{{1.0, 0.1, -0.2}, {1.0, 0.0, 0.0}};
  std::vector<double> tau_stars{0.991, 0.995};
  bool tail_scaling = false;
  FitConfig fit;
  /// Also compute sandwich covariance and delta-method intervals per replication.
  bool inference = false;
  double ci_level = 0.95;
  DeltaSource delta_source = DeltaSource::SampleAverage;
  int threads = 0;
};

struct HighDimConfig {
  Eigen::Index p = 50;
  std::vector<double> c_values{10, 30, 50};
  std::vector<QuantileRange> ranges{{0.5, 0.99}};
  int K = 10;
  int replications = 50;
  std::uint64_t master_seed = 20240502;
  /// lambda = multiplier * sqrt(log p / n); fitted from the largest down with warm starts.
  std::vector<double> lambda_multipliers;
  int validation_factor = 5;
  double zero_tol = 1e-6;
  std::vector<std::vector<double>> x_points;
  std::vector<double> tau_stars{0.991, 0.995};
  bool tail_scaling = false;
  FitConfig fit;
  double scad_a = 3.7;
  int threads = 0;

  /// Fills defaults that depend on p (lambda multipliers, padded x points).
  void complete();
};

struct ReplicationRecord {
  Eigen::Index n = 0;
  double c = 0.0;
  int range = 0;
  int replication = 0;
  bool failed = false;
  std::string error;
  bool converged = false;
  Eigen::VectorXd beta_hat;
  /// pes[x * tau_stars.size() + t].
  std::vector<double> pes;
  double lambda = 0.0;
  double error_norm = 0.0;
  SelectionMetrics selection;
  // Inference (low-dimensional runs with inference enabled).
  std::vector<double> ci_lower;
  std::vector<double> ci_upper;
  std::vector<bool> covered;
  Eigen::MatrixXd sandwich;
};

struct CellAggregate {
  Eigen::Index n = 0;
  double c = 0.0;
  int range = 0;
  int completed = 0;
  int failed = 0;
  std::vector<double> pes_mean;
  std::vector<double> pes_sd;
  // High-dimensional.
  double size_mean = 0.0, size_sd = 0.0;
  double p_ai = 0.0, p_a = 0.0, p_i = 0.0;
  double fp_mean = 0.0, fp_sd = 0.0, fn_mean = 0.0, fn_sd = 0.0;
  double error_median = 0.0;
  double sqrt_rate = 0.0;
  // Inference.
  std::vector<double> coverage;
};

struct ExperimentReport {
  std::string kind;
  std::vector<QuantileRange> ranges;
  std::vector<std::vector<double>> x_points;
  std::vector<double> tau_stars;
  std::vector<double> true_values;  // true_values[x * tau_stars.size() + t]
  std::vector<ReplicationRecord> records;
  std::vector<CellAggregate> cells;
};

ExperimentReport run_lowdim_experiment(const LowDimConfig& config);
ExperimentReport run_highdim_experiment(HighDimConfig config);

/// Recomputes `cells` from `records`.
std::vector<CellAggregate> aggregate_records(const ExperimentReport& report, bool highdim, Eigen::Index p,
                                             double s);

LowDimConfig lowdim_config_from_json(const nlohmann::json& doc);
HighDimConfig highdim_config_from_json(const nlohmann::json& doc);

/// Writes table1/table2/table3/figure2/coverage files into `dir`; returns the paths written.
std::vector<std::filesystem::path> write_report(const ExperimentReport& report, const std::filesystem::path& dir);

}  // namespace qir
