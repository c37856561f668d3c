#pragma once

// Quantile-grid construction, the PE calibration criterion, and repeated
// K-fold cross-validation over (lambda, tau_L).

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "qir/loss.hpp"
#include "qir/model.hpp"
#include "qir/optim.hpp"

namespace qir {

/// tau_k = tau_L + k (tau_U - tau_L) / (K + 1), k = 1..K (endpoints excluded).
LevelGrid quantile_grid(double tau_L, double tau_U, int K);

/// PE = M^-1 sum_m [tau_m (1 - tau_m)]^(-1/2) sqrt(n) | n^-1 sum_i I{y_i < Qhat_im} - tau_m |.
/// `predictions` is n x M, column m holding Qhat(tau*_m | x_i).
double prediction_error(std::span<const double> y, const Eigen::MatrixXd& predictions,
                        std::span<const double> target_taus);
double prediction_error(const QirModel& model, const Dataset& data, std::span<const double> target_taus);

/// lambda * sqrt(n_train / n_full).
double rescale_lambda(double lambda_cv, double n_train, double n_full);

struct TuneSpec {
  double tau_U = 0.99;
  std::vector<double> tau_L_candidates;
  int K = 10;
  std::vector<double> lambdas;
  int folds = 5;
  int repeats = 5;
  std::vector<double> target_taus;
  std::uint64_t seed = 1;
  int threads = 0;

  void validate() const;
};

/// Fits one training split; throwing marks the cell missing.
using Fitter = std::function<QirModel(QuantileFamily family, const LinkSet& links, const Dataset& train,
                                      const LevelGrid& grid, double lambda)>;

/// Penalized fit with the given SCAD/MCP shape and optimizer settings.
Fitter regularized_fitter(const PenaltySpec& shape, const FitConfig& config);

struct TuneCell {
  double tau_L = 0.0;
  double lambda = 0.0;
  int fold = 0;
  int repeat = 0;
  bool ok = false;
  double cv_loss = 0.0;
  double pe = 0.0;
};

struct TuneResult {
  double tau_L_star = 0.0;
  double lambda_star_at_tau_L_star = 0.0;
  /// Per tau_L candidate; NaN when the candidate was excluded.
  std::vector<double> lambda_star;
  std::vector<double> pe_at_lambda_star;
  /// mean_cv_loss[t * lambdas.size() + l]; NaN when every cell failed.
  std::vector<double> mean_cv_loss;
  std::vector<TuneCell> cells;
};

/// Row partition for one repeat: seeded shuffle, then contiguous blocks.
std::vector<std::vector<Eigen::Index>> fold_assignment(Eigen::Index n, int folds, std::uint64_t seed);

TuneResult cross_validate(const Dataset& data, const TuneSpec& spec, QuantileFamily family, const LinkSet& links,
                          const Fitter& fitter);

/// Tab-separated: tau_L, lambda, fold, repeat, cv_loss, pe (missing cells print "NA").
void write_tuning_report(const TuneResult& result, std::ostream& out);

}  // namespace qir
