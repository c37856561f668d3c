#pragma once

// Asymptotic inference for the unpenalized CQR estimator: sandwich covariance
// Omega1^-1 Omega0 Omega1^-1 and delta-method intervals for predicted quantiles.

#include <span>

#include <Eigen/Dense>

#include "qir/loss.hpp"
#include "qir/model.hpp"

namespace qir {

struct CovarianceEstimate {
  Eigen::MatrixXd omega0;
  Eigen::MatrixXd omega1;
  /// Asymptotic covariance of sqrt(n) (beta_hat - beta0).
  Eigen::MatrixXd sandwich;
  Eigen::Index n = 0;
  double bandwidth = 0.0;
  double omega1_condition = 0.0;
};

/// Difference-quotient density 2h / (Q(tau+h) - Q(tau-h)) from the model's own quantile curve.
double density_at_quantile(const QirModel& model, std::span<const double> x, double tau, double h);

/// n^(-1/3), clipped so that both tau_1 - h and tau_K + h stay at least halfway inside (0,1).
double default_bandwidth(Eigen::Index n, const LevelGrid& grid);

/// Throws SingularityError when Omega1 has condition number above 1e12 or a
/// nonpositive eigenvalue.
CovarianceEstimate estimate_sandwich(const QirModel& model, const Dataset& data, const LevelGrid& grid, double h);

/// Where the gradient delta = dQ(tau*, theta(X, beta)) / d beta is taken:
/// averaged over the dataset rows, or at the query covariate itself.
enum class DeltaSource { SampleAverage, QueryPoint };

struct Interval {
  double lower = 0.0;
  double center = 0.0;
  double upper = 0.0;
};

/// Center Q(tau*, theta(x, beta_hat)); half-width z_{(1+level)/2} sqrt(delta' Sigma delta / n).
Interval predict_quantile_ci(const QirModel& model, const CovarianceEstimate& cov, const Dataset& data,
                             std::span<const double> x, double tau_star, double level,
                             DeltaSource source = DeltaSource::SampleAverage);

}  // namespace qir
