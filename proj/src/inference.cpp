#include "qir/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "qir/errors.hpp"

namespace qir {

double density_at_quantile(const QirModel& model, std::span<const double> x, double tau, double h) {
  if (!(h > 0.0)) throw DomainError("bandwidth must be positive");
  if (!(tau - h > 0.0 && tau + h < 1.0)) throw DomainError("tau +/- h must stay inside (0,1)");
  const double spread = predict_quantile(model, x, tau + h) - predict_quantile(model, x, tau - h);
  if (!(spread > 1e-12)) {
    throw DegenerateDensityError("quantile curve is flat around tau = " + std::to_string(tau));
  }
  return 2.0 * h / spread;
}

double default_bandwidth(Eigen::Index n, const LevelGrid& grid) {
  double h = std::pow(static_cast<double>(n), -1.0 / 3.0);
  h = std::min(h, (1.0 - grid.taus().back()) / 2.0);
  h = std::min(h, grid.taus().front() / 2.0);
  return h;
}

CovarianceEstimate estimate_sandwich(const QirModel& model, const Dataset& data, const LevelGrid& grid, double h) {
  if (data.n() == 0) throw DomainError("dataset is empty");
  const Eigen::Index dp = model.beta().size();
  const int K = grid.K();
  const auto& taus = grid.taus();

  Eigen::MatrixXd weights(K, K);
  for (int k = 0; k < K; ++k) {
    for (int m = 0; m < K; ++m) {
      weights(k, m) = std::min(taus[k], taus[m]) * (1.0 - std::max(taus[k], taus[m]));
    }
  }

  CovarianceEstimate out;
  out.n = data.n();
  out.bandwidth = h;
  out.omega0 = Eigen::MatrixXd::Zero(dp, dp);
  out.omega1 = Eigen::MatrixXd::Zero(dp, dp);
  Eigen::MatrixXd grads(dp, K);
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    const auto x = data.row(i);
    for (int k = 0; k < K; ++k) {
      grads.col(k) = quantile_grad_beta(model, x, taus[k]);
      const double f = density_at_quantile(model, x, taus[k], h);
      out.omega1.noalias() += f * grads.col(k) * grads.col(k).transpose();
    }
    out.omega0.noalias() += grads * weights * grads.transpose();
  }
  const double inv_n = 1.0 / static_cast<double>(data.n());
  out.omega0 *= inv_n;
  out.omega1 *= inv_n;
  out.omega0 = 0.5 * (out.omega0 + out.omega0.transpose()).eval();
  out.omega1 = 0.5 * (out.omega1 + out.omega1.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(out.omega1);
  const Eigen::VectorXd& ev = eig.eigenvalues();
  const double ev_max = ev.maxCoeff();
  const double ev_min = ev.minCoeff();
  out.omega1_condition = ev_min > 0.0 ? ev_max / ev_min : std::numeric_limits<double>::infinity();
  if (!(ev_max > 0.0) || out.omega1_condition > 1e12) {
    throw SingularityError("density-weighted Hessian is singular (condition " +
                               std::to_string(out.omega1_condition) + ", smallest eigenvalue " +
                               std::to_string(ev_min) + ")",
                           ev_min);
  }
  const Eigen::VectorXd inv_ev = ev.cwiseMax(1e-12 * ev_max).cwiseInverse();
  const Eigen::MatrixXd& V = eig.eigenvectors();
  const Eigen::MatrixXd omega1_inv = V * inv_ev.asDiagonal() * V.transpose();
  out.sandwich = omega1_inv * out.omega0 * omega1_inv;
  out.sandwich = 0.5 * (out.sandwich + out.sandwich.transpose()).eval();
  return out;
}

Interval predict_quantile_ci(const QirModel& model, const CovarianceEstimate& cov, const Dataset& data,
                             std::span<const double> x, double tau_star, double level, DeltaSource source) {
  if (!(level >= 0.0 && level < 1.0)) throw DomainError("confidence level must lie in [0,1)");
  if (cov.sandwich.rows() != model.beta().size()) throw DomainError("covariance does not match the model");
  Interval out;
  out.center = predict_quantile(model, x, tau_star);
  if (level == 0.0) {
    out.lower = out.upper = out.center;
    return out;
  }
  Eigen::VectorXd delta;
  if (source == DeltaSource::QueryPoint) {
    delta = quantile_grad_beta(model, x, tau_star);
  } else {
    if (data.n() == 0) throw DomainError("sample-average delta needs a nonempty dataset");
    delta = Eigen::VectorXd::Zero(model.beta().size());
    for (Eigen::Index i = 0; i < data.n(); ++i) delta += quantile_grad_beta(model, data.row(i), tau_star);
    delta /= static_cast<double>(data.n());
  }
  const double variance = std::max(0.0, delta.dot(cov.sandwich * delta));
  const double z = std_normal_quantile(0.5 * (1.0 + level));
  const double half = z * std::sqrt(variance / static_cast<double>(cov.n));
  out.lower = out.center - half;
  out.upper = out.center + half;
  return out;
}

}  // namespace qir
