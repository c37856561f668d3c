#pragma once

// Check loss and the composite (CQR) objective
//   L_n(beta) = sum_k sum_i rho_{tau_k}(y_i - Q(tau_k, theta(x_i, beta))).
//
// The top-level kernels split rows into fixed-size chunks evaluated under
// OpenMP and reduce the chunk partials in chunk order, so results do not
// depend on the thread count. `serial::` holds the straightforward reference
// used by the tests and the benchmark.

#include <vector>

#include <Eigen/Dense>

#include "qir/model.hpp"
#include "qir/qfam.hpp"

namespace qir {

class LevelGrid {
 public:
  /// Levels must be nondecreasing, inside (0,1), and nonempty.
  explicit LevelGrid(std::vector<double> taus);

  int K() const { return static_cast<int>(taus_.size()); }
  const std::vector<double>& taus() const { return taus_; }
  const std::vector<Level>& levels() const { return levels_; }

 private:
  std::vector<double> taus_;
  std::vector<Level> levels_;
};

/// rho_tau(u) = u (tau - I(u < 0)).
inline double check_loss(double tau, double u) noexcept { return u < 0.0 ? u * (tau - 1.0) : u * tau; }
/// psi_tau(u) = tau - I(u < 0); psi = tau at u = 0.
inline double check_score(double tau, double u) noexcept { return u < 0.0 ? tau - 1.0 : tau; }

struct LossAndGradient {
  double loss = 0.0;
  Eigen::VectorXd grad;
};

/// Unnormalized L_n. Throws EvaluationError naming the first row with inadmissible indices.
double composite_loss(const QirModel& model, const Dataset& data, const LevelGrid& grid);
Eigen::VectorXd composite_subgradient(const QirModel& model, const Dataset& data, const LevelGrid& grid);
LossAndGradient composite_loss_and_subgradient(const QirModel& model, const Dataset& data, const LevelGrid& grid);

namespace serial {

double composite_loss(const QirModel& model, const Dataset& data, const LevelGrid& grid);
Eigen::VectorXd composite_subgradient(const QirModel& model, const Dataset& data, const LevelGrid& grid);

}  // namespace serial

/// Rows per reduction chunk in the parallel kernels.
inline constexpr Eigen::Index kLossChunkRows = 256;

}  // namespace qir
