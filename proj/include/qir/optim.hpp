#pragma once

// Fitting procedures: subgradient descent with backtracking line search for
// the composite check loss, and composite (proximal) gradient descent for the
// SCAD/MCP-penalized objective n^-1 L_n(beta) + sum_l p_lambda(beta_l).

#include <cstdint>
#include <functional>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "qir/loss.hpp"
#include "qir/model.hpp"

namespace qir {

struct InitZeros {};
/// Uniform draws on [-radius, radius] for every coefficient.
struct InitRandom {
  double radius = 0.1;
  std::uint64_t seed = 1;
};
struct InitWarm {
  Eigen::VectorXd beta;
};
using InitSpec = std::variant<InitZeros, InitRandom, InitWarm>;

struct FitConfig {
  double bls_a = 0.3;
  double bls_b = 0.5;
  double eta0 = 1.0;
  int max_iter = 10000;
  /// Sup-norm parameter-change tolerance.
  double tol = 1e-6;
  /// Objective-change tolerance for the penalized fit.
  double objective_tol = 1e-10;
  /// Step each coefficient in proportion to 1 / mean(x~_l^2) of its covariate column
  /// (tail-scaled where applicable), i.e. descend in standardized coordinates.
  bool precondition = true;
  InitSpec init = InitZeros{};

  void validate() const;
};

enum class PenaltyKind { SCAD, MCP };

struct PenaltySpec {
  PenaltyKind kind = PenaltyKind::SCAD;
  double lambda = 0.1;
  /// SCAD a (> 2) or MCP gamma (> 1).
  double shape = 3.7;
  /// Split off mu * |beta|^2 / 2 so the remaining penalty part is convex.
  bool convexify = true;

  static PenaltySpec scad(double lambda, double a = 3.7) { return {PenaltyKind::SCAD, lambda, a, true}; }
  static PenaltySpec mcp(double lambda, double gamma = 3.0) { return {PenaltyKind::MCP, lambda, gamma, true}; }

  /// lim_{t -> 0+} p'(t) = lambda * L.
  double L() const { return 1.0; }
  double mu() const;
  void validate() const;
};

double scad_penalty(double lambda, double a, double t) noexcept;
double scad_derivative(double lambda, double a, double t) noexcept;
double mcp_penalty(double lambda, double gamma, double t) noexcept;
double mcp_derivative(double lambda, double gamma, double t) noexcept;
double penalty_value(const PenaltySpec& spec, double t) noexcept;
double penalty_derivative(const PenaltySpec& spec, double t) noexcept;

/// argmin_x (x - z)^2 / 2 + nu * p_lambda(x) with nu = eta / (1 + mu eta), as
/// four regions taken in order: zero, soft threshold, rescaled, identity.
double scad_prox(double z, double lambda, double eta, double mu, double a) noexcept;
double mcp_prox(double z, double lambda, double eta, double mu, double gamma) noexcept;
double penalty_prox(const PenaltySpec& spec, double z, double eta) noexcept;

struct FitResult {
  Eigen::VectorXd beta_hat;
  double final_loss = 0.0;
  int n_iter = 0;
  bool converged = false;
  /// Objective value at every accepted iterate, starting at the initial point.
  std::vector<double> loss_trace;
};

enum class BlsStatus { Accepted, BelowTolerance, Failed };

struct BlsOutcome {
  BlsStatus status = BlsStatus::Failed;
  Eigen::VectorXd beta_next;
  double eta = 0.0;
  double loss_next = 0.0;
};

using LossFunction = std::function<double(const Eigen::VectorXd&)>;

inline constexpr double kMinStep = 1e-16;

/// Tries eta0, b*eta0, b^2*eta0, ... and accepts the first step with
///   L(beta - eta g) - L(beta) < -a eta |g|^2.
/// With a nonempty `scaling` s the direction is s .* g and |g|^2 becomes g' (s .* g).
/// A loss function that throws EvaluationError counts as a rejection.
/// Status is BelowTolerance when the trial step sup-norm drops under
/// `step_tol` before acceptance, and Failed when eta falls below 1e-16.
BlsOutcome bls_step(const LossFunction& loss_fn, const Eigen::VectorXd& grad, const Eigen::VectorXd& beta,
                    double eta0, double a, double b, double loss_at_beta, double step_tol = 0.0,
                    const Eigen::VectorXd& scaling = Eigen::VectorXd());
BlsOutcome bls_step(const LossFunction& loss_fn, const Eigen::VectorXd& grad, const Eigen::VectorXd& beta,
                    double eta0, double a, double b);

Eigen::VectorXd initial_beta(const InitSpec& init, Eigen::Index size);

/// Per-coefficient step scales 1 / mean_i(x~_il^2); all-zero columns get 1.
Eigen::VectorXd coordinate_scales(QuantileFamily family, const Dataset& data);

/// Minimizes L_n by subgradient descent with backtracking line search.
FitResult fit_cqr(QuantileFamily family, const LinkSet& links, const Dataset& data, const LevelGrid& grid,
                  const FitConfig& config = {});

/// Minimizes n^-1 L_n(beta) + sum_l p_lambda(beta_l) by composite gradient descent.
FitResult fit_regularized(QuantileFamily family, const LinkSet& links, const Dataset& data, const LevelGrid& grid,
                          const PenaltySpec& penalty, const FitConfig& config = {});

/// The model a FitResult describes for this dataset (carries its tail scaling).
QirModel fitted_model(QuantileFamily family, const LinkSet& links, const Dataset& data, const FitResult& fit);

}  // namespace qir
