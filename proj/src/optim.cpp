#include "qir/optim.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "qir/errors.hpp"

namespace qir {

void FitConfig::validate() const {
  if (!(bls_a > 0.0 && bls_a < 1.0)) throw DomainError("line-search parameter a must lie in (0,1)");
  if (!(bls_b > 0.0 && bls_b < 1.0)) throw DomainError("line-search parameter b must lie in (0,1)");
  if (!(eta0 > 0.0)) throw DomainError("initial step size must be positive");
  if (!(tol > 0.0) || !(objective_tol > 0.0)) throw DomainError("tolerances must be positive");
  if (max_iter < 0) throw DomainError("max_iter must be nonnegative");
}

double PenaltySpec::mu() const {
  if (!convexify) return 0.0;
  return kind == PenaltyKind::SCAD ? 1.0 / (shape - 1.0) : 1.0 / shape;
}

void PenaltySpec::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw DomainError("penalty lambda must be nonnegative");
  if (kind == PenaltyKind::SCAD && !(shape > 2.0)) throw DomainError("SCAD requires a > 2");
  if (kind == PenaltyKind::MCP && !(shape > 1.0)) throw DomainError("MCP requires gamma > 1");
}

double scad_penalty(double lambda, double a, double t) noexcept {
  const double u = std::abs(t);
  if (u <= lambda) return lambda * u;
  if (u <= a * lambda) return (2.0 * a * lambda * u - u * u - lambda * lambda) / (2.0 * (a - 1.0));
  return lambda * lambda * (a + 1.0) / 2.0;
}

double scad_derivative(double lambda, double a, double t) noexcept {
  const double u = std::abs(t);
  const double s = (t > 0.0) - (t < 0.0);
  if (u <= lambda) return s * lambda;
  if (u <= a * lambda) return s * (a * lambda - u) / (a - 1.0);
  return 0.0;
}

double mcp_penalty(double lambda, double gamma, double t) noexcept {
  const double u = std::abs(t);
  if (u <= gamma * lambda) return lambda * u - u * u / (2.0 * gamma);
  return gamma * lambda * lambda / 2.0;
}

double mcp_derivative(double lambda, double gamma, double t) noexcept {
  const double u = std::abs(t);
  const double s = (t > 0.0) - (t < 0.0);
  if (u <= gamma * lambda) return s * (lambda - u / gamma);
  return 0.0;
}

double penalty_value(const PenaltySpec& spec, double t) noexcept {
  return spec.kind == PenaltyKind::SCAD ? scad_penalty(spec.lambda, spec.shape, t)
                                        : mcp_penalty(spec.lambda, spec.shape, t);
}

double penalty_derivative(const PenaltySpec& spec, double t) noexcept {
  return spec.kind == PenaltyKind::SCAD ? scad_derivative(spec.lambda, spec.shape, t)
                                        : mcp_derivative(spec.lambda, spec.shape, t);
}

double scad_prox(double z, double lambda, double eta, double mu, double a) noexcept {
  const double nu = eta / (1.0 + mu * eta);
  const double u = std::abs(z);
  const double s = z < 0.0 ? -1.0 : 1.0;
  if (u <= nu * lambda) return 0.0;
  if (u <= (nu + 1.0) * lambda) return z - s * nu * lambda;
  if (u <= a * lambda) return (z - s * a * nu * lambda / (a - 1.0)) / (1.0 - nu / (a - 1.0));
  return z;
}

double mcp_prox(double z, double lambda, double eta, double mu, double gamma) noexcept {
  const double nu = eta / (1.0 + mu * eta);
  const double u = std::abs(z);
  const double s = z < 0.0 ? -1.0 : 1.0;
  if (u <= nu * lambda) return 0.0;
  if (u <= gamma * lambda) return s * (u - nu * lambda) / (1.0 - nu / gamma);
  return z;
}

double penalty_prox(const PenaltySpec& spec, double z, double eta) noexcept {
  return spec.kind == PenaltyKind::SCAD ? scad_prox(z, spec.lambda, eta, spec.mu(), spec.shape)
                                        : mcp_prox(z, spec.lambda, eta, spec.mu(), spec.shape);
}

namespace {

double safe_loss(const LossFunction& loss_fn, const Eigen::VectorXd& beta) {
  try {
    const double v = loss_fn(beta);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  } catch (const EvaluationError&) {
    return std::numeric_limits<double>::infinity();
  }
}

}  // namespace

BlsOutcome bls_step(const LossFunction& loss_fn, const Eigen::VectorXd& grad, const Eigen::VectorXd& beta,
                    double eta0, double a, double b, double loss_at_beta, double step_tol,
                    const Eigen::VectorXd& scaling) {
  if (scaling.size() != 0 && scaling.size() != grad.size()) throw DomainError("scaling has the wrong length");
  const Eigen::VectorXd dir = scaling.size() ? Eigen::VectorXd(scaling.cwiseProduct(grad)) : grad;
  const double g2 = grad.dot(dir);
  if (!(g2 > 0.0)) throw DomainError("line search needs a nonzero gradient");
  const double d_inf = dir.lpNorm<Eigen::Infinity>();
  BlsOutcome out;
  for (double eta = eta0; eta >= kMinStep; eta *= b) {
    if (eta * d_inf < step_tol) {
      out.status = BlsStatus::BelowTolerance;
      out.eta = eta;
      return out;
    }
    Eigen::VectorXd trial = beta - eta * dir;
    const double value = safe_loss(loss_fn, trial);
    if (value - loss_at_beta < -a * eta * g2) {
      out.status = BlsStatus::Accepted;
      out.beta_next = std::move(trial);
      out.eta = eta;
      out.loss_next = value;
      return out;
    }
  }
  out.status = BlsStatus::Failed;
  return out;
}

BlsOutcome bls_step(const LossFunction& loss_fn, const Eigen::VectorXd& grad, const Eigen::VectorXd& beta,
                    double eta0, double a, double b) {
  return bls_step(loss_fn, grad, beta, eta0, a, b, loss_fn(beta));
}

Eigen::VectorXd initial_beta(const InitSpec& init, Eigen::Index size) {
  if (const auto* warm = std::get_if<InitWarm>(&init)) {
    if (warm->beta.size() != size) throw DomainError("warm start has the wrong length");
    return warm->beta;
  }
  if (const auto* rnd = std::get_if<InitRandom>(&init)) {
    std::mt19937_64 gen(rnd->seed);
    std::uniform_real_distribution<double> unif(-rnd->radius, rnd->radius);
    Eigen::VectorXd beta(size);
    for (Eigen::Index l = 0; l < size; ++l) beta(l) = unif(gen);
    return beta;
  }
  return Eigen::VectorXd::Zero(size);
}

Eigen::VectorXd coordinate_scales(QuantileFamily family, const Dataset& data) {
  const Eigen::Index p = data.p();
  const int d = family.dim();
  Eigen::VectorXd out = Eigen::VectorXd::Ones(d * p);
  if (data.n() == 0) return out;
  for (int j = 0; j < d; ++j) {
    const bool scaled = data.tail_scaling && family.is_tail_index(j);
    for (Eigen::Index l = 0; l < p; ++l) {
      double ms = 0.0;
      for (Eigen::Index i = 0; i < data.n(); ++i) {
        const double v = scaled ? data.tail_scaling->apply(l, data.X(i, l)) : data.X(i, l);
        ms += v * v;
      }
      ms /= static_cast<double>(data.n());
      if (ms > 0.0) out(j * p + l) = 1.0 / ms;
    }
  }
  return out;
}

QirModel fitted_model(QuantileFamily family, const LinkSet& links, const Dataset& data, const FitResult& fit) {
  return QirModel(family, links, data.p(), fit.beta_hat, data.tail_scaling);
}

FitResult fit_cqr(QuantileFamily family, const LinkSet& links, const Dataset& data, const LevelGrid& grid,
                  const FitConfig& config) {
  config.validate();
  if (data.n() == 0) throw DomainError("cannot fit an empty dataset");
  if (family.kind == FamilyKind::TukeyLambda && grid.K() < 3) {
    throw DomainError("the Tukey lambda family needs at least 3 quantile levels for identification");
  }
  const QirModel base(family, links, data.p(), initial_beta(config.init, family.dim() * data.p()),
                      data.tail_scaling);
  const LossFunction loss_fn = [&](const Eigen::VectorXd& b) {
    return composite_loss(base.with_beta(b), data, grid);
  };

  const Eigen::VectorXd scaling =
      config.precondition ? coordinate_scales(family, data) : Eigen::VectorXd::Ones(base.beta().size());

  FitResult result;
  Eigen::VectorXd beta = base.beta();
  LossAndGradient current = composite_loss_and_subgradient(base, data, grid);
  result.loss_trace.push_back(current.loss);

  // Each search restarts one notch above the last accepted step, capped at eta0.
  double eta_start = config.eta0;
  for (int it = 0; it < config.max_iter; ++it) {
    if (current.grad.squaredNorm() == 0.0) {
      result.converged = true;
      break;
    }
    BlsOutcome step = bls_step(loss_fn, current.grad, beta, eta_start, config.bls_a, config.bls_b, current.loss,
                               config.tol, scaling);
    if (step.status == BlsStatus::BelowTolerance) {
      result.converged = true;
      break;
    }
    if (step.status == BlsStatus::Failed) {
      throw OptimizationError("line search failed at iteration " + std::to_string(it) +
                              ": no step above 1e-16 decreases the loss");
    }
    const double step_norm = step.eta * scaling.cwiseProduct(current.grad).lpNorm<Eigen::Infinity>();
    beta = std::move(step.beta_next);
    result.loss_trace.push_back(step.loss_next);
    result.n_iter = it + 1;
    if (step_norm < config.tol) {
      current.loss = step.loss_next;
      result.converged = true;
      break;
    }
    eta_start = std::min(config.eta0, step.eta / config.bls_b);
    current = composite_loss_and_subgradient(base.with_beta(beta), data, grid);
  }
  result.beta_hat = std::move(beta);
  result.final_loss = result.loss_trace.back();
  return result;
}

FitResult fit_regularized(QuantileFamily family, const LinkSet& links, const Dataset& data, const LevelGrid& grid,
                          const PenaltySpec& penalty, const FitConfig& config) {
  config.validate();
  penalty.validate();
  if (data.n() == 0) throw DomainError("cannot fit an empty dataset");
  if (family.kind == FamilyKind::TukeyLambda && grid.K() < 3) {
    throw DomainError("the Tukey lambda family needs at least 3 quantile levels for identification");
  }
  const double inv_n = 1.0 / static_cast<double>(data.n());
  const double mu = penalty.mu();
  const QirModel base(family, links, data.p(), initial_beta(config.init, family.dim() * data.p()),
                      data.tail_scaling);

  auto penalty_sum = [&](const Eigen::VectorXd& b) {
    double s = 0.0;
    for (Eigen::Index l = 0; l < b.size(); ++l) s += penalty_value(penalty, b(l));
    return s;
  };
  auto objective = [&](const Eigen::VectorXd& b) {
    try {
      const double v = inv_n * composite_loss(base.with_beta(b), data, grid) + penalty_sum(b);
      return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    } catch (const EvaluationError&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  const Eigen::VectorXd scaling =
      config.precondition ? coordinate_scales(family, data) : Eigen::VectorXd::Ones(base.beta().size());

  FitResult result;
  Eigen::VectorXd beta = base.beta();
  LossAndGradient lg = composite_loss_and_subgradient(base, data, grid);
  double f_current = inv_n * lg.loss + penalty_sum(beta);
  result.loss_trace.push_back(f_current);

  double eta_start = config.eta0;
  for (int it = 0; it < config.max_iter; ++it) {
    // Gradient of the smooth part n^-1 L_n - mu |beta|^2 / 2.
    const Eigen::VectorXd smooth_grad = inv_n * lg.grad - mu * beta;
    bool accepted = false;
    bool stalled = false;
    Eigen::VectorXd next;
    double f_next = 0.0;
    double eta = eta_start;
    for (; eta >= kMinStep; eta *= config.bls_b) {
      next.resize(beta.size());
      double mapped = 0.0;
      for (Eigen::Index l = 0; l < beta.size(); ++l) {
        const double eta_l = eta * scaling(l);
        const double z = (beta(l) - eta_l * smooth_grad(l)) / (1.0 + mu * eta_l);
        next(l) = penalty_prox(penalty, z, eta_l);
        mapped += (beta(l) - next(l)) * (beta(l) - next(l)) / eta_l;
      }
      const double move_inf = (beta - next).lpNorm<Eigen::Infinity>();
      if (move_inf < config.tol * 1e-3) {
        stalled = true;
        break;
      }
      f_next = objective(next);
      // Same sufficient-decrease rule with the gradient mapping (beta - next) / eta.
      if (f_next - f_current < -config.bls_a * mapped) {
        accepted = true;
        break;
      }
    }
    if (stalled) {
      result.converged = true;
      break;
    }
    if (!accepted) {
      throw OptimizationError("composite line search failed at iteration " + std::to_string(it));
    }
    const double change = f_current - f_next;
    beta = std::move(next);
    f_current = f_next;
    result.loss_trace.push_back(f_current);
    result.n_iter = it + 1;
    if (change < config.objective_tol) {
      result.converged = true;
      break;
    }
    eta_start = std::min(config.eta0, eta / config.bls_b);
    lg = composite_loss_and_subgradient(base.with_beta(beta), data, grid);
  }
  result.beta_hat = std::move(beta);
  result.final_loss = f_current;
  return result;
}

}  // namespace qir
