#include "qir/qfam.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "qir/errors.hpp"

namespace qir {

std::string_view family_name(QuantileFamily family) {
  switch (family.kind) {
    case FamilyKind::TukeyLambda: return "tukey";
    case FamilyKind::GeneralizedLambda: return "gld";
    case FamilyKind::LocationShiftGaussian: return "gaussian";
  }
  return "unknown";
}

QuantileFamily parse_family(std::string_view name) {
  if (name == "tukey" || name == "tukey-lambda") return QuantileFamily::tukey();
  if (name == "gld" || name == "generalized-lambda") return QuantileFamily::generalized_lambda();
  if (name == "gaussian" || name == "location-shift-gaussian") return QuantileFamily::gaussian();
  throw DomainError("unknown quantile family '" + std::string(name) + "'");
}

IndexVector::IndexVector(std::initializer_list<double> init) {
  if (init.size() > kMaxIndexDim) throw DomainError("index vector longer than 4");
  std::copy(init.begin(), init.end(), values.begin());
  size = static_cast<int>(init.size());
}

Level Level::at(double tau) {
  if (!(tau > 0.0 && tau < 1.0)) {
    throw DomainError("quantile level must lie in (0,1), got " + std::to_string(tau));
  }
  return {tau, std::log(tau), std::log1p(-tau), std_normal_quantile(tau)};
}

bool is_admissible(QuantileFamily family, std::span<const double> theta) noexcept {
  if (static_cast<int>(theta.size()) != family.dim()) return false;
  for (double t : theta) {
    if (!std::isfinite(t)) return false;
  }
  switch (family.kind) {
    case FamilyKind::TukeyLambda: return theta[1] > 0.0 && theta[2] <= 1.0;
    case FamilyKind::GeneralizedLambda: return theta[1] > 0.0;
    case FamilyKind::LocationShiftGaussian: return true;
  }
  return false;
}

void check_admissible(QuantileFamily family, std::span<const double> theta) {
  if (static_cast<int>(theta.size()) != family.dim()) {
    throw DomainError("index vector has length " + std::to_string(theta.size()) + ", family '" +
                      std::string(family_name(family)) + "' needs " + std::to_string(family.dim()));
  }
  if (!is_admissible(family, theta)) {
    std::string msg = "inadmissible index vector for family '" + std::string(family_name(family)) + "': (";
    for (size_t j = 0; j < theta.size(); ++j) {
      msg += (j ? ", " : "") + std::to_string(theta[j]);
    }
    throw DomainError(msg + ")");
  }
}

namespace detail {

double box_cox_term(double lambda, double a) noexcept {
  if (std::abs(lambda) < kLimitThreshold) {
    return a + 0.5 * lambda * a * a;
  }
  return std::expm1(lambda * a) / lambda;
}

double box_cox_term_dlambda(double lambda, double a) noexcept {
  const double a2 = a * a;
  if (std::abs(lambda) < kSeriesThreshold) {
    return a2 / 2.0 + lambda * a2 * a / 3.0 + lambda * lambda * a2 * a2 / 8.0;
  }
  const double e = std::exp(lambda * a);
  return (lambda * a * e - (e - 1.0)) / (lambda * lambda);
}

double quantile_at(QuantileFamily family, const Level& level, const double* theta,
                   double* grad) noexcept {
  const double a = level.log_tau;
  const double b = level.log_1m_tau;
  switch (family.kind) {
    case FamilyKind::TukeyLambda: {
      const double shape = box_cox_term(theta[2], a) - box_cox_term(theta[2], b);
      if (grad) {
        grad[0] = 1.0;
        grad[1] = shape;
        grad[2] = theta[1] * (box_cox_term_dlambda(theta[2], a) - box_cox_term_dlambda(theta[2], b));
      }
      return theta[0] + theta[1] * shape;
    }
    case FamilyKind::GeneralizedLambda: {
      const double right = box_cox_term(theta[2], a);
      const double left = box_cox_term(theta[3], b);
      if (grad) {
        grad[0] = 1.0;
        grad[1] = right - left;
        grad[2] = theta[1] * box_cox_term_dlambda(theta[2], a);
        grad[3] = -theta[1] * box_cox_term_dlambda(theta[3], b);
      }
      return theta[0] + theta[1] * (right - left);
    }
    case FamilyKind::LocationShiftGaussian:
      if (grad) grad[0] = 1.0;
      return theta[0] + level.normal_q;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

}  // namespace detail

double quantile(QuantileFamily family, double tau, std::span<const double> theta) {
  const Level level = Level::at(tau);
  check_admissible(family, theta);
  return detail::quantile_at(family, level, theta.data(), nullptr);
}

Eigen::VectorXd quantile_grad_theta(QuantileFamily family, double tau, std::span<const double> theta) {
  const Level level = Level::at(tau);
  check_admissible(family, theta);
  Eigen::VectorXd grad(family.dim());
  detail::quantile_at(family, level, theta.data(), grad.data());
  return grad;
}

// Acklam's rational approximation followed by one Halley step against erfc.
double std_normal_quantile(double tau) {
  if (!(tau > 0.0 && tau < 1.0)) {
    throw DomainError("normal quantile level must lie in (0,1), got " + std::to_string(tau));
  }
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  constexpr double p_high = 1.0 - p_low;

  double x;
  if (tau < p_low) {
    const double q = std::sqrt(-2.0 * std::log(tau));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (tau <= p_high) {
    const double q = tau - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-tau));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }

  // Refine with the complementary tail so the upper levels keep relative accuracy.
  const double e = tau <= 0.5 ? 0.5 * std::erfc(-x / std::numbers::sqrt2) - tau
                              : (1.0 - tau) - 0.5 * std::erfc(x / std::numbers::sqrt2);
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  x = x - u / (1.0 + 0.5 * x * u);
  return x;
}

bool distinct_at_levels(QuantileFamily family, std::span<const double> levels,
                        std::span<const double> theta_a, std::span<const double> theta_b) {
  check_admissible(family, theta_a);
  check_admissible(family, theta_b);
  for (double tau : levels) {
    const Level level = Level::at(tau);
    const double qa = detail::quantile_at(family, level, theta_a.data(), nullptr);
    const double qb = detail::quantile_at(family, level, theta_b.data(), nullptr);
    if (std::abs(qa - qb) > 1e-10 * (1.0 + std::max(std::abs(qa), std::abs(qb)))) return true;
  }
  return false;
}

}  // namespace qir
