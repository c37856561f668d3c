#pragma once

// Parametric quantile families Q(tau, theta) used as the tail structure of a
// quantile index regression.

#include <array>
#include <span>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace qir {

enum class FamilyKind { TukeyLambda, GeneralizedLambda, LocationShiftGaussian };

inline constexpr int kMaxIndexDim = 4;

struct QuantileFamily {
  FamilyKind kind = FamilyKind::TukeyLambda;

  static constexpr QuantileFamily tukey() { return {FamilyKind::TukeyLambda}; }
  static constexpr QuantileFamily generalized_lambda() { return {FamilyKind::GeneralizedLambda}; }
  static constexpr QuantileFamily gaussian() { return {FamilyKind::LocationShiftGaussian}; }

  /// Number of indices d.
  constexpr int dim() const {
    switch (kind) {
      case FamilyKind::TukeyLambda: return 3;
      case FamilyKind::GeneralizedLambda: return 4;
      case FamilyKind::LocationShiftGaussian: return 1;
    }
    return 0;
  }

  /// Tail indices (theta_3, theta_4) are the ones affected by tail-covariate scaling.
  constexpr bool is_tail_index(int j) const {
    return kind != FamilyKind::LocationShiftGaussian && j >= 2;
  }

  friend constexpr bool operator==(QuantileFamily, QuantileFamily) = default;
};

std::string_view family_name(QuantileFamily family);
/// Accepts "tukey", "gld"/"generalized-lambda", "gaussian".
QuantileFamily parse_family(std::string_view name);

/// Small fixed-capacity index vector theta (d <= 4).
struct IndexVector {
  std::array<double, kMaxIndexDim> values{};
  int size = 0;

  IndexVector() = default;
  IndexVector(std::initializer_list<double> init);

  double& operator[](int j) { return values[j]; }
  double operator[](int j) const { return values[j]; }
  std::span<const double> span() const { return {values.data(), static_cast<size_t>(size)}; }
};

/// Per-level constants shared by every family evaluation at a fixed tau.
struct Level {
  double tau = 0.5;
  double log_tau = 0.0;
  double log_1m_tau = 0.0;
  double normal_q = 0.0;

  /// Throws DomainError unless tau is in (0, 1).
  static Level at(double tau);
};

/// Throws DomainError when theta is not admissible for the family.
void check_admissible(QuantileFamily family, std::span<const double> theta);
bool is_admissible(QuantileFamily family, std::span<const double> theta) noexcept;

double quantile(QuantileFamily family, double tau, std::span<const double> theta);
Eigen::VectorXd quantile_grad_theta(QuantileFamily family, double tau, std::span<const double> theta);

/// Standard normal quantile function, absolute error below 1e-9 on (0, 1).
double std_normal_quantile(double tau);

/// Identification predicate: true iff the two index vectors give different
/// quantiles at one or more of the levels.
bool distinct_at_levels(QuantileFamily family, std::span<const double> levels,
                        std::span<const double> theta_a, std::span<const double> theta_b);

namespace detail {

// Unchecked evaluation used by the loss kernels. `grad` may be null.
double quantile_at(QuantileFamily family, const Level& level, const double* theta,
                   double* grad) noexcept;

// (exp(lambda * a) - 1) / lambda and its lambda-derivative, continuous through lambda = 0.
double box_cox_term(double lambda, double a) noexcept;
double box_cox_term_dlambda(double lambda, double a) noexcept;

inline constexpr double kLimitThreshold = 1e-8;
inline constexpr double kSeriesThreshold = 1e-4;

}  // namespace detail
}  // namespace qir
