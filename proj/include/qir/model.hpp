#pragma once

// Quantile index regression model: theta_j(x, beta) = g_j(x' beta_j) plugged
// into a parametric quantile family.

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "qir/qfam.hpp"

namespace qir {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class LinkKind { Identity, Softplus, OneMinusSoftplus };

std::string_view link_name(LinkKind link);
LinkKind parse_link(std::string_view name);

double softplus(double t) noexcept;
double sigmoid(double t) noexcept;
/// g(t).
double link_value(LinkKind link, double t) noexcept;
/// g'(t).
double link_derivative(LinkKind link, double t) noexcept;

using LinkSet = std::vector<LinkKind>;

/// Identity / softplus / 1 - softplus for Tukey, the analogue for the
/// generalized lambda, and identity for the Gaussian location shift.
LinkSet default_links(QuantileFamily family);

/// Per-covariate affine map x -> scale * x + offset, applied only inside the
/// tail indices. Constant columns (the intercept) are left untouched.
struct TailScaling {
  std::vector<double> scale;
  std::vector<double> offset;

  /// Min-max map of every non-constant column of X onto [-0.5, 0.5].
  static TailScaling fit_min_max(const RowMatrix& X);
  double apply(size_t col, double x) const { return scale[col] * x + offset[col]; }

  friend bool operator==(const TailScaling&, const TailScaling&) = default;
};

struct Dataset {
  Eigen::VectorXd y;
  RowMatrix X;
  std::optional<TailScaling> tail_scaling;

  Dataset() = default;
  /// Validates shapes and finiteness.
  Dataset(Eigen::VectorXd y, RowMatrix X, std::optional<TailScaling> tail_scaling = std::nullopt);

  Eigen::Index n() const { return y.size(); }
  Eigen::Index p() const { return X.cols(); }
  std::span<const double> row(Eigen::Index i) const {
    return {X.data() + i * X.cols(), static_cast<size_t>(X.cols())};
  }
  /// Rows selected by index, keeping the tail-scaling record.
  Dataset subset(std::span<const Eigen::Index> rows) const;
};

class QirModel {
 public:
  QirModel(QuantileFamily family, LinkSet links, Eigen::Index p, Eigen::VectorXd beta,
           std::optional<TailScaling> tail_scaling = std::nullopt);

  QuantileFamily family() const { return family_; }
  const LinkSet& links() const { return links_; }
  int d() const { return family_.dim(); }
  Eigen::Index p() const { return p_; }
  const Eigen::VectorXd& beta() const { return beta_; }
  /// Block beta_j, j = 0..d-1.
  auto block(int j) const { return beta_.segment(j * p_, p_); }
  const std::optional<TailScaling>& tail_scaling() const { return tail_scaling_; }

  QirModel with_beta(Eigen::VectorXd beta) const {
    return QirModel(family_, links_, p_, std::move(beta), tail_scaling_);
  }

  /// Linear predictor x' beta_j (tail-scaled covariates for tail indices).
  double linear_index(int j, std::span<const double> x) const noexcept;

 private:
  QuantileFamily family_;
  LinkSet links_;
  Eigen::Index p_;
  Eigen::VectorXd beta_;
  std::optional<TailScaling> tail_scaling_;
};

/// theta(x, beta). Throws EvaluationError on non-finite linear predictors.
IndexVector indices(const QirModel& model, std::span<const double> x);
double predict_quantile(const QirModel& model, std::span<const double> x, double tau);
/// d Q(tau, theta(x, beta)) / d beta, laid out as d blocks of length p.
Eigen::VectorXd quantile_grad_beta(const QirModel& model, std::span<const double> x, double tau);
Eigen::VectorXd predict_curve(const QirModel& model, std::span<const double> x, std::span<const double> taus);

namespace detail {

// Everything the kernels need about one covariate row: indices and the link
// chain-rule factors g_j'(x' beta_j).
struct RowIndices {
  std::array<double, kMaxIndexDim> theta{};
  std::array<double, kMaxIndexDim> link_slope{};
};

// Returns false when a linear predictor is not finite.
bool row_indices(const QirModel& model, std::span<const double> x, RowIndices& out) noexcept;

// Accumulates scale * sum_j weight_j * link_slope_j * x~_j into grad (length d*p).
void scatter_beta_gradient(const QirModel& model, std::span<const double> x, const RowIndices& row,
                           const double* weight, double scale, double* grad) noexcept;

}  // namespace detail
}  // namespace qir
