#include "qir/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "qir/errors.hpp"

namespace qir {

std::string_view link_name(LinkKind link) {
  switch (link) {
    case LinkKind::Identity: return "identity";
    case LinkKind::Softplus: return "softplus";
    case LinkKind::OneMinusSoftplus: return "one-minus-softplus";
  }
  return "unknown";
}

LinkKind parse_link(std::string_view name) {
  if (name == "identity") return LinkKind::Identity;
  if (name == "softplus") return LinkKind::Softplus;
  if (name == "one-minus-softplus") return LinkKind::OneMinusSoftplus;
  throw DomainError("unknown link '" + std::string(name) + "'");
}

double softplus(double t) noexcept {
  if (t > 30.0) return t;
  if (t < -30.0) return std::exp(t);
  return std::log1p(std::exp(t));
}

double sigmoid(double t) noexcept {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double link_value(LinkKind link, double t) noexcept {
  switch (link) {
    case LinkKind::Identity: return t;
    case LinkKind::Softplus: return softplus(t);
    case LinkKind::OneMinusSoftplus: return 1.0 - softplus(t);
  }
  return t;
}

double link_derivative(LinkKind link, double t) noexcept {
  switch (link) {
    case LinkKind::Identity: return 1.0;
    case LinkKind::Softplus: return sigmoid(t);
    case LinkKind::OneMinusSoftplus: return -sigmoid(t);
  }
  return 1.0;
}

LinkSet default_links(QuantileFamily family) {
  switch (family.kind) {
    case FamilyKind::TukeyLambda:
      return {LinkKind::Identity, LinkKind::Softplus, LinkKind::OneMinusSoftplus};
    case FamilyKind::GeneralizedLambda:
      return {LinkKind::Identity, LinkKind::Softplus, LinkKind::Identity, LinkKind::Identity};
    case FamilyKind::LocationShiftGaussian:
      return {LinkKind::Identity};
  }
  return {};
}

TailScaling TailScaling::fit_min_max(const RowMatrix& X) {
  TailScaling ts;
  ts.scale.assign(X.cols(), 1.0);
  ts.offset.assign(X.cols(), 0.0);
  for (Eigen::Index c = 0; c < X.cols(); ++c) {
    const double lo = X.col(c).minCoeff();
    const double hi = X.col(c).maxCoeff();
    if (hi > lo) {
      ts.scale[c] = 1.0 / (hi - lo);
      ts.offset[c] = -lo / (hi - lo) - 0.5;
    }
  }
  return ts;
}

Dataset::Dataset(Eigen::VectorXd y_in, RowMatrix X_in, std::optional<TailScaling> ts)
    : y(std::move(y_in)), X(std::move(X_in)), tail_scaling(std::move(ts)) {
  if (X.rows() != y.size()) {
    throw DomainError("dataset has " + std::to_string(y.size()) + " responses but " +
                      std::to_string(X.rows()) + " covariate rows");
  }
  if (!y.allFinite() || !X.allFinite()) throw DomainError("dataset contains non-finite entries");
  if (tail_scaling && static_cast<Eigen::Index>(tail_scaling->scale.size()) != X.cols()) {
    throw DomainError("tail scaling record does not match covariate dimension");
  }
}

Dataset Dataset::subset(std::span<const Eigen::Index> rows) const {
  Dataset out;
  out.y.resize(static_cast<Eigen::Index>(rows.size()));
  out.X.resize(static_cast<Eigen::Index>(rows.size()), X.cols());
  for (size_t r = 0; r < rows.size(); ++r) {
    out.y(r) = y(rows[r]);
    out.X.row(r) = X.row(rows[r]);
  }
  out.tail_scaling = tail_scaling;
  return out;
}

QirModel::QirModel(QuantileFamily family, LinkSet links, Eigen::Index p, Eigen::VectorXd beta,
                   std::optional<TailScaling> tail_scaling)
    : family_(family),
      links_(std::move(links)),
      p_(p),
      beta_(std::move(beta)),
      tail_scaling_(std::move(tail_scaling)) {
  const int d = family_.dim();
  if (static_cast<int>(links_.size()) != d) {
    throw DomainError("family '" + std::string(family_name(family_)) + "' needs " + std::to_string(d) +
                      " links, got " + std::to_string(links_.size()));
  }
  if (p_ <= 0 || beta_.size() != d * p_) {
    throw DomainError("coefficient vector must have length d*p = " + std::to_string(d * p_));
  }
  if (tail_scaling_ && static_cast<Eigen::Index>(tail_scaling_->scale.size()) != p_) {
    throw DomainError("tail scaling record does not match covariate dimension");
  }
}

double QirModel::linear_index(int j, std::span<const double> x) const noexcept {
  const double* b = beta_.data() + j * p_;
  double t = 0.0;
  if (tail_scaling_ && family_.is_tail_index(j)) {
    for (Eigen::Index l = 0; l < p_; ++l) t += tail_scaling_->apply(l, x[l]) * b[l];
  } else {
    for (Eigen::Index l = 0; l < p_; ++l) t += x[l] * b[l];
  }
  return t;
}

namespace detail {

bool row_indices(const QirModel& model, std::span<const double> x, RowIndices& out) noexcept {
  for (int j = 0; j < model.d(); ++j) {
    const double t = model.linear_index(j, x);
    if (!std::isfinite(t)) return false;
    out.theta[j] = link_value(model.links()[j], t);
    out.link_slope[j] = link_derivative(model.links()[j], t);
  }
  return true;
}

void scatter_beta_gradient(const QirModel& model, std::span<const double> x, const RowIndices& row,
                           const double* weight, double scale, double* grad) noexcept {
  const Eigen::Index p = model.p();
  const auto& ts = model.tail_scaling();
  for (int j = 0; j < model.d(); ++j) {
    const double w = scale * weight[j] * row.link_slope[j];
    if (w == 0.0) continue;
    double* g = grad + j * p;
    if (ts && model.family().is_tail_index(j)) {
      for (Eigen::Index l = 0; l < p; ++l) g[l] += w * ts->apply(l, x[l]);
    } else {
      for (Eigen::Index l = 0; l < p; ++l) g[l] += w * x[l];
    }
  }
}

}  // namespace detail

namespace {

void check_row(const QirModel& model, std::span<const double> x) {
  if (static_cast<Eigen::Index>(x.size()) != model.p()) {
    throw DomainError("covariate row has length " + std::to_string(x.size()) + ", model expects " +
                      std::to_string(model.p()));
  }
}

detail::RowIndices admissible_row(const QirModel& model, std::span<const double> x) {
  check_row(model, x);
  detail::RowIndices row;
  if (!detail::row_indices(model, x, row)) throw EvaluationError("non-finite linear predictor");
  check_admissible(model.family(), {row.theta.data(), static_cast<size_t>(model.d())});
  return row;
}

}  // namespace

IndexVector indices(const QirModel& model, std::span<const double> x) {
  check_row(model, x);
  detail::RowIndices row;
  if (!detail::row_indices(model, x, row)) throw EvaluationError("non-finite linear predictor");
  IndexVector theta;
  theta.size = model.d();
  std::copy_n(row.theta.begin(), model.d(), theta.values.begin());
  return theta;
}

double predict_quantile(const QirModel& model, std::span<const double> x, double tau) {
  const Level level = Level::at(tau);
  const auto row = admissible_row(model, x);
  return detail::quantile_at(model.family(), level, row.theta.data(), nullptr);
}

Eigen::VectorXd quantile_grad_beta(const QirModel& model, std::span<const double> x, double tau) {
  const Level level = Level::at(tau);
  const auto row = admissible_row(model, x);
  std::array<double, kMaxIndexDim> dq{};
  detail::quantile_at(model.family(), level, row.theta.data(), dq.data());
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(model.beta().size());
  detail::scatter_beta_gradient(model, x, row, dq.data(), 1.0, grad.data());
  return grad;
}

Eigen::VectorXd predict_curve(const QirModel& model, std::span<const double> x, std::span<const double> taus) {
  const auto row = admissible_row(model, x);
  Eigen::VectorXd out(static_cast<Eigen::Index>(taus.size()));
  for (size_t k = 0; k < taus.size(); ++k) {
    out(k) = detail::quantile_at(model.family(), Level::at(taus[k]), row.theta.data(), nullptr);
  }
  return out;
}

}  // namespace qir
