#include "qir/loss.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include "qir/errors.hpp"

namespace qir {

LevelGrid::LevelGrid(std::vector<double> taus) : taus_(std::move(taus)) {
  if (taus_.empty()) throw DomainError("level grid must contain at least one level");
  if (!std::is_sorted(taus_.begin(), taus_.end())) throw DomainError("level grid must be nondecreasing");
  levels_.reserve(taus_.size());
  for (double tau : taus_) levels_.push_back(Level::at(tau));
}

namespace {

void check_shapes(const QirModel& model, const Dataset& data) {
  if (data.n() == 0) throw DomainError("dataset is empty");
  if (data.p() != model.p()) {
    throw DomainError("dataset has " + std::to_string(data.p()) + " covariates, model expects " +
                      std::to_string(model.p()));
  }
}

[[noreturn]] void throw_bad_row(Eigen::Index row) {
  throw EvaluationError("inadmissible quantile indices at data row " + std::to_string(row), row);
}

// Loss (and optionally subgradient) over rows [begin, end). Returns the first
// bad row index or -1.
Eigen::Index accumulate_rows(const QirModel& model, const Dataset& data, const LevelGrid& grid,
                             Eigen::Index begin, Eigen::Index end, double& loss, double* grad) {
  const QuantileFamily family = model.family();
  const int d = model.d();
  const auto& levels = grid.levels();
  std::array<double, kMaxIndexDim> dq{};
  std::array<double, kMaxIndexDim> weight{};
  detail::RowIndices row;
  double acc = 0.0;
  for (Eigen::Index i = begin; i < end; ++i) {
    const auto x = data.row(i);
    if (!detail::row_indices(model, x, row) ||
        !is_admissible(family, {row.theta.data(), static_cast<size_t>(d)})) {
      loss = acc;
      return i;
    }
    const double yi = data.y(i);
    weight.fill(0.0);
    for (const Level& level : levels) {
      const double q = detail::quantile_at(family, level, row.theta.data(), grad ? dq.data() : nullptr);
      const double e = yi - q;
      acc += check_loss(level.tau, e);
      if (grad) {
        const double psi = check_score(level.tau, e);
        for (int j = 0; j < d; ++j) weight[j] += psi * dq[j];
      }
    }
    if (grad) detail::scatter_beta_gradient(model, x, row, weight.data(), -1.0, grad);
  }
  loss = acc;
  return -1;
}

LossAndGradient chunked(const QirModel& model, const Dataset& data, const LevelGrid& grid, bool with_grad) {
  check_shapes(model, data);
  const Eigen::Index n = data.n();
  const Eigen::Index dp = model.beta().size();
  const Eigen::Index chunks = (n + kLossChunkRows - 1) / kLossChunkRows;

  std::vector<double> loss_part(chunks, 0.0);
  std::vector<Eigen::Index> bad(chunks, -1);
  Eigen::MatrixXd grad_part;
  if (with_grad) grad_part = Eigen::MatrixXd::Zero(dp, chunks);

#pragma omp parallel for schedule(static) if (chunks > 1)
  for (Eigen::Index c = 0; c < chunks; ++c) {
    const Eigen::Index begin = c * kLossChunkRows;
    const Eigen::Index end = std::min(n, begin + kLossChunkRows);
    bad[c] = accumulate_rows(model, data, grid, begin, end, loss_part[c],
                             with_grad ? grad_part.col(c).data() : nullptr);
  }

  LossAndGradient out;
  for (Eigen::Index c = 0; c < chunks; ++c) {
    if (bad[c] >= 0) throw_bad_row(bad[c]);
  }
  for (double part : loss_part) out.loss += part;
  if (with_grad) {
    out.grad = Eigen::VectorXd::Zero(dp);
    for (Eigen::Index c = 0; c < chunks; ++c) out.grad += grad_part.col(c);
  }
  return out;
}

}  // namespace

double composite_loss(const QirModel& model, const Dataset& data, const LevelGrid& grid) {
  return chunked(model, data, grid, false).loss;
}

Eigen::VectorXd composite_subgradient(const QirModel& model, const Dataset& data, const LevelGrid& grid) {
  return chunked(model, data, grid, true).grad;
}

LossAndGradient composite_loss_and_subgradient(const QirModel& model, const Dataset& data, const LevelGrid& grid) {
  return chunked(model, data, grid, true);
}

namespace serial {

namespace {

void check_row_admissible(const QirModel& model, const Dataset& data, Eigen::Index i) {
  try {
    check_admissible(model.family(), indices(model, data.row(i)).span());
  } catch (const std::exception&) {
    throw_bad_row(i);
  }
}

}  // namespace

double composite_loss(const QirModel& model, const Dataset& data, const LevelGrid& grid) {
  check_shapes(model, data);
  double total = 0.0;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    check_row_admissible(model, data, i);
    for (double tau : grid.taus()) {
      total += check_loss(tau, data.y(i) - predict_quantile(model, data.row(i), tau));
    }
  }
  return total;
}

Eigen::VectorXd composite_subgradient(const QirModel& model, const Dataset& data, const LevelGrid& grid) {
  check_shapes(model, data);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(model.beta().size());
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    check_row_admissible(model, data, i);
    for (double tau : grid.taus()) {
      const double e = data.y(i) - predict_quantile(model, data.row(i), tau);
      grad -= check_score(tau, e) * quantile_grad_beta(model, data.row(i), tau);
    }
  }
  return grad;
}

}  // namespace serial
}  // namespace qir
