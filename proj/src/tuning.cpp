#include "qir/tuning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <string>

#include <omp.h>

#include "qir/errors.hpp"
#include "qir/optim.hpp"
#include "qir/sim.hpp"
#include "qir/text.hpp"

namespace qir {

LevelGrid quantile_grid(double tau_L, double tau_U, int K) {
  if (!(tau_L > 0.0 && tau_L < tau_U && tau_U < 1.0)) {
    throw DomainError("quantile range needs 0 < tau_L < tau_U < 1");
  }
  if (K < 1) throw DomainError("quantile grid needs K >= 1");
  std::vector<double> taus(K);
  for (int k = 1; k <= K; ++k) taus[k - 1] = tau_L + k * (tau_U - tau_L) / (K + 1);
  return LevelGrid(std::move(taus));
}

double prediction_error(std::span<const double> y, const Eigen::MatrixXd& predictions,
                        std::span<const double> target_taus) {
  const auto n = static_cast<Eigen::Index>(y.size());
  if (target_taus.empty()) throw DomainError("PE needs at least one target level");
  if (n == 0 || predictions.rows() != n || predictions.cols() != static_cast<Eigen::Index>(target_taus.size())) {
    throw DomainError("prediction matrix must be n x M");
  }
  const double root_n = std::sqrt(static_cast<double>(n));
  double total = 0.0;
  for (size_t m = 0; m < target_taus.size(); ++m) {
    const double tau = target_taus[m];
    Eigen::Index below = 0;
    for (Eigen::Index i = 0; i < n; ++i) below += y[i] < predictions(i, m) ? 1 : 0;
    const double coverage = static_cast<double>(below) / static_cast<double>(n);
    total += root_n * std::abs(coverage - tau) / std::sqrt(tau * (1.0 - tau));
  }
  return total / static_cast<double>(target_taus.size());
}

double prediction_error(const QirModel& model, const Dataset& data, std::span<const double> target_taus) {
  Eigen::MatrixXd preds(data.n(), static_cast<Eigen::Index>(target_taus.size()));
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    preds.row(i) = predict_curve(model, data.row(i), target_taus).transpose();
  }
  return prediction_error({data.y.data(), static_cast<size_t>(data.n())}, preds, target_taus);
}

double rescale_lambda(double lambda_cv, double n_train, double n_full) {
  if (!(n_train > 0.0 && n_full > 0.0)) throw DomainError("sample sizes must be positive");
  return lambda_cv * std::sqrt(n_train / n_full);
}

void TuneSpec::validate() const {
  if (tau_L_candidates.empty()) throw DomainError("no tau_L candidates");
  if (lambdas.empty()) throw DomainError("empty lambda grid");
  if (target_taus.empty()) throw DomainError("no target levels");
  if (folds < 2) throw DomainError("cross-validation needs at least 2 folds");
  if (repeats < 1) throw DomainError("cross-validation needs at least 1 repeat");
  if (K < 1) throw DomainError("K must be positive");
  const double tau_min = *std::min_element(target_taus.begin(), target_taus.end());
  for (double t : target_taus) {
    if (!(t > 0.0 && t < 1.0)) throw DomainError("target levels must lie in (0,1)");
  }
  if (!(tau_U < tau_min)) throw DomainError("tau_U must lie below every target level");
  for (double tl : tau_L_candidates) {
    if (!(tl > 0.0 && tl < tau_U)) throw DomainError("each tau_L must satisfy 0 < tau_L < tau_U");
  }
  for (double l : lambdas) {
    if (!(l > 0.0)) throw DomainError("lambda grid values must be positive");
  }
}

Fitter regularized_fitter(const PenaltySpec& shape, const FitConfig& config) {
  return [shape, config](QuantileFamily family, const LinkSet& links, const Dataset& train, const LevelGrid& grid,
                         double lambda) {
    PenaltySpec penalty = shape;
    penalty.lambda = lambda;
    const FitResult fit = fit_regularized(family, links, train, grid, penalty, config);
    return fitted_model(family, links, train, fit);
  };
}

std::vector<std::vector<Eigen::Index>> fold_assignment(Eigen::Index n, int folds, std::uint64_t seed) {
  if (folds < 2 || n < folds) throw DomainError("need at least as many rows as folds");
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::mt19937_64 gen(seed);
  std::shuffle(order.begin(), order.end(), gen);
  std::vector<std::vector<Eigen::Index>> out(folds);
  for (int f = 0; f < folds; ++f) {
    const Eigen::Index begin = f * n / folds;
    const Eigen::Index end = (f + 1) * n / folds;
    out[f].assign(order.begin() + begin, order.begin() + end);
    std::sort(out[f].begin(), out[f].end());
  }
  return out;
}

TuneResult cross_validate(const Dataset& data, const TuneSpec& spec, QuantileFamily family, const LinkSet& links,
                          const Fitter& fitter) {
  spec.validate();
  const int T = static_cast<int>(spec.tau_L_candidates.size());
  const int L = static_cast<int>(spec.lambdas.size());
  const int F = spec.folds;
  const int R = spec.repeats;

  std::vector<std::vector<std::vector<Eigen::Index>>> partitions(R);
  for (int r = 0; r < R; ++r) partitions[r] = fold_assignment(data.n(), F, derive_seed(spec.seed, 7, r));

  TuneResult result;
  result.cells.resize(static_cast<size_t>(T) * R * F * L);
  const long tasks = static_cast<long>(T) * R * F;

#pragma omp parallel for schedule(dynamic) num_threads(spec.threads > 0 ? spec.threads : omp_get_max_threads())
  for (long task = 0; task < tasks; ++task) {
    const int t = static_cast<int>(task / (R * F));
    const int r = static_cast<int>((task / F) % R);
    const int f = static_cast<int>(task % F);
    const double tau_L = spec.tau_L_candidates[t];

    std::vector<Eigen::Index> train_rows;
    for (int g = 0; g < F; ++g) {
      if (g != f) train_rows.insert(train_rows.end(), partitions[r][g].begin(), partitions[r][g].end());
    }
    std::sort(train_rows.begin(), train_rows.end());
    const Dataset train = data.subset(train_rows);
    const Dataset held = data.subset(partitions[r][f]);
    const LevelGrid grid = quantile_grid(tau_L, spec.tau_U, spec.K);

    for (int l = 0; l < L; ++l) {
      TuneCell& cell = result.cells[((static_cast<size_t>(t) * R + r) * F + f) * L + l];
      cell.tau_L = tau_L;
      cell.lambda = spec.lambdas[l];
      cell.fold = f;
      cell.repeat = r;
      try {
        const QirModel model = fitter(family, links, train, grid, spec.lambdas[l]);
        cell.cv_loss = composite_loss(model, held, grid) / static_cast<double>(held.n());
        cell.pe = prediction_error(model, held, spec.target_taus);
        cell.ok = std::isfinite(cell.cv_loss) && std::isfinite(cell.pe);
      } catch (const std::exception&) {
        cell.ok = false;
      }
    }
  }

  const double nan = std::numeric_limits<double>::quiet_NaN();
  result.lambda_star.assign(T, nan);
  result.pe_at_lambda_star.assign(T, nan);
  result.mean_cv_loss.assign(static_cast<size_t>(T) * L, nan);
  int best_t = -1;
  for (int t = 0; t < T; ++t) {
    int best_l = -1;
    for (int l = 0; l < L; ++l) {
      double sum = 0.0;
      int count = 0;
      for (const TuneCell& cell : result.cells) {
        if (cell.ok && cell.tau_L == spec.tau_L_candidates[t] && cell.lambda == spec.lambdas[l]) {
          sum += cell.cv_loss;
          ++count;
        }
      }
      if (count == 0) continue;
      const double mean = sum / count;
      result.mean_cv_loss[static_cast<size_t>(t) * L + l] = mean;
      const double incumbent = best_l < 0 ? nan : result.mean_cv_loss[static_cast<size_t>(t) * L + best_l];
      // Ties go to the larger (sparser) lambda.
      if (best_l < 0 || mean < incumbent || (mean == incumbent && spec.lambdas[l] > spec.lambdas[best_l])) {
        best_l = l;
      }
    }
    if (best_l < 0) continue;
    double pe_sum = 0.0;
    int pe_count = 0;
    for (const TuneCell& cell : result.cells) {
      if (cell.ok && cell.tau_L == spec.tau_L_candidates[t] && cell.lambda == spec.lambdas[best_l]) {
        pe_sum += cell.pe;
        ++pe_count;
      }
    }
    result.lambda_star[t] = spec.lambdas[best_l];
    result.pe_at_lambda_star[t] = pe_sum / pe_count;
    if (best_t < 0 || result.pe_at_lambda_star[t] < result.pe_at_lambda_star[best_t]) best_t = t;
  }
  if (best_t < 0) throw TuningError("every tau_L candidate failed in all cross-validation cells");
  result.tau_L_star = spec.tau_L_candidates[best_t];
  result.lambda_star_at_tau_L_star = result.lambda_star[best_t];
  return result;
}

void write_tuning_report(const TuneResult& result, std::ostream& out) {
  out << "tau_L\tlambda\tfold\trepeat\tcv_loss\tpe\n";
  for (const TuneCell& cell : result.cells) {
    out << format_full(cell.tau_L) << '\t' << format_full(cell.lambda) << '\t' << cell.fold << '\t' << cell.repeat
        << '\t' << (cell.ok ? format_full(cell.cv_loss) : "NA") << '\t' << (cell.ok ? format_full(cell.pe) : "NA")
        << '\n';
  }
}

}  // namespace qir
