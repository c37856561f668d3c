#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "doctest.h"
#include "qir/errors.hpp"
#include "qir/inference.hpp"
#include "qir/optim.hpp"
#include "qir/sim.hpp"
#include "qir/tuning.hpp"
#include "test_util.hpp"

using namespace qir;
using qir::test::rel_err;

namespace {

const double kPhi0 = 1.0 / std::sqrt(2.0 * std::numbers::pi);

QirModel tukey_identity(double t1, double t2, double t3) {
  return QirModel(QuantileFamily::tukey(), {LinkKind::Identity, LinkKind::Identity, LinkKind::Identity}, 1,
                  Eigen::Vector3d(t1, t2, t3));
}

QirModel gaussian_model(const Eigen::VectorXd& beta) {
  return QirModel(QuantileFamily::gaussian(), {LinkKind::Identity}, beta.size(), beta);
}

Dataset gaussian_sample(Eigen::Index n, const Eigen::VectorXd& beta, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd;
  RowMatrix X(n, beta.size());
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    for (Eigen::Index j = 1; j < beta.size(); ++j) X(i, j) = nd(gen);
    y(i) = X.row(i).dot(beta) + nd(gen);
  }
  return Dataset(y, X);
}

}  // namespace

TEST_SUITE("inference") {
  TEST_CASE("density examples") {
    // Tukey (0.5, 0.5, 1) is Q(tau) = tau.
    const QirModel uniform = tukey_identity(0.5, 0.5, 1.0);
    for (double h : {0.01, 0.1, 0.2}) {
      CHECK(density_at_quantile(uniform, std::vector<double>{1.0}, 0.4, h) == doctest::Approx(1.0).epsilon(1e-13));
    }
    CHECK(density_at_quantile(tukey_identity(0, 1, 1), std::vector<double>{1.0}, 0.3, 0.05) ==
          doctest::Approx(0.5).epsilon(1e-13));

    const QirModel gauss = gaussian_model(Eigen::VectorXd::Zero(1));
    const std::vector<double> x{1.0};
    CHECK(std::abs(density_at_quantile(gauss, x, 0.5, 0.01) - kPhi0) < 1e-4);
    // Second-order accuracy: halving h quarters the error.
    const double e1 = std::abs(density_at_quantile(gauss, x, 0.7, 0.02) - kPhi0 * std::exp(-0.5 * std::pow(std_normal_quantile(0.7), 2)));
    const double e2 = std::abs(density_at_quantile(gauss, x, 0.7, 0.01) - kPhi0 * std::exp(-0.5 * std::pow(std_normal_quantile(0.7), 2)));
    CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.05));

    CHECK_THROWS_AS(density_at_quantile(gauss, x, 0.5, 0.0), DomainError);
    CHECK_THROWS_AS(density_at_quantile(gauss, x, 0.95, 0.06), DomainError);
  }

  TEST_CASE("bandwidth") {
    const LevelGrid grid = quantile_grid(0.5, 0.99, 10);
    CHECK(default_bandwidth(1000, grid) == doctest::Approx((1.0 - grid.taus().back()) / 2.0));
    const LevelGrid mid = quantile_grid(0.3, 0.7, 3);
    CHECK(default_bandwidth(1000, mid) == doctest::Approx(0.1));
  }

  TEST_CASE("single-row median sandwich pieces") {
    RowMatrix X(1, 3);
    X << 1.0, 0.4, -2.0;
    const Dataset data(Eigen::VectorXd::Zero(1), X);
    const LevelGrid grid(std::vector<double>{0.5});
    const QirModel m = gaussian_model(Eigen::VectorXd::Zero(3));
    // One row gives a rank-one Hessian.
    try {
      estimate_sandwich(m, data, grid, 0.01);
      FAIL("rank-one Hessian should be flagged");
    } catch (const SingularityError& e) {
      CHECK(e.eigenvalue() < 1e-10);
    }
    // Three rows: Omega0 = 0.25 * mean(x x').
    RowMatrix X2(3, 3);
    X2 << 1.0, 0.4, -2.0, 1.0, -1.0, 0.5, 1.0, 0.3, 0.9;
    const Dataset d2(Eigen::VectorXd::Zero(3), X2);
    const CovarianceEstimate cov = estimate_sandwich(m, d2, grid, 0.01);
    const Eigen::MatrixXd expected = 0.25 * (X2.transpose() * X2) / 3.0;
    CHECK(rel_err(Eigen::MatrixXd(cov.omega0), expected) < 1e-14);
    const double f = density_at_quantile(m, std::vector<double>{1.0, 0.4, -2.0}, 0.5, 0.01);
    CHECK(rel_err(Eigen::MatrixXd(cov.omega1), Eigen::MatrixXd(4.0 * f * expected)) < 1e-12);
    // Sandwich = 0.25 / f^2 * (mean x x')^-1.
    const Eigen::MatrixXd inv = ((X2.transpose() * X2) / 3.0).inverse();
    CHECK(rel_err(Eigen::MatrixXd(cov.sandwich), Eigen::MatrixXd(0.25 / (f * f) * inv)) < 1e-9);
  }

  TEST_CASE("symmetry, PSD and row-permutation invariance") {
    std::mt19937_64 gen(2);
    std::normal_distribution<double> nd(0, 0.1);
    const SimScenario sc = SimScenario::lowdim(200, 14);
    const Dataset data = generate_sample(sc);
    const LevelGrid grid = quantile_grid(0.5, 0.99, 10);
    const double h = default_bandwidth(data.n(), grid);
    for (int trial = 0; trial < 100; ++trial) {
      Eigen::VectorXd beta = sc.beta0;
      for (auto& v : beta) v += nd(gen);
      const QirModel m = sc.true_model().with_beta(beta);
      CovarianceEstimate cov;
      try {
        cov = estimate_sandwich(m, data, grid, h);
      } catch (const SingularityError&) {
        continue;
      }
      CHECK((cov.omega0 - cov.omega0.transpose()).norm() == 0.0);
      CHECK((cov.sandwich - cov.sandwich.transpose()).norm() <= 1e-10 * cov.sandwich.norm());
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> e0(cov.omega0);
      CHECK(e0.eigenvalues().minCoeff() >= -1e-10 * e0.eigenvalues().maxCoeff());
      const Eigen::VectorXd d = Eigen::VectorXd::Random(beta.size());
      CHECK(d.dot(cov.sandwich * d) >= 0.0);
    }
    std::vector<Eigen::Index> perm(data.n());
    for (Eigen::Index i = 0; i < data.n(); ++i) perm[i] = data.n() - 1 - i;
    const CovarianceEstimate a = estimate_sandwich(sc.true_model(), data, grid, h);
    const CovarianceEstimate b = estimate_sandwich(sc.true_model(), data.subset(perm), grid, h);
    CHECK(rel_err(a.sandwich, b.sandwich) < 1e-10);
  }

  TEST_CASE("interval mechanics") {
    const Eigen::Vector3d beta(1.0, 0.5, -0.3);
    const Dataset data = gaussian_sample(500, beta, 3);
    const LevelGrid grid = quantile_grid(0.2, 0.8, 5);
    const QirModel m = gaussian_model(beta);
    CovarianceEstimate cov = estimate_sandwich(m, data, grid, default_bandwidth(data.n(), grid));
    const std::vector<double> x{1.0, 0.2, 0.1};
    const Interval zero = predict_quantile_ci(m, cov, data, x, 0.9, 0.0);
    CHECK(zero.lower == zero.center);
    CHECK(zero.upper == zero.center);
    CHECK(zero.center == predict_quantile(m, x, 0.9));
    const Interval w1 = predict_quantile_ci(m, cov, data, x, 0.9, 0.95);
    CHECK(w1.lower < w1.center);
    CHECK(w1.center < w1.upper);
    cov.n *= 2;
    const Interval w2 = predict_quantile_ci(m, cov, data, x, 0.9, 0.95);
    CHECK((w1.upper - w1.lower) / (w2.upper - w2.lower) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
    // For a location-shift model the gradient is x, so the sample-average delta is the mean row.
    const Interval q = predict_quantile_ci(m, cov, data, x, 0.9, 0.95, DeltaSource::QueryPoint);
    const Eigen::Vector3d xv(x[0], x[1], x[2]);
    const double half = std_normal_quantile(0.975) * std::sqrt(xv.dot(cov.sandwich * xv) / cov.n);
    CHECK(q.upper - q.center == doctest::Approx(half).epsilon(1e-12));
    CHECK_THROWS_AS(predict_quantile_ci(m, cov, data, x, 0.9, 1.0), DomainError);
  }

  TEST_CASE("sandwich matches the Monte Carlo covariance on a location-shift design") {
    const Eigen::Vector3d beta(1.0, 0.5, -0.3);
    const LevelGrid grid = quantile_grid(0.2, 0.8, 5);
    const int reps = 150;
    const Eigen::Index n = 1000;
    Eigen::MatrixXd draws(reps, 3);
    Eigen::Matrix3d avg = Eigen::Matrix3d::Zero();
    for (int r = 0; r < reps; ++r) {
      const Dataset data = gaussian_sample(n, beta, derive_seed(7, 0, r));
      const FitResult fit = fit_cqr(QuantileFamily::gaussian(), {LinkKind::Identity}, data, grid);
      draws.row(r) = std::sqrt(static_cast<double>(n)) * (fit.beta_hat - beta).transpose();
      const QirModel m = fitted_model(QuantileFamily::gaussian(), {LinkKind::Identity}, data, fit);
      avg += estimate_sandwich(m, data, grid, default_bandwidth(n, grid)).sandwich;
    }
    avg /= reps;
    const Eigen::RowVector3d mean = draws.colwise().mean();
    const Eigen::MatrixXd centered = draws.rowwise() - mean;
    const Eigen::Matrix3d emp = centered.transpose() * centered / (reps - 1);
    for (int j = 0; j < 3; ++j) {
      CHECK(emp(j, j) / avg(j, j) > 0.5);
      CHECK(emp(j, j) / avg(j, j) < 2.0);
    }
  }
}
