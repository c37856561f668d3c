#include <cmath>
#include <random>
#include <vector>

#include <omp.h>

#include "doctest.h"
#include "qir/errors.hpp"
#include "qir/loss.hpp"
#include "qir/sim.hpp"
#include "test_util.hpp"

using namespace qir;
using qir::test::rel_err;

namespace {

QirModel location_only(double b0, double b1) {
  return QirModel(QuantileFamily::gaussian(), {LinkKind::Identity}, 2, Eigen::Vector2d(b0, b1));
}

}  // namespace

TEST_SUITE("loss") {
  TEST_CASE("check loss values") {
    CHECK(check_loss(0.5, 3) == 1.5);
    CHECK(check_loss(0.5, -3) == 1.5);
    CHECK(check_loss(0.9, -1) == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(check_loss(0.9, 1) == 0.9);
    CHECK(check_loss(0.25, 2) == 0.5);
    CHECK(check_score(0.3, 0.0) == 0.3);
    CHECK(check_score(0.3, -1e-300) == doctest::Approx(-0.7));
  }

  TEST_CASE("level grid validation") {
    CHECK_THROWS_AS(LevelGrid(std::vector<double>{}), DomainError);
    CHECK_THROWS_AS(LevelGrid(std::vector<double>{0.6, 0.5}), DomainError);
    CHECK_THROWS_AS(LevelGrid(std::vector<double>{0.5, 1.0}), DomainError);
    CHECK(LevelGrid(std::vector<double>{0.2, 0.9}).K() == 2);
  }

  TEST_CASE("median special cases") {
    const LevelGrid grid(std::vector<double>{0.5});
    const QirModel m = SimScenario::lowdim(1, 0).true_model();
    RowMatrix X(4, 3);
    X << 1, 0.1, 0.2, 1, -1, 0.5, 1, 2, 2, 1, 0, -0.3;
    Eigen::VectorXd y(4);
    for (int i = 0; i < 4; ++i) y(i) = predict_quantile(m, std::vector<double>(X.row(i).data(), X.row(i).data() + 3), 0.5);
    const Dataset exact(y, X);
    CHECK(composite_loss(m, exact, grid) == 0.0);

    // Zero residuals: psi = tau, so the subgradient is -0.5 * sum_i dQ/dbeta.
    Eigen::VectorXd expected = Eigen::VectorXd::Zero(9);
    for (int i = 0; i < 4; ++i) expected -= 0.5 * quantile_grad_beta(m, exact.row(i), 0.5);
    CHECK(rel_err(composite_subgradient(m, exact, grid), expected) < 1e-14);

    Eigen::VectorXd y2 = y + Eigen::Vector4d(1.0, -2.0, 0.25, 3.0);
    CHECK(composite_loss(m, Dataset(y2, X), grid) == doctest::Approx(0.5 * 6.25).epsilon(1e-14));
  }

  TEST_CASE("toy case against a two-loop oracle") {
    RowMatrix X(3, 2);
    X << 1, 0.5, 1, -1.5, 1, 2.0;
    const Dataset data(Eigen::Vector3d(0.7, -1.1, 4.2), X);
    const LevelGrid grid(std::vector<double>{0.3, 0.8});
    const QirModel m(QuantileFamily::tukey(), default_links(QuantileFamily::tukey()), 2,
                     (Eigen::VectorXd(6) << 0.2, 0.9, 0.1, -0.3, 0.4, 0.2).finished());
    double oracle = 0.0;
    for (int i = 0; i < 3; ++i) {
      for (double tau : grid.taus()) {
        const IndexVector th = indices(m, data.row(i));
        const double q = th[0] + th[1] * (std::pow(tau, th[2]) - std::pow(1 - tau, th[2])) / th[2];
        const double u = data.y(i) - q;
        oracle += u * (tau - (u < 0 ? 1.0 : 0.0));
      }
    }
    CHECK(composite_loss(m, data, grid) == doctest::Approx(oracle).epsilon(1e-14));
    CHECK(serial::composite_loss(m, data, grid) == doctest::Approx(oracle).epsilon(1e-14));
  }

  TEST_CASE("two-row hand case") {
    // Location-only identity model, residuals +1 and -1 at tau.
    RowMatrix X(2, 2);
    X << 1, 2, 1, -3;
    const QirModel m = location_only(0.5, 0.0);
    const Dataset data(Eigen::Vector2d(1.5, -0.5), X);
    const double tau = 0.3;
    const LevelGrid grid(std::vector<double>{tau});
    const Eigen::VectorXd g = composite_subgradient(m, data, grid);
    // -(psi(+1) x_1 + psi(-1) x_2) = -(tau x_1 - (1 - tau) x_2), shifted by the Gaussian location map.
    const Eigen::Vector2d expected = -(tau * Eigen::Vector2d(1, 2) - (1 - tau) * Eigen::Vector2d(1, -3));
    // Q = x'b + Phi^-1(tau); residual signs are what matter here.
    CHECK(rel_err(g, Eigen::VectorXd(expected)) < 1e-15);
  }

  TEST_CASE("subgradient matches finite differences at smooth points") {
    SimScenario sc = SimScenario::lowdim(300, 77);
    sc.tail_scaling = true;
    const Dataset data = generate_sample(sc);
    const LevelGrid grid(std::vector<double>{0.55, 0.7, 0.85, 0.95});
    std::mt19937_64 gen(4);
    std::normal_distribution<double> nd(0, 0.05);
    for (int trial = 0; trial < 5; ++trial) {
      Eigen::VectorXd beta = sc.beta0;
      for (auto& v : beta) v += nd(gen);
      const QirModel m = sc.true_model(data.tail_scaling).with_beta(beta);
      const Eigen::VectorXd g = composite_subgradient(m, data, grid);
      Eigen::VectorXd fd(beta.size());
      for (Eigen::Index l = 0; l < beta.size(); ++l) {
        // A step small enough that no residual changes sign.
        const double h = 1e-7;
        Eigen::VectorXd bp = beta, bm = beta;
        bp(l) += h;
        bm(l) -= h;
        fd(l) = (serial::composite_loss(m.with_beta(bp), data, grid) - serial::composite_loss(m.with_beta(bm), data, grid)) /
                (2 * h);
      }
      CHECK(rel_err(g, fd) < 1e-5);
    }
  }

  TEST_CASE("parallel kernels agree with the serial reference and ignore thread count") {
    const SimScenario sc = SimScenario::lowdim(3000, 5);
    const Dataset data = generate_sample(sc);
    const LevelGrid grid(std::vector<double>{0.5, 0.6, 0.7, 0.8, 0.9, 0.99});
    const QirModel m = sc.true_model();
    const double ls = serial::composite_loss(m, data, grid);
    const Eigen::VectorXd gs = serial::composite_subgradient(m, data, grid);
    CHECK(composite_loss(m, data, grid) == doctest::Approx(ls).epsilon(1e-12));
    CHECK(rel_err(composite_subgradient(m, data, grid), gs) < 1e-12);

    const int saved = omp_get_max_threads();
    omp_set_num_threads(1);
    const LossAndGradient one = composite_loss_and_subgradient(m, data, grid);
    omp_set_num_threads(4);
    const LossAndGradient four = composite_loss_and_subgradient(m, data, grid);
    omp_set_num_threads(saved);
    CHECK(one.loss == four.loss);
    CHECK((one.grad.array() == four.grad.array()).all());
    CHECK(one.loss == composite_loss(m, data, grid));
  }

  TEST_CASE("inadmissible rows are reported by index") {
    RowMatrix X(600, 1);
    X.setOnes();
    X(437, 0) = 5.0;  // pushes the identity-link tail index above 1
    const QirModel m(QuantileFamily::tukey(), {LinkKind::Identity, LinkKind::Softplus, LinkKind::Identity}, 1,
                     Eigen::Vector3d(0, 0, 0.5));
    const Dataset data(Eigen::VectorXd::Zero(600), X);
    const LevelGrid grid(std::vector<double>{0.5, 0.9});
    try {
      composite_loss(m, data, grid);
      FAIL("expected an evaluation error");
    } catch (const EvaluationError& e) {
      CHECK(e.row() == 437);
    }
    CHECK_THROWS_AS(composite_subgradient(m, data, grid), EvaluationError);
  }
}
