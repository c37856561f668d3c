#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "qir/errors.hpp"
#include "qir/model.hpp"
#include "qir/model_io.hpp"
#include "qir/sim.hpp"
#include "test_util.hpp"

using namespace qir;
using qir::test::rel_err;

namespace {

QirModel table1_model() { return SimScenario::lowdim(1, 0).true_model(); }

double naive_softplus(double t) { return std::log(1.0 + std::exp(t)); }

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("links") {
    for (double t : {-20.0, -3.0, 0.0, 0.4, 7.0, 25.0}) {
      CHECK(softplus(t) == doctest::Approx(naive_softplus(t)).epsilon(1e-14));
      CHECK(sigmoid(t) == doctest::Approx(1.0 / (1.0 + std::exp(-t))).epsilon(1e-14));
      CHECK(link_value(LinkKind::OneMinusSoftplus, t) == doctest::Approx(1.0 - naive_softplus(t)).epsilon(1e-13));
      CHECK(link_derivative(LinkKind::Softplus, t) == sigmoid(t));
      CHECK(link_derivative(LinkKind::OneMinusSoftplus, t) == -sigmoid(t));
    }
    // Overflow branches.
    CHECK(softplus(800.0) == 800.0);
    CHECK(softplus(-800.0) >= 0.0);
    CHECK(std::isfinite(link_value(LinkKind::OneMinusSoftplus, 1e3)));
    for (auto link : {LinkKind::Identity, LinkKind::Softplus, LinkKind::OneMinusSoftplus}) {
      CHECK(parse_link(link_name(link)) == link);
    }
    CHECK_THROWS_AS(parse_link("probit"), DomainError);
  }

  TEST_CASE("indices at the simulation coefficients") {
    const QirModel m = table1_model();
    const IndexVector th = indices(m, std::vector<double>{1, 0, 0});
    CHECK(std::abs(th[0] - 1.0) < 5e-4);
    CHECK(std::abs(th[1] - 1.3133) < 5e-4);
    CHECK(std::abs(th[2] + 0.3133) < 5e-4);
    const IndexVector th2 = indices(m, std::vector<double>{1, 0.1, -0.2});
    CHECK(std::abs(th2[2] - (1.0 - naive_softplus(0.7))) < 1e-12);
    CHECK(std::abs(th2[2] + 0.1032) < 5e-4);

    const QirModel zero(QuantileFamily::tukey(), default_links(QuantileFamily::tukey()), 3, Eigen::VectorXd::Zero(9));
    const IndexVector z = indices(zero, std::vector<double>{1, 2, 3});
    CHECK(z[0] == 0.0);
    CHECK(z[1] == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(z[2] == doctest::Approx(1.0 - std::log(2.0)).epsilon(1e-15));
  }

  TEST_CASE("table 1 true quantiles") {
    const QirModel m = table1_model();
    CHECK(std::abs(predict_quantile(m, std::vector<double>{1, 0.1, -0.2}, 0.991) - 10.34) < 0.01);
    CHECK(std::abs(predict_quantile(m, std::vector<double>{1, 0.1, -0.2}, 0.995) - 11.83) < 0.01);
    CHECK(std::abs(predict_quantile(m, std::vector<double>{1, 0, 0}, 0.991) - 15.13) < 0.01);
    CHECK(std::abs(predict_quantile(m, std::vector<double>{1, 0, 0}, 0.995) - 18.84) < 0.01);
    const std::vector<double> x{1, 0.3, 0.9};
    CHECK(predict_quantile(m, x, 0.5) == doctest::Approx(m.linear_index(0, x)).epsilon(1e-14));
  }

  TEST_CASE("beta gradient structure") {
    const QirModel m = table1_model();
    const std::vector<double> x{1, 0.4, -1.3};
    const Eigen::VectorXd g = quantile_grad_beta(m, x, 0.93);
    for (int l = 0; l < 3; ++l) CHECK(g(l) == x[l]);
    const Eigen::VectorXd g0 = quantile_grad_beta(m, std::vector<double>{1, 0, 0}, 0.93);
    for (int j = 1; j < 3; ++j) {
      CHECK(g0(j * 3 + 1) == 0.0);
      CHECK(g0(j * 3 + 2) == 0.0);
    }
  }

  TEST_CASE("beta gradient matches central differences for every family") {
    std::mt19937_64 gen(17);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::uniform_real_distribution<double> ut(0.02, 0.98);
    for (auto fam : {QuantileFamily::tukey(), QuantileFamily::generalized_lambda(), QuantileFamily::gaussian()}) {
      const Eigen::Index p = 3;
      for (int draw = 0; draw < 100; ++draw) {
        Eigen::VectorXd beta(fam.dim() * p);
        for (Eigen::Index l = 0; l < beta.size(); ++l) beta(l) = 0.5 * nd(gen);
        const QirModel m(fam, default_links(fam), p, beta);
        const std::vector<double> x{1.0, nd(gen), nd(gen)};
        const double tau = ut(gen);
        const Eigen::VectorXd g = quantile_grad_beta(m, x, tau);
        Eigen::VectorXd fd(beta.size());
        for (Eigen::Index l = 0; l < beta.size(); ++l) {
          const double h = 1e-6 * std::max(1.0, std::abs(beta(l)));
          Eigen::VectorXd bp = beta, bm = beta;
          bp(l) += h;
          bm(l) -= h;
          fd(l) = (predict_quantile(m.with_beta(bp), x, tau) - predict_quantile(m.with_beta(bm), x, tau)) / (2 * h);
        }
        CHECK(rel_err(g, fd) < 1e-6);
      }
    }
  }

  TEST_CASE("curve is nondecreasing and agrees pointwise") {
    const QirModel m = table1_model();
    std::vector<double> taus;
    for (int k = 1; k < 200; ++k) taus.push_back(k / 200.0);
    const std::vector<double> x{1, -0.8, 1.1};
    const Eigen::VectorXd c = predict_curve(m, x, taus);
    for (size_t k = 1; k < taus.size(); ++k) CHECK(c(k) >= c(k - 1));
    CHECK(predict_curve(m, x, std::vector<double>{0.7})(0) == predict_quantile(m, x, 0.7));
    const Eigen::VectorXd t1 = predict_curve(m, std::vector<double>{1, 0, 0}, std::vector<double>{0.991, 0.995});
    CHECK(std::abs(t1(0) - 15.13) < 0.01);
    CHECK(std::abs(t1(1) - 18.84) < 0.01);
  }

  TEST_CASE("tail scaling affects only tail indices") {
    RowMatrix X(4, 3);
    X << 1, -2, 5, 1, 0, 5, 1, 2, 5, 1, 6, 5;
    const TailScaling ts = TailScaling::fit_min_max(X);
    CHECK(ts.apply(1, -2) == doctest::Approx(-0.5));
    CHECK(ts.apply(1, 6) == doctest::Approx(0.5));
    CHECK(ts.apply(0, 1) == 1.0);  // constant column untouched
    CHECK(ts.apply(2, 5) == 5.0);

    const QirModel plain = table1_model();
    const QirModel scaled(plain.family(), plain.links(), 3, plain.beta(), ts);
    const std::vector<double> x{1, 2, 5};
    const IndexVector a = indices(plain, x), b = indices(scaled, x);
    CHECK(a[0] == b[0]);
    CHECK(a[1] == b[1]);
    CHECK(b[2] == doctest::Approx(1.0 - naive_softplus(1.0 - ts.apply(1, 2) + ts.apply(2, 5))).epsilon(1e-14));
  }

  TEST_CASE("validation") {
    const auto fam = QuantileFamily::tukey();
    CHECK_THROWS_AS(QirModel(fam, default_links(fam), 3, Eigen::VectorXd::Zero(8)), DomainError);
    CHECK_THROWS_AS(QirModel(fam, {LinkKind::Identity}, 3, Eigen::VectorXd::Zero(9)), DomainError);
    CHECK_THROWS_AS(Dataset(Eigen::VectorXd::Zero(3), RowMatrix::Zero(2, 2)), DomainError);
    RowMatrix bad = RowMatrix::Zero(2, 2);
    bad(1, 1) = NAN;
    CHECK_THROWS_AS(Dataset(Eigen::VectorXd::Zero(2), bad), DomainError);
    // Identity link on the tail index can leave the admissible region.
    const QirModel id_tail(fam, {LinkKind::Identity, LinkKind::Softplus, LinkKind::Identity}, 1,
                           Eigen::Vector3d(0, 0, 2));
    CHECK_THROWS(predict_quantile(id_tail, std::vector<double>{1.0}, 0.7));
  }

  TEST_CASE("dataset subset keeps rows and scaling") {
    RowMatrix X(3, 2);
    X << 1, 10, 1, 20, 1, 30;
    Dataset d(Eigen::Vector3d(1, 2, 3), X, TailScaling::fit_min_max(X));
    const std::vector<Eigen::Index> rows{2, 0};
    const Dataset s = d.subset(rows);
    CHECK(s.n() == 2);
    CHECK(s.y(0) == 3);
    CHECK(s.X(1, 1) == 10);
    CHECK(s.tail_scaling == d.tail_scaling);
  }

  TEST_CASE("model JSON round-trip is bit-exact") {
    std::mt19937_64 gen(9);
    std::normal_distribution<double> nd;
    Eigen::VectorXd beta(12);
    for (auto& v : beta) v = nd(gen) * 1e-3 + 1.0 / 3.0;
    RowMatrix X = RowMatrix::Random(5, 3);
    const QirModel m(QuantileFamily::generalized_lambda(), default_links(QuantileFamily::generalized_lambda()), 3,
                     beta, TailScaling::fit_min_max(X));
    const auto dir = qir::test::temp_dir("model_io");
    save_model(m, dir / "m.json");
    const QirModel back = load_model(dir / "m.json");
    CHECK(back.family() == m.family());
    CHECK(back.links() == m.links());
    CHECK(back.p() == 3);
    CHECK((back.beta().array() == m.beta().array()).all());
    CHECK(back.tail_scaling() == m.tail_scaling());
    const std::vector<double> x{1, 0.2, -0.4};
    CHECK(predict_quantile(back, x, 0.97) == predict_quantile(m, x, 0.97));

    auto doc = model_to_json(m);
    doc["beta"].erase(0);
    CHECK_THROWS_AS(model_from_json(doc), ParseError);
    CHECK_THROWS_AS(load_model(dir / "missing.json"), ParseError);
  }
}
