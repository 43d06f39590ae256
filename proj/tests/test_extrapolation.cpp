#include <random>

#include "doctest.h"
#include "exprof/extrapolation.hpp"
#include "exprof/models.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace exprof;
using nlohmann::json;

TEST_CASE("leverage agrees with the explicit hat matrix") {
  std::mt19937_64 rng(1);
  Eigen::MatrixXd x(40, 4);
  x.col(0).setOnes();
  x.rightCols(3) = oracle::random_correlated(40, 3, rng);
  const Eigen::MatrixXd h = oracle::hat_matrix(x);
  CHECK((hat_diagonal(x) - h.diagonal()).cwiseAbs().maxCoeff() < 1e-12);
  const auto lm = fit_leverage_model(x);
  CHECK(lm.max_h() == doctest::Approx(h.diagonal().maxCoeff()).epsilon(1e-12));
  CHECK(lm.avg_h() == 4.0 / 40.0);
  Eigen::Vector4d pt(1.0, 2.0, -1.0, 0.5);
  CHECK(lm.leverage(pt) == doctest::Approx(pt.dot((x.transpose() * x).inverse() * pt)).epsilon(1e-10));
  for (Eigen::Index i = 0; i < 40; ++i)
    CHECK(lm.leverage(x.row(i).transpose()) == doctest::Approx(h(i, i)).epsilon(1e-10));
}

TEST_CASE("leverage threshold rules") {
  const LeverageModel avg(Eigen::MatrixXd::Identity(11, 11), 0.18, 309, AverageLeverage{2});
  CHECK(avg.threshold() == doctest::Approx(22.0 / 309.0));
  const LeverageModel mx(Eigen::MatrixXd::Identity(11, 11), 0.18, 309, MaxLeverage{1});
  CHECK(mx.threshold() == 0.18);
  const LeverageModel mx2(Eigen::MatrixXd::Identity(11, 11), 0.18, 309, MaxLeverage{1.5});
  CHECK(mx2.threshold() == doctest::Approx(0.27));
}

TEST_CASE("singular designs are rejected") {
  Eigen::MatrixXd x(10, 3);
  x.col(0).setOnes();
  x.col(1) = Eigen::VectorXd::LinSpaced(10, 0, 1);
  x.col(2) = 2 * x.col(1);
  CHECK_THROWS_AS(fit_leverage_model(x), std::invalid_argument);
}

TEST_CASE("regularized T2 matches the explicit-inverse Mahalanobis distance") {
  std::mt19937_64 rng(2);
  const Eigen::MatrixXd x = oracle::random_correlated(15, 25, rng);
  const auto model = fit_regt2_model(EncodedMatrix::from_complete(x));
  const Eigen::VectorXd pt = oracle::random_normal(25, 1, rng);
  const double expected = oracle::mahalanobis(pt, model.cov().mean(), model.cov().sigma());
  CHECK(model.t2(pt) == doctest::Approx(expected).epsilon(1e-9));
  for (Eigen::Index i = 0; i < 15; ++i) {
    const Eigen::VectorXd row = x.row(i).transpose();
    CHECK(model.t2_train()[i] == doctest::Approx(model.t2(row)).epsilon(1e-12));
  }
  CHECK(model.ucl() == doctest::Approx(control_limit(model.t2_train(), 3.0)));
}

TEST_CASE("missing coordinates are imputed at the mean") {
  std::mt19937_64 rng(3);
  const Eigen::MatrixXd x = oracle::random_correlated(30, 4, rng);
  const auto model = fit_regt2_model(EncodedMatrix::from_complete(x));
  Eigen::VectorXd pt(4);
  pt << 0.3, NAN, -1.0, 2.0;
  Eigen::VectorXd filled = pt;
  filled[1] = model.cov().mean()[1];
  CHECK(model.t2(pt) == doctest::Approx(model.t2(filled)).epsilon(1e-14));
  CHECK_THROWS_AS(model.t2(Eigen::VectorXd::Constant(4, NAN)), std::invalid_argument);
}

TEST_CASE("control limit and classification") {
  Eigen::VectorXd t2(3);
  t2 << 1, 2, 3;
  CHECK(control_limit(t2) == 5.0);
  CHECK(control_limit(t2, 2.0) == 4.0);
  CHECK_FALSE(classify(5.0, 5.0).extrapolated);
  CHECK(classify(5.0 + 1e-12, 5.0).extrapolated);
  CHECK_THROWS_AS(classify(1.0, 0.0), std::invalid_argument);
  const json j = to_json(classify(2.0, 1.0, MetricKind::Leverage));
  CHECK(j["kind"] == "leverage");
  CHECK(j["extrapolated"] == true);
  CHECK(j["metric"] == 2.0);
  CHECK(j["threshold"] == 1.0);
}

namespace {

struct Models {
  Dataset data = fixtures::mixed_dataset(80, 7);
  FactorSpace space = fixtures::factors_of(data);
  ExtrapolationModel lev{space, fit_least_squares(data, space, "y")->leverage()};
  ExtrapolationModel t2{space, fit_regt2_model(encode(data, space))};
};

}  // namespace

TEST_CASE("metrics are quadratic along a continuous factor") {
  Models m;
  for (const auto* model : {&m.lev, &m.t2}) {
    Settings s{{0.2, -0.1, 0.4, 0.0, 1}};
    for (std::size_t f = 0; f < 4; ++f) {
      const auto q = model->trace_quadratic(s, f);
      for (double t : {-1.5, -0.2, 0.7, 1.9}) {
        Settings p = s;
        p[f] = t;
        const double u = t - q.origin;
        CHECK(model->metric(p) == doctest::Approx(q.a * u * u + q.b * u + q.c).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("feasible interval endpoints sit on the threshold") {
  Models m;
  for (const auto* model : {&m.lev, &m.t2}) {
    const Settings s{{0.1, 0.1, 0.1, 0.1, 1}};
    for (std::size_t f = 0; f < 4; ++f) {
      const auto fs = feasible_interval(*model, s, f);
      REQUIRE_FALSE(fs.empty());
      CHECK(fs.interval.contains(s[f]));
      const auto box = std::get<Continuous>(m.space[f].kind);
      for (double end : {fs.interval.low, fs.interval.high}) {
        if (end == box.low || end == box.high) continue;
        Settings e = s;
        e[f] = end;
        CHECK(std::abs(model->metric(e) - model->threshold()) <= 1e-8 * model->threshold());
      }
    }
  }
}

TEST_CASE("categorical feasible set equals enumeration") {
  Models m;
  for (const auto* model : {&m.lev, &m.t2}) {
    for (double shift : {0.0, 1.0, 2.0}) {
      Settings s{{shift, -shift, 0.5 * shift, 0.0, 0}};
      const auto fs = feasible_interval(*model, s, 4);
      CHECK_FALSE(fs.continuous);
      std::vector<std::size_t> expected;
      for (std::size_t l = 0; l < 3; ++l) {
        Settings p = s;
        p[4] = double(l);
        if (model->metric(p) <= model->threshold()) expected.push_back(l);
      }
      CHECK(fs.levels == expected);
    }
  }
}

TEST_CASE("a far-away state can leave a factor with no feasible values") {
  Models m;
  const auto box1 = std::get<Continuous>(m.space[0].kind);
  const auto box2 = std::get<Continuous>(m.space[1].kind);
  // push two correlated factors to opposite corners
  Settings s{{box1.high, box2.low, 0.0, 0.0, 0}};
  bool any_empty = false;
  for (std::size_t f = 2; f < 4; ++f) any_empty = any_empty || feasible_interval(m.t2, s, f).empty();
  CHECK(any_empty);
}

TEST_CASE("extrapolation models round-trip through JSON") {
  Models m;
  const Settings s{{0.5, -0.3, 1.1, 0.2, 2}};
  for (const auto* model : {&m.lev, &m.t2}) {
    const json j = model->to_json();
    const auto back = ExtrapolationModel::from_json(m.space, j);
    CHECK(back.kind() == model->kind());
    CHECK(back.threshold() == doctest::Approx(model->threshold()).epsilon(1e-14));
    CHECK(back.metric(s) == doctest::Approx(model->metric(s)).epsilon(1e-12));
    CHECK(back.to_json().dump() == j.dump());
  }
}

TEST_CASE("exact F-based limit against table values") {
  // F_{0.95}(2, 28) = 3.3404 and F_{0.95}(5, 20) = 2.7109 from standard tables
  CHECK(f_limit(2, 30, 0.05) == doctest::Approx(31.0 * 29 * 2 / (30.0 * 28) * 3.3404).epsilon(1e-4));
  CHECK(f_limit(5, 25, 0.05) == doctest::Approx(26.0 * 24 * 5 / (25.0 * 20) * 2.7109).epsilon(1e-4));
  CHECK(f_limit(5, 25, 0.01) > f_limit(5, 25, 0.05));
  CHECK_THROWS_AS(f_limit(5, 5, 0.05), std::invalid_argument);
}
