#include <cmath>

#include "doctest.h"
#include "exprof/simulation.hpp"

using namespace exprof;

TEST_CASE("scenario validation and JSON") {
  SimulationScenario s;
  s.r = s.p + 1;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = {};
  s.alpha = 1.0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = {};
  s.p_cat = 19;  // leaves one continuous column
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = {};
  s.variant = MetricVariant::PseudoInverse;
  s.noise = NoiseModel::Broadcast;
  s.seed = 99;
  const auto back = scenario_from_json(to_json(s));
  CHECK(to_json(back) == to_json(s));
  CHECK_THROWS(scenario_from_json({{"variant", "magic"}}));
}

TEST_CASE("no latent factors means identity covariance") {
  const auto s = simulate_factor_matrix(50, 4, 0, 1);
  CHECK(s.true_sigma.isApprox(Eigen::MatrixXd::Identity(4, 4)));
  const auto b = simulate_factor_matrix(50, 4, 0, 1, NoiseModel::Broadcast);
  CHECK(b.true_sigma.isApprox(Eigen::MatrixXd::Ones(4, 4)));
}

TEST_CASE("sample covariance approaches the stated covariance") {
  for (auto noise : {NoiseModel::Matrix, NoiseModel::Broadcast}) {
    const auto s = simulate_factor_matrix(30, 5, 2, 7, noise);
    CHECK(s.true_sigma.isApprox(s.loadings.transpose() * s.loadings +
                                    (noise == NoiseModel::Matrix ? Eigen::MatrixXd(Eigen::MatrixXd::Identity(5, 5))
                                                                 : Eigen::MatrixXd(Eigen::MatrixXd::Ones(5, 5)))));
    const Eigen::MatrixXd x = draw_rows(s.loadings, 200000, 8, noise);
    const Eigen::MatrixXd c = x.rowwise() - x.colwise().mean();
    const Eigen::MatrixXd cov = c.transpose() * c / double(x.rows() - 1);
    CHECK((cov - s.true_sigma).cwiseAbs().maxCoeff() <= 0.05 * s.true_sigma.diagonal().maxCoeff());
  }
  CHECK(simulate_factor_matrix(30, 5, 2, 7).x == simulate_factor_matrix(30, 5, 2, 7).x);
  CHECK(simulate_factor_matrix(30, 5, 2, 7).x != simulate_factor_matrix(30, 5, 2, 8).x);
}

TEST_CASE("oracle threshold") {
  // chi-square(2) upper 5% point is 5.9915
  CHECK_FALSE(oracle_label(5.99, 2, 0.05));
  CHECK(oracle_label(5.993, 2, 0.05));
  CHECK(true_t2(Eigen::MatrixXd::Identity(2, 2) * 4, Eigen::Vector2d(2, 4)) == doctest::Approx(5));
}

TEST_CASE("grid runs from a typical point to a violating corner") {
  const auto s = simulate_factor_matrix(200, 6, 3, 12);
  const auto g = extrapolation_grid(s.x, s.true_sigma, 15, 0.05);
  REQUIRE(g.points.size() == 15);
  CHECK(g.col_a != g.col_b);
  CHECK_FALSE(g.points.front().extrapolated);
  CHECK(g.points.back().extrapolated);
  bool seen = false;
  for (const auto& p : g.points) {
    if (seen) CHECK(p.extrapolated);
    seen = seen || p.extrapolated;
    CHECK(p.t2_true == doctest::Approx(true_t2(s.true_sigma, p.x)));
  }
  const Eigen::VectorXd corner = g.points.back().x;
  const Eigen::VectorXd center = g.points.front().x;
  const double da = corner[g.col_a] - center[g.col_a], db = corner[g.col_b] - center[g.col_b];
  CHECK(da * db * g.correlation < 0);  // against the correlation sign
}

TEST_CASE("discretization at quantiles") {
  CHECK(level_of(0.5, {1.0, 2.0}) == 0);
  CHECK(level_of(1.5, {1.0, 2.0}) == 1);
  CHECK(level_of(9.0, {1.0, 2.0}) == 2);
  const auto s = simulate_factor_matrix(4000, 6, 2, 3);
  const auto d = discretize(s.x, 4, 5);
  REQUIRE(d.columns.size() == 4);
  CHECK(std::is_sorted(d.columns.begin(), d.columns.end()));
  CHECK(d.space.size() == 6);
  for (std::size_t k = 0; k < d.columns.size(); ++k) {
    const auto j = d.columns[k];
    const std::size_t levels = d.cuts[k].size() + 1;
    CHECK(levels >= 2);
    CHECK(levels <= 4);
    CHECK(d.space[j].level_count() == levels);
    CHECK(d.space[j].levels().front() == "L1");
    std::vector<double> col(s.x.col(j).data(), s.x.col(j).data() + s.x.rows());
    std::sort(col.begin(), col.end());
    std::vector<std::size_t> count(levels);
    for (Eigen::Index i = 0; i < s.x.rows(); ++i) ++count[level_of(s.x(i, j), d.cuts[k])];
    for (auto c : count) CHECK(std::abs(double(c) / 4000 - 1.0 / levels) <= 0.1 / levels);
    if (levels == 2) CHECK(d.cuts[k][0] == doctest::Approx(0.5 * (col[1999] + col[2000])).epsilon(1e-3));
    const Settings set = d.apply(s.x.row(7).transpose());
    CHECK(set[j] == double(level_of(s.x(7, j), d.cuts[k])));
  }
}

TEST_CASE("pseudo-inverse training T2 is constant at n-1 when p >= n") {
  const auto s = simulate_factor_matrix(20, 20, 19, 77);
  const auto fit = fit_pseudo_inverse_t2(s.x);
  CHECK(fit.rank == 19);
  // SVD oracle for the pair-count covariance pseudo-inverse
  const Eigen::MatrixXd c = s.x.rowwise() - s.x.colwise().mean();
  const Eigen::MatrixXd cov = c.transpose() * c / 20.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::VectorXd inv = svd.singularValues();
  for (Eigen::Index k = 0; k < inv.size(); ++k) inv[k] = inv[k] > 1e-10 * inv[0] ? 1 / inv[k] : 0;
  const Eigen::MatrixXd pinv = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
  for (Eigen::Index i = 0; i < 20; ++i) {
    const double t2 = c.row(i).dot(pinv * c.row(i).transpose());
    CHECK(fit.t2_train[i] == doctest::Approx(t2).epsilon(1e-6));
    CHECK(fit.t2_train[i] == doctest::Approx(19.0).epsilon(1e-8));
  }
}

TEST_CASE("normal interval") {
  const auto ci = normal_ci({0, 1, 1, 1});
  CHECK(ci.rate == 0.75);
  CHECK(ci.count == 4);
  CHECK(ci.high <= 1.0);
  CHECK(ci.low == doctest::Approx(0.75 - 1.96 * 0.5 / 2));
  CHECK(std::isnan(normal_ci({}).rate));
}

TEST_CASE("studies are reproducible and thread invariant") {
  SimulationScenario s;
  s.n = 40;
  s.p = 6;
  s.r = 3;
  s.p_cat = 2;
  s.replicates = 6;
  s.n_grid = 8;
  s.seed = 5;
  const auto a = run_study(s);
  s.threads = 3;
  const auto b = run_study(s);
  CHECK(a.records_csv() == b.records_csv());
  CHECK(a.summary_json()["fpr"] == b.summary_json()["fpr"]);
  CHECK(a.tpr.size() == 8);
  CHECK(a.records_csv().rfind("replicate,rank,t2_true,label,metric,ucl,flagged\n", 0) == 0);
  CHECK(a.tpr_svg().find("<svg") != std::string::npos);
  const auto rec = run_replicate(s, 2);
  CHECK(rec.grid_metric == a.replicates[2].grid_metric);
}

TEST_CASE("large samples: few false alarms, the far corner is caught") {
  SimulationScenario s;
  s.n = 10000;
  s.p = 5;
  s.r = 2;
  s.replicates = 4;
  s.n_test = 2000;
  s.seed = 3;
  const auto res = run_study(s);
  CHECK(res.fpr.rate <= s.alpha);
  CHECK(res.tpr.back().rate >= 0.99);
}
