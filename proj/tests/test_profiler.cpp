#include <cmath>

#include "doctest.h"
#include "exprof/profiler.hpp"
#include "fixtures.hpp"

using namespace exprof;

namespace {

ModelArtifact ls_artifact(int n = 80, std::uint64_t seed = 21) {
  const auto data = fixtures::mixed_dataset(n, seed);
  FitOptions opts;
  opts.responses = {"y", "y2"};
  return fit_artifact(data, fixtures::factors_of(data), opts);
}

std::vector<Goal> two_goals() { return {{Maximize{-2, 4}}, {Maximize{-2, 3}}}; }

double box_high(const FactorSpace& s, std::size_t f) { return std::get<Continuous>(s[f].kind).high; }

}  // namespace

TEST_CASE("a session starts at the training centers") {
  const auto a = ls_artifact();
  const auto p = init_state(a, {}, Mode::Warn);
  CHECK(p.settings() == a.center);
  CHECK_FALSE(p.status().extrapolated);
  CHECK(std::isnan(p.desirability()));
  CHECK(p.traces().size() == a.space().size());
  CHECK(p.trace(0).grid.size() == 101);
  CHECK(p.trace(4).grid.size() == 3);
}

TEST_CASE("warn flags, off stays silent, both store the value") {
  const auto a = ls_artifact();
  for (Mode m : {Mode::Warn, Mode::Off}) {
    auto p = init_state(a, {}, m);
    const double hi = box_high(p.space(), 0);
    auto r = p.set_factor(0, hi);
    CHECK(r.stored == hi);
    CHECK_FALSE(r.clamped);
    r = p.set_factor(2, std::get<Continuous>(p.space()[2].kind).low);
    CHECK(r.status.extrapolated == p.status().extrapolated);
    if (p.status().extrapolated) CHECK(p.warning() == (m == Mode::Warn));
  }
}

TEST_CASE("constrain clamps to the feasible interval") {
  const auto a = ls_artifact();
  auto p = init_state(a, {}, Mode::Constrain);
  const double thr = a.extrapolation->threshold();
  for (std::size_t f = 0; f < 4; ++f) {
    const auto& box = std::get<Continuous>(p.space()[f].kind);
    for (double v : {box.low, box.high}) {
      const auto fs = p.trace(f).feasible_set;
      const auto r = p.set_factor(f, v);
      CHECK(a.extrapolation->metric(p.settings()) <= thr);
      CHECK(r.stored >= fs.interval.low);
      CHECK(r.stored <= fs.interval.high);
      CHECK(r.clamped == (r.stored != v));
    }
  }
  CHECK_FALSE(p.status().extrapolated);
  CHECK_THROWS_AS(p.set_factor(0, box_high(p.space(), 0) + 1), OutOfBoxError);
  CHECK_THROWS_AS(p.set_factor("g", nlohmann::json("zzz")), OutOfBoxError);
  CHECK_THROWS_AS(p.set_factor("nope", nlohmann::json(1.0)), std::out_of_range);
}

TEST_CASE("switching to constrain from an extrapolated point resets") {
  const auto a = ls_artifact();
  auto p = init_state(a, {}, Mode::Warn);
  for (std::size_t f = 0; f < 4; ++f)
    p.set_factor(f, f % 2 ? std::get<Continuous>(p.space()[f].kind).low : box_high(p.space(), f));
  REQUIRE(p.status().extrapolated);
  p.set_mode(Mode::Constrain);
  CHECK(p.settings() == a.center);
  CHECK_FALSE(p.status().extrapolated);
}

TEST_CASE("constrained optimum respects the threshold, unconstrained one need not") {
  const auto a = ls_artifact();
  GAConfig cfg;
  cfg.seed = 3;
  auto off = init_state(a, two_goals(), Mode::Off);
  auto con = init_state(a, two_goals(), Mode::Constrain);
  const auto r_off = off.optimize_desirability(cfg);
  const auto r_con = con.optimize_desirability(cfg);
  CHECK(r_con.feasible);
  CHECK(*r_con.metric <= *r_con.threshold * (1 + 1e-9));
  CHECK(r_off.objective >= r_con.objective - 1e-9);
  CHECK(*r_off.metric > *r_con.metric);
  CHECK(con.settings() == r_con.best);
  CHECK_THROWS_AS(init_state(a, {}, Mode::Off).optimize_desirability(cfg), std::invalid_argument);
  CHECK_THROWS_AS(init_state(a, {{Maximize{0, 1}}}, Mode::Off), std::invalid_argument);
}

TEST_CASE("boosted model under regularized T2: constraining costs little desirability") {
  const auto data = fixtures::mixed_dataset(150, 31);
  FitOptions opts;
  opts.kind = ModelKind::Boosted;
  opts.responses = {"y", "y2"};
  opts.boost.stages = 6;
  opts.boost.iterations = 200;
  const auto a = fit_artifact(data, fixtures::factors_of(data), opts);
  CHECK(a.extrapolation->kind() == MetricKind::RegT2);
  GAConfig cfg;
  cfg.seed = 8;
  cfg.generations = 120;
  const std::vector<Goal> wide{{Maximize{-4, 8}}, {Maximize{-4, 8}}};
  const auto r_off = init_state(a, wide, Mode::Off).optimize_desirability(cfg);
  const auto r_con = init_state(a, wide, Mode::Constrain).optimize_desirability(cfg);
  CHECK(r_con.feasible);
  CHECK_FALSE(r_off.feasible);
  CHECK(*r_off.metric > *r_off.threshold);
  CHECK(*r_con.metric <= *r_con.threshold);
  CHECK(r_off.objective - r_con.objective < 0.05);
  MESSAGE("desirability off " << r_off.objective << " constrained " << r_con.objective << "; metric "
                              << *r_off.metric << " vs " << *r_con.metric);
}

TEST_CASE("state JSON") {
  const auto a = ls_artifact();
  auto p = init_state(a, two_goals(), Mode::Warn, 11);
  const auto j = p.state_json();
  CHECK(j["v"] == 1);
  CHECK(j["mode"] == "warn");
  CHECK(j["responses"] == nlohmann::json{"y", "y2"});
  CHECK(j["resolution"] == 11);
  CHECK(j["settings"]["g"].is_string());
  const auto t = p.traces_json();
  CHECK(t[0]["grid"].size() == 11);
  CHECK(t[4]["kind"] == "categorical");
  CHECK(ModelArtifact::from_json(a.to_json()).to_json() == a.to_json());
}
