#include <cmath>
#include <numeric>

#include "doctest.h"
#include "survsurrogate/simulation.hpp"
#include "survsurrogate/tmle.hpp"
#include "toy_dgp.hpp"

using namespace survsurrogate;

namespace {

double bisect_tilt(const std::vector<double>& q, const std::vector<double>& y,
                   const std::vector<double>& w) {
  auto score = [&](double eps) {
    double s = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) s += w[i] * (y[i] - expit(logit(q[i]) + eps));
    return s;
  };
  double lo = -10.0, hi = 10.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (score(mid) > 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

TEST_CASE("tilt with zero score stays put") {
  const std::vector<double> q{0.2, 0.8}, y{0.2, 0.8}, w{1.0, 1.0};
  const auto r = tilt_step(q, y, w);
  CHECK(r.epsilon == 0.0);
  CHECK_FALSE(r.hit_bound);
  CHECK(r.values[0] == doctest::Approx(0.2).epsilon(1e-14));
}

TEST_CASE("tilt on one row runs to the bound") {
  const std::vector<double> q{0.5}, y{1.0}, w{2.0};
  const auto r = tilt_step(q, y, w);
  CHECK(r.hit_bound);
  CHECK(r.epsilon == kTiltBound);
  CHECK(r.values[0] == doctest::Approx(expit(10.0)).epsilon(1e-14));
  const std::vector<double> y0{0.0};
  CHECK(tilt_step(q, y0, w).epsilon == -kTiltBound);
}

TEST_CASE("tilt matches a bisection oracle") {
  const std::vector<double> q{0.3, 0.6, 0.9}, y{1.0, 0.0, 0.7}, w{1.5, 0.5, 2.0};
  const auto r = tilt_step(q, y, w);
  CHECK(std::abs(r.epsilon - bisect_tilt(q, y, w)) < 1e-8);
  CHECK(std::abs(r.score) < 1e-10);
  CHECK_FALSE(r.hit_bound);
}

TEST_CASE("tilt edge cases") {
  const std::vector<double> q{0.3, 0.6}, y{1.0, 0.0}, zero{0.0, 0.0};
  const auto r = tilt_step(q, y, zero);
  CHECK(r.epsilon == 0.0);
  CHECK(r.values[1] == doctest::Approx(0.6));
  // initial values are clamped before the offset is formed
  const std::vector<double> q1{0.0, 1.0}, w{1.0, 1.0};
  const auto c = tilt_step(q1, q1, w);
  CHECK(std::isfinite(c.epsilon));
  const std::vector<double> neg{-1.0, 1.0};
  CHECK_THROWS_AS(tilt_step(q, y, neg), std::invalid_argument);
  const std::vector<double> shortv{1.0};
  CHECK_THROWS_AS(tilt_step(q, shortv, w), std::invalid_argument);
}

TEST_CASE("TMLE equals the plug-in under saturated in-sample fits") {
  const toy::Params p;
  const auto data = toy::generate(p, 20000, 9);
  const auto nu = fit_full_sample_nuisances(data, SequentialPlan(data.grid(), 1, toy::saturated()));
  const auto plug = estimate_plugin(data, nu);
  const auto td = tmle_delta(data, nu);
  const auto ts = tmle_delta_s(data, nu);
  CHECK(std::abs(td.estimate.value - plug.delta.value) < 1e-8);
  CHECK(std::abs(ts.estimate.value - plug.delta_s.value) < 1e-8);
  for (const auto& t : td.fit.tilts) CHECK(std::abs(t.epsilon) < 1e-6);
  for (const auto& t : ts.fit.tilts) CHECK(std::abs(t.epsilon) < 1e-6);
}

TEST_CASE("targeted fit solves the efficient score equation") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    auto st = setting_preset(static_cast<int>(seed));
    st.n = 800;
    const auto data = generate_setting(st, seed * 11);
    const auto folds = make_folds(data, 2, seed);
    const auto nu = crossfit_nuisances(data, folds, SequentialPlan(data.grid(), 1));
    const double n = static_cast<double>(data.size());
    const double tol = 1.0 / (n * std::log(n));
    for (const auto& r : {tmle_delta(data, nu), tmle_delta_s(data, nu)}) {
      CHECK(std::abs(mean(r.fit.targeted_if) - r.fit.estimate) < tol);
      CHECK(r.estimate.value >= -1.0);
      CHECK(r.estimate.value <= 1.0);
      CHECK(r.estimate.se > 0.0);
      CHECK(mean(r.estimate.if_values) == doctest::Approx(r.estimate.value).epsilon(1e-10));
      CHECK_FALSE(r.fit.tilts.empty());
    }
  }
}

TEST_CASE("TMLE with true nuisances and a single tilt chain") {
  const toy::Params p;
  const auto truth = toy::truth(p);
  const auto data = toy::generate(p, 20000, 77);
  const auto nu = fit_full_sample_nuisances(data, SequentialPlan(data.grid(), 1));
  const auto td = tmle_delta(data, nu);
  const auto ts = tmle_delta_s(data, nu);
  CHECK(std::abs(td.estimate.value - truth.delta) < 4.0 * td.estimate.se);
  CHECK(std::abs(ts.estimate.value - truth.delta_s) < 4.0 * ts.estimate.se);
  CHECK(td.fit.target == Target::Delta);
  CHECK(ts.fit.target == Target::DeltaS);
  // the surrogate stage shows up in the tilt log
  bool stage1 = false;
  for (const auto& t : ts.fit.tilts) stage1 = stage1 || t.stage == 1;
  CHECK(stage1);
}

TEST_CASE("targeted tables are NaN outside the risk set") {
  const toy::Params p;
  const auto data = toy::generate(p, 500, 5);
  const auto nu = fit_full_sample_nuisances(data, SequentialPlan(data.grid(), 1));
  const auto td = tmle_delta(data, nu);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const bool at_risk = data[i].in_censoring_risk_set(2);
    CHECK(std::isnan(td.fit.q_mu[data[i].g][1][i]) == !at_risk);
  }
}
