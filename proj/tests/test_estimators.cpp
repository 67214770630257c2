#include <cmath>
#include <numeric>

#include "doctest.h"
#include "survsurrogate/estimators.hpp"
#include "survsurrogate/inference.hpp"
#include "toy_dgp.hpp"

using namespace survsurrogate;

namespace {

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

TEST_CASE("toy truth is internally consistent") {
  const auto t = toy::truth({});
  CHECK(t.delta > 0.05);
  CHECK(t.delta_s < t.delta);
  CHECK(t.r == doctest::Approx(1.0 - t.delta_s / t.delta));
  // no surrogate effect of treatment: standardizing removes nothing
  toy::Params none;
  none.s_effect = 0.0;
  const auto u = toy::truth(none);
  CHECK(u.delta_s == doctest::Approx(u.delta).epsilon(1e-12));
}

TEST_CASE("one-step estimates with true nuisances are unbiased") {
  const toy::Params p;
  const auto truth = toy::truth(p);
  const auto data = toy::generate(p, 40000, 31);
  const auto nu = toy::true_nuisance_set(p, data);
  const auto est = estimate_plugin(data, nu);
  CHECK(std::abs(est.delta.value - truth.delta) < 3.5 * est.delta.se);
  CHECK(std::abs(est.delta_s.value - truth.delta_s) < 3.5 * est.delta_s.se);
  CHECK(std::abs(est.r.value - truth.r) < 3.5 * est.r.se);
  CHECK(mean(est.delta.if_values) == doctest::Approx(est.delta.value).epsilon(1e-12));
  CHECK(est.r.defined);
  CHECK(est.r.reason.empty());
}

TEST_CASE("IF components split by arm") {
  const toy::Params p;
  const auto data = toy::generate(p, 50, 2);
  const auto nu = toy::true_nuisance_set(p, data);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto c = if_components_delta(data[i], nu[i], data.grid());
    CHECK(c.weighted[1 - data[i].g] == 0.0);
    CHECK(c.surrogate[0] == 0.0);
    CHECK(c.surrogate[1] == 0.0);
    CHECK(c.value() == doctest::Approx(c.weighted[1] + c.substitution[1] - c.weighted[0] -
                                       c.substitution[0]));
    const auto cs = if_components_delta_s(data[i], nu[i], data.grid());
    CHECK(cs.weighted[1 - data[i].g] == 0.0);
    CHECK(eval_if_delta_s(data[i], nu[i], data.grid()) == cs.value());
  }
}

TEST_CASE("surrogate ratio") {
  SubjectNuisances nu;
  nu.pi = {0.6, 0.3};
  nu.pi_star = {0.5, 0.4};
  const TimeGrid grid(3, 2);
  CHECK(surrogate_ratio(nu, grid, 1, 0) == 1.0);
  CHECK(surrogate_ratio(nu, grid, 1, 1) == doctest::Approx(0.5 / 0.6));
  CHECK(surrogate_ratio(nu, grid, 0, 2) == doctest::Approx(0.6 / 0.7));
  CHECK(surrogate_ratio(nu, grid, 0, 3) == 1.0);
}

TEST_CASE("saturated in-sample fits make the three estimators coincide") {
  const toy::Params p;
  const auto data = toy::generate(p, 20000, 9);
  const SequentialPlan plan(data.grid(), 1, toy::saturated());
  const auto nu = fit_full_sample_nuisances(data, plan);
  const auto est = estimate_plugin(data, nu);
  const double ipw = estimate_ipw_delta(data, nu);
  const double sub = estimate_substitution_delta(data, nu);
  CHECK(std::abs(est.delta.value - sub) < 1e-10);
  CHECK(std::abs(est.delta.value - ipw) < 1e-10);
  const double ipw_s = estimate_ipw_delta_s(data, nu);
  const double sub_s = estimate_substitution_delta_s(data, nu);
  CHECK(std::abs(est.delta_s.value - sub_s) < 1e-10);
  CHECK(std::abs(est.delta_s.value - ipw_s) < 1e-10);
}

TEST_CASE("R below the floor is undefined") {
  const TimeGrid grid(3, 2);
  const auto d = make_estimate(Target::Delta, 1e-8, {1e-8, -1e-8, 3e-8}, grid, 0.05);
  const auto ds = make_estimate(Target::DeltaS, 0.1, {0.1, 0.2, 0.0}, grid, 0.05);
  const auto r = make_r_estimate(d, ds, 0.05);
  CHECK_FALSE(r.defined);
  CHECK(r.reason == "treatment effect indistinguishable from zero");
  CHECK(std::isnan(r.value));
  CHECK(std::isnan(r.se));
  CHECK(make_r_estimate(d, ds, 0.05, 1e-9).defined);
}

TEST_CASE("normal interval from influence values") {
  const std::vector<double> phi{0.1, 0.4, 0.3, 0.2};
  const auto e = make_estimate(Target::Delta, 0.25, phi, TimeGrid(2, 1), 0.05);
  const double sigma2 = (0.0225 + 0.0225 + 0.0025 + 0.0025) / 3.0;
  CHECK(e.sigma2 == doctest::Approx(sigma2));
  CHECK(e.se == doctest::Approx(std::sqrt(sigma2 / 4.0)));
  const double z = normal_quantile(0.975);
  CHECK(z == doctest::Approx(1.959963984540054).epsilon(1e-12));
  CHECK(e.ci_lo == doctest::Approx(0.25 - z * e.se));
  CHECK(e.ci_hi == doctest::Approx(0.25 + z * e.se));
  const auto e90 = make_estimate(Target::Delta, 0.25, phi, TimeGrid(2, 1), 0.10);
  CHECK(e90.ci_hi - e90.ci_lo < e.ci_hi - e.ci_lo);
}

TEST_CASE("R interval uses the delta method") {
  const toy::Params p;
  const auto data = toy::generate(p, 3000, 4);
  const auto est = estimate_plugin(data, toy::true_nuisance_set(p, data));
  const double v = variance_r(est.delta.value, est.delta_s.value, est.delta.if_values,
                              est.delta_s.if_values);
  CHECK(est.r.se == doctest::Approx(std::sqrt(v / 3000.0)));
  CHECK(est.r.value == doctest::Approx(1.0 - est.delta_s.value / est.delta.value));
}

TEST_CASE("missing nuisances are reported with the subject") {
  const toy::Params p;
  const auto data = toy::generate(p, 20, 2);
  auto vals = toy::true_nuisance_set(p, data).values();
  vals[3].mu[1][0] = kMissing;
  const auto nu = toy::true_nuisance_set(p, data).with_values(vals);
  try {
    (void)if_vector_delta(data, nu);
    FAIL("expected an exception");
  } catch (const std::invalid_argument& ex) {
    CHECK(std::string(ex.what()).find("subject t3") != std::string::npos);
  }
}
