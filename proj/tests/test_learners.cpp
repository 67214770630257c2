#include <cmath>
#include <numeric>

#include "doctest.h"
#include "survsurrogate/learners.hpp"
#include "survsurrogate/rng.hpp"

using namespace survsurrogate;

namespace {

LogisticProblem random_problem(int n, std::uint64_t seed, bool fractional = false) {
  Rng rng(seed);
  LogisticProblem p;
  p.features.resize(n, 3);
  p.outcome.resize(n);
  p.weight.resize(n);
  p.offset.resize(n);
  for (int i = 0; i < n; ++i) {
    const double x1 = rng.normal(), x2 = rng.normal();
    p.features(i, 0) = 1.0;
    p.features(i, 1) = x1;
    p.features(i, 2) = x2;
    const double pr = expit(-0.3 + 0.8 * x1 - 0.5 * x2);
    p.outcome[i] = fractional ? pr * rng.uniform() : (rng.bernoulli(pr) ? 1.0 : 0.0);
    p.weight[i] = 0.5 + rng.uniform();
    p.offset[i] = 0.2 * rng.normal();
  }
  return p;
}

Eigen::VectorXd score(const LogisticProblem& p, const Eigen::VectorXd& b) {
  Eigen::VectorXd eta = p.features * b + p.offset;
  Eigen::VectorXd r(p.rows());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    r[i] = p.weight[i] * (p.outcome[i] - expit(eta[i]));
  }
  return p.features.transpose() * r;
}

// plain gradient ascent on the concave log-likelihood
Eigen::VectorXd gradient_oracle(const LogisticProblem& p) {
  Eigen::VectorXd b = Eigen::VectorXd::Zero(p.features.cols());
  const double step = 4.0 / p.weight.sum();
  for (int it = 0; it < 200000; ++it) {
    const Eigen::VectorXd g = score(p, b);
    b += step * g;
    if (g.lpNorm<Eigen::Infinity>() < 1e-12) break;
  }
  return b;
}

TrainingRows rows_from(const std::vector<double>& x, const std::vector<double>& y) {
  TrainingRows r;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi[1] = {x[i]};
    r.add(xi, {}, y[i]);
  }
  return r;
}

}  // namespace

TEST_CASE("expit and logit") {
  CHECK(expit(0.0) == 0.5);
  CHECK(logit(expit(1.7)) == doctest::Approx(1.7).epsilon(1e-12));
  CHECK(expit(-745.0) > 0.0);
  CHECK(expit(800.0) == 1.0);
  CHECK(expit(-30.0) + expit(30.0) == doctest::Approx(1.0));
  CHECK_THROWS_AS(logit(0.0), std::domain_error);
  CHECK_THROWS_AS(logit(1.0), std::domain_error);
  CHECK_THROWS_AS(logit(-0.2), std::domain_error);
  CHECK(clamp_probability(0.0) == kDefaultPMin);
  CHECK(clamp_probability(1.0) == 1.0 - kDefaultPMin);
  CHECK(clamp_probability(0.4) == 0.4);
}

TEST_CASE("design columns and names") {
  const DesignSpec main{2, 1, 1, 1};
  CHECK(main.n_features() == 4);
  const double x[2] = {2.0, 3.0};
  const double s[1] = {5.0};
  CHECK(main.features(x, s) == std::vector<double>{1, 2, 3, 5});

  const DesignSpec pairs{2, 1, 2, 2};
  CHECK(pairs.n_features() == 1 + 3 + 3 + 3);
  CHECK(pairs.features(x, s) == std::vector<double>{1, 2, 3, 5, 6, 10, 15, 4, 9, 25});
  CHECK(pairs.feature_names() ==
        std::vector<std::string>{"(Intercept)", "x1", "x2", "s1", "x1:x2", "x1:s1", "x2:s1",
                                 "x1^2", "x2^2", "s1^2"});

  const DesignSpec full{2, 1, 0, 1};
  CHECK(full.n_features() == 8);
  CHECK(full.features(x, s).back() == 30.0);

  const DesignSpec none{0, 0, 1, 1};
  CHECK(none.n_features() == 1);
  CHECK_THROWS_AS(main.features(s, s), std::invalid_argument);
}

TEST_CASE("IRLS solves the score equations") {
  const auto p = random_problem(400, 11);
  const auto fit = fit_logistic(p);
  REQUIRE(fit.converged);
  CHECK(score(p, fit.coefficients).lpNorm<Eigen::Infinity>() < 1e-6);
}

TEST_CASE("IRLS matches a gradient-ascent oracle") {
  for (bool fractional : {false, true}) {
    const auto p = random_problem(150, 5, fractional);
    const auto fit = fit_logistic(p);
    REQUIRE(fit.converged);
    const auto b = gradient_oracle(p);
    for (Eigen::Index j = 0; j < b.size(); ++j) {
      CHECK(std::abs(fit.coefficients[j] - b[j]) < 1e-6);
    }
  }
}

TEST_CASE("row order does not change the fit") {
  const auto p = random_problem(300, 3);
  std::vector<int> perm(300);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(99);
  for (int i = 299; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
  LogisticProblem q = p;
  for (int i = 0; i < 300; ++i) {
    q.features.row(i) = p.features.row(perm[i]);
    q.outcome[i] = p.outcome[perm[i]];
    q.weight[i] = p.weight[perm[i]];
    q.offset[i] = p.offset[perm[i]];
  }
  const auto a = fit_logistic(p), b = fit_logistic(q);
  CHECK((a.coefficients - b.coefficients).lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("intercept-only fit is the weighted mean") {
  LogisticProblem p;
  p.features = Eigen::MatrixXd::Ones(4, 1);
  p.outcome = Eigen::Vector4d(1, 0, 1, 0.5);
  p.weight = Eigen::Vector4d(1, 2, 1, 2);
  p.offset = Eigen::VectorXd::Zero(4);
  const auto fit = fit_logistic(p);
  REQUIRE(fit.converged);
  const double one[1] = {1.0};
  CHECK(predict_proba(fit, one) == doctest::Approx(3.0 / 6.0).epsilon(1e-9));
}

TEST_CASE("bad inputs to the solver") {
  auto p = random_problem(20, 1);
  p.weight.setZero();
  CHECK_THROWS_AS(fit_logistic(p), std::invalid_argument);
  p = random_problem(20, 1);
  p.outcome[3] = std::nan("");
  CHECK_THROWS_AS(fit_logistic(p), std::invalid_argument);
  p = random_problem(20, 1);
  p.outcome[3] = 1.5;
  CHECK_THROWS_AS(fit_logistic(p), std::invalid_argument);
}

TEST_CASE("complete separation reports non-convergence") {
  LogisticProblem p;
  const int n = 20;
  p.features.resize(n, 2);
  p.outcome.resize(n);
  for (int i = 0; i < n; ++i) {
    p.features(i, 0) = 1.0;
    p.features(i, 1) = i - 9.5;
    p.outcome[i] = i >= 10 ? 1.0 : 0.0;
  }
  p.weight = Eigen::VectorXd::Ones(n);
  p.offset = Eigen::VectorXd::Zero(n);
  IrlsOptions opt;
  opt.max_iterations = 30;
  const auto fit = fit_logistic(p, opt);
  CHECK_FALSE(fit.converged);
  CHECK(fit.diagnostic.find("separation") != std::string::npos);
}

TEST_CASE("learner constant fallbacks") {
  const LogisticLearner learner(1);
  SUBCASE("few rows") {
    const auto m = learner.fit(rows_from({0, 1, 2}, {1, 0, 1}), 0);
    CHECK(m->is_constant());
    CHECK(m->diagnostic() == "fewer than 5 rows; constant model");
    const double x[1] = {7.0};
    CHECK(m->predict(x, {}) == doctest::Approx(2.0 / 3.0));
  }
  SUBCASE("single-valued outcome is clamped") {
    const auto m = learner.fit(rows_from({0, 1, 2, 3, 4, 5}, {1, 1, 1, 1, 1, 1}), 0);
    CHECK(m->is_constant());
    CHECK(m->diagnostic() == "single-valued outcome; constant model");
    const double x[1] = {0.0};
    CHECK(m->predict(x, {}) == 1.0 - kDefaultPMin);
  }
  SUBCASE("separated outcome") {
    std::vector<double> x, y;
    for (int i = 0; i < 40; ++i) {
      x.push_back(i);
      y.push_back(i >= 20 ? 1.0 : 0.0);
    }
    const auto m = learner.fit(rows_from(x, y), 0);
    CHECK(m->is_constant());
    CHECK(m->diagnostic().find("constant model") != std::string::npos);
    const double xi[1] = {39.0};
    CHECK(m->predict(xi, {}) == doctest::Approx(0.5));
  }
  SUBCASE("too few events per feature") {
    std::vector<double> x, y;
    for (int i = 0; i < 60; ++i) {
      x.push_back(std::sin(i));
      y.push_back(i == 7 || i == 31 ? 0.0 : 1.0);
    }
    const auto m = learner.fit(rows_from(x, y), 0);
    CHECK(m->is_constant());
    CHECK(m->diagnostic() == "too few events for 2 features; constant model");
  }
  SUBCASE("zero-weight rows are ignored") {
    auto rows = rows_from({0, 1, 2, 3, 4, 5}, {1, 1, 1, 1, 1, 0});
    rows.weight[5] = 0.0;
    CHECK(learner.fit(rows, 0)->diagnostic() == "single-valued outcome; constant model");
    rows.weight.assign(6, 0.0);
    CHECK_THROWS_AS(learner.fit(rows, 0), std::invalid_argument);
  }
}

TEST_CASE("fractional outcomes are fit, not thresholded") {
  std::vector<double> x, y;
  for (int i = 0; i < 50; ++i) {
    x.push_back(i % 2);
    y.push_back(i % 2 ? 0.98 : 0.99);
  }
  const auto m = LogisticLearner(1).fit(rows_from(x, y), 0);
  REQUIRE_FALSE(m->is_constant());
  const double x0[1] = {0.0}, x1[1] = {1.0};
  CHECK(m->predict(x0, {}) == doctest::Approx(0.99).epsilon(1e-8));
  CHECK(m->predict(x1, {}) == doctest::Approx(0.98).epsilon(1e-8));
}

TEST_CASE("logistic learner recovers a propensity and is monotone") {
  Rng rng(8);
  TrainingRows rows;
  for (int i = 0; i < 4000; ++i) {
    const double x[1] = {rng.normal()};
    rows.add(x, {}, rng.bernoulli(expit(x[0])) ? 1.0 : 0.0);
  }
  const auto m = LogisticLearner(1).fit(rows, 0);
  REQUIRE_FALSE(m->is_constant());
  const double zero[1] = {0.0};
  CHECK(std::abs(m->predict(zero, {}) - 0.5) < 0.04);
  double prev = 0.0;
  for (double v = -3.0; v <= 3.0; v += 0.5) {
    const double x[1] = {v};
    const double p = m->predict(x, {});
    CHECK(p > prev);
    prev = p;
  }
  const auto c = m->coefficients();
  REQUIRE(c.size() == 2);
  CHECK(std::abs(c[1] - 1.0) < 0.15);
}

TEST_CASE("learner uses the surrogate history columns") {
  Rng rng(4);
  TrainingRows rows;
  for (int i = 0; i < 3000; ++i) {
    const double x[1] = {rng.normal()};
    const double s[2] = {rng.normal(), rng.normal()};
    rows.add(x, s, rng.bernoulli(expit(0.2 + 0.5 * x[0] - s[1])) ? 1.0 : 0.0);
  }
  LearnerOptions opt;
  opt.interaction_order = 2;
  const auto m = LogisticLearner(1, opt).fit(rows, 2);
  const auto c = m->coefficients();
  REQUIRE(c.size() == 7);
  CHECK(std::abs(c[3] + 1.0) < 0.15);
  const double x[1] = {0.0};
  const double s[1] = {0.0};
  CHECK_THROWS(m->predict(x, s));
}
