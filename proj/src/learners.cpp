#include "survsurrogate/learners.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace survsurrogate {

double expit(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double logit(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("logit: argument outside (0, 1)");
  return std::log(p) - std::log1p(-p);
}

double clamp_probability(double p, double p_min) noexcept {
  return std::clamp(p, p_min, 1.0 - p_min);
}

namespace {

// log expit(eta) and log(1 - expit(eta)) without cancellation.
double log_expit(double eta) noexcept {
  return eta >= 0.0 ? -std::log1p(std::exp(-eta)) : eta - std::log1p(std::exp(eta));
}

template <class F>
void for_each_subset(int n, int order, F&& f) {
  // lexicographic combinations of size `order` from {0..n-1}
  std::vector<int> idx(static_cast<std::size_t>(order));
  for (int i = 0; i < order; ++i) idx[static_cast<std::size_t>(i)] = i;
  if (order > n) return;
  while (true) {
    f(idx);
    int i = order - 1;
    while (i >= 0 && idx[static_cast<std::size_t>(i)] == n - order + i) --i;
    if (i < 0) return;
    ++idx[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < order; ++j) {
      idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
    }
  }
}

int max_order(const DesignSpec& d) {
  return d.interaction_order == 0 ? d.n_main() : std::min(d.interaction_order, d.n_main());
}

long binomial(int n, int k) {
  long r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

}  // namespace

int DesignSpec::n_features() const {
  const int m = n_main();
  long total = 1 + m;
  for (int r = 2; r <= max_order(*this); ++r) total += binomial(m, r);
  if (poly_degree > 1) total += static_cast<long>(m) * (poly_degree - 1);
  return static_cast<int>(total);
}

void DesignSpec::append_features(std::span<const double> x, std::span<const double> s,
                                 std::vector<double>& out) const {
  if (static_cast<int>(x.size()) != n_covariates || static_cast<int>(s.size()) != history) {
    throw std::invalid_argument("DesignSpec: expected " + std::to_string(n_covariates) +
                                " covariates and " + std::to_string(history) +
                                " surrogate values");
  }
  const std::size_t base = out.size();
  out.push_back(1.0);
  out.insert(out.end(), x.begin(), x.end());
  out.insert(out.end(), s.begin(), s.end());
  const int m = n_main();
  auto main = [&](int j) { return out[base + 1 + static_cast<std::size_t>(j)]; };
  for (int r = 2; r <= max_order(*this); ++r) {
    for_each_subset(m, r, [&](const std::vector<int>& idx) {
      double v = 1.0;
      for (int j : idx) v *= main(j);
      out.push_back(v);
    });
  }
  for (int j = 0; j < m; ++j) {
    double v = main(j);
    for (int d = 2; d <= poly_degree; ++d) {
      v *= main(j);
      out.push_back(v);
    }
  }
}

std::vector<double> DesignSpec::features(std::span<const double> x,
                                         std::span<const double> s) const {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n_features()));
  append_features(x, s, out);
  return out;
}

std::vector<std::string> DesignSpec::feature_names() const {
  std::vector<std::string> main;
  for (int j = 1; j <= n_covariates; ++j) main.push_back("x" + std::to_string(j));
  for (int j = 1; j <= history; ++j) main.push_back("s" + std::to_string(j));
  std::vector<std::string> names{"(Intercept)"};
  names.insert(names.end(), main.begin(), main.end());
  const int m = n_main();
  for (int r = 2; r <= max_order(*this); ++r) {
    for_each_subset(m, r, [&](const std::vector<int>& idx) {
      std::string n;
      for (int j : idx) n += (n.empty() ? "" : ":") + main[static_cast<std::size_t>(j)];
      names.push_back(n);
    });
  }
  for (int j = 0; j < m; ++j) {
    for (int d = 2; d <= poly_degree; ++d) {
      names.push_back(main[static_cast<std::size_t>(j)] + "^" + std::to_string(d));
    }
  }
  return names;
}

FittedModel fit_logistic(const LogisticProblem& problem, const IrlsOptions& options) {
  const auto& X = problem.features;
  const auto& y = problem.outcome;
  const auto& w = problem.weight;
  const auto& o = problem.offset;
  const Eigen::Index n = X.rows();
  const Eigen::Index d = X.cols();
  if (y.size() != n || w.size() != n || o.size() != n) {
    throw std::invalid_argument("fit_logistic: row count mismatch");
  }
  if (!X.allFinite() || !y.allFinite() || !w.allFinite() || !o.allFinite()) {
    throw std::invalid_argument("fit_logistic: non-finite input");
  }
  if ((w.array() < 0.0).any()) throw std::invalid_argument("fit_logistic: negative weight");
  if (!(w.sum() > 0.0)) throw std::invalid_argument("fit_logistic: all weights are zero");
  if ((y.array() < 0.0).any() || (y.array() > 1.0).any()) {
    throw std::invalid_argument("fit_logistic: outcome outside [0, 1]");
  }

  auto objective = [&](const Eigen::VectorXd& eta) {
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (w[i] == 0.0) continue;
      ll += w[i] * (y[i] * log_expit(eta[i]) + (1.0 - y[i]) * log_expit(-eta[i]));
    }
    return ll;
  };

  FittedModel fit;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd eta = o;
  double ll = objective(eta);
  Eigen::VectorXd p(n), wr(n);
  Eigen::MatrixXd H(d, d);
  for (int iter = 1; iter <= options.max_iterations; ++iter) {
    for (Eigen::Index i = 0; i < n; ++i) {
      p[i] = expit(eta[i]);
      wr[i] = w[i] * p[i] * (1.0 - p[i]);
    }
    const Eigen::VectorXd score = X.transpose() * (w.array() * (y - p).array()).matrix();
    H.noalias() = X.transpose() * wr.asDiagonal() * X;
    H.diagonal().array() += options.ridge;
    Eigen::VectorXd step = H.ldlt().solve(score);
    if (!step.allFinite()) {
      fit.diagnostic = "singular weighted normal equations";
      fit.n_iterations = iter;
      break;
    }
    double scale = 1.0;
    Eigen::VectorXd eta_new = X * (beta + step) + o;
    double ll_new = objective(eta_new);
    for (int h = 0; h < 40 && !(ll_new >= ll - 1e-12 * (1.0 + std::abs(ll))); ++h) {
      scale *= 0.5;
      eta_new = X * (beta + scale * step) + o;
      ll_new = objective(eta_new);
    }
    const double change = (scale * step).lpNorm<Eigen::Infinity>();
    beta += scale * step;
    eta = std::move(eta_new);
    ll = ll_new;
    fit.n_iterations = iter;
    if (change < options.tolerance) {
      fit.converged = true;
      break;
    }
  }
  if (!fit.converged && fit.diagnostic.empty()) {
    fit.diagnostic = "IRLS did not converge in " + std::to_string(options.max_iterations) +
                     " iterations (possible quasi-separation)";
  }
  fit.coefficients = std::move(beta);
  return fit;
}

double predict_proba(const FittedModel& model, std::span<const double> features, double offset,
                     double p_min) {
  if (static_cast<Eigen::Index>(features.size()) != model.coefficients.size()) {
    throw std::invalid_argument("predict_proba: feature dimension " +
                                std::to_string(features.size()) + " != " +
                                std::to_string(model.coefficients.size()));
  }
  double eta = offset;
  for (std::size_t j = 0; j < features.size(); ++j) {
    eta += features[j] * model.coefficients[static_cast<Eigen::Index>(j)];
  }
  return clamp_probability(expit(eta), p_min);
}

double LogisticModel::predict(std::span<const double> x, std::span<const double> s) const {
  thread_local std::vector<double> buf;
  buf.clear();
  design_.append_features(x, s, buf);
  return predict_proba(fit_, buf, 0.0, p_min_);
}

std::vector<double> LogisticModel::coefficients() const {
  return {fit_.coefficients.data(), fit_.coefficients.data() + fit_.coefficients.size()};
}

std::unique_ptr<ProbabilityModel> LogisticLearner::fit(const TrainingRows& rows,
                                                        int history) const {
  double sw = 0.0, swy = 0.0;
  std::size_t active = 0;
  double lo = 1.0, hi = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows.weight[i] <= 0.0) continue;
    ++active;
    sw += rows.weight[i];
    swy += rows.weight[i] * rows.outcome[i];
    lo = std::min(lo, rows.outcome[i]);
    hi = std::max(hi, rows.outcome[i]);
  }
  if (active == 0) throw std::invalid_argument("no training rows with positive weight");
  const double mean = clamp_probability(swy / sw, options_.p_min);
  if (active < options_.min_rows) {
    return std::make_unique<ConstantModel>(
        mean, "fewer than " + std::to_string(options_.min_rows) + " rows; constant model");
  }
  if (hi - lo == 0.0) {
    return std::make_unique<ConstantModel>(mean, "single-valued outcome; constant model");
  }
  const DesignSpec design{n_covariates_, history, options_.interaction_order,
                          options_.poly_degree};
  const auto d = static_cast<Eigen::Index>(design.n_features());
  {
    // Binary outcomes with too few minority events to support the design.
    double ones = 0.0, zeros = 0.0;
    bool binary = true;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows.weight[i] <= 0.0) continue;
      const double y = rows.outcome[i];
      binary = binary && (y == 0.0 || y == 1.0);
      ones += y;
      zeros += 1.0 - y;
    }
    if (binary &&
        std::min(ones, zeros) < options_.min_events_per_feature * static_cast<double>(d)) {
      return std::make_unique<ConstantModel>(
          mean, "too few events for " + std::to_string(d) + " features; constant model");
    }
  }
  LogisticProblem prob;
  prob.features.resize(static_cast<Eigen::Index>(rows.size()), d);
  prob.outcome.resize(static_cast<Eigen::Index>(rows.size()));
  prob.weight.resize(static_cast<Eigen::Index>(rows.size()));
  prob.offset = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(rows.size()));
  std::vector<double> buf;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    buf.clear();
    design.append_features(rows.x[i], rows.s[i], buf);
    const auto r = static_cast<Eigen::Index>(i);
    for (Eigen::Index j = 0; j < d; ++j) prob.features(r, j) = buf[static_cast<std::size_t>(j)];
    prob.outcome[r] = rows.outcome[i];
    prob.weight[r] = rows.weight[i];
  }
  auto fit = fit_logistic(prob, options_.irls);
  if (!fit.converged && options_.separation_fallback) {
    return std::make_unique<ConstantModel>(mean, fit.diagnostic + "; constant model");
  }
  return std::make_unique<LogisticModel>(design, std::move(fit), options_.p_min);
}

}  // namespace survsurrogate
