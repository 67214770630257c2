// Weighted logistic regression with offsets and fractional outcomes.
#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace survsurrogate {

inline constexpr double kDefaultPMin = 1e-3;

/// Numerically stable logistic function; strictly positive down to x = -745.
double expit(double x) noexcept;
/// Inverse of expit. Throws std::domain_error unless 0 < p < 1.
double logit(double p);
double clamp_probability(double p, double p_min = kDefaultPMin) noexcept;

/// Feature map over (X, S_1..S_m).
///
/// Columns are: intercept, x_1..x_p, s_1..s_m, then (if interaction_order != 1)
/// products of distinct main-effect columns in lexicographic order up to the
/// requested order (0 = every subset), then powers 2..poly_degree of each main
/// effect. The ordering is deterministic.
struct DesignSpec {
  int n_covariates = 0;
  int history = 0;
  int interaction_order = 1;
  int poly_degree = 1;

  int n_main() const noexcept { return n_covariates + history; }
  int n_features() const;
  void append_features(std::span<const double> x, std::span<const double> s,
                       std::vector<double>& out) const;
  std::vector<double> features(std::span<const double> x, std::span<const double> s) const;
  std::vector<std::string> feature_names() const;

  bool operator==(const DesignSpec&) const = default;
};

/// Rows of a weighted, offset logistic regression problem.
struct LogisticProblem {
  Eigen::MatrixXd features;  // n x d
  Eigen::VectorXd outcome;   // in [0, 1]
  Eigen::VectorXd weight;    // >= 0
  Eigen::VectorXd offset;

  std::size_t rows() const noexcept { return static_cast<std::size_t>(features.rows()); }
};

struct IrlsOptions {
  int max_iterations = 100;
  double tolerance = 1e-10;
  double ridge = 1e-8;
};

struct FittedModel {
  Eigen::VectorXd coefficients;
  bool converged = false;
  int n_iterations = 0;
  // Set when the fit fell back to a constant (weighted-mean) model.
  bool constant_fallback = false;
  std::string diagnostic;
};

/// Maximizes sum_i w_i [y_i log p_i + (1 - y_i) log(1 - p_i)], p_i = expit(x_i'b + o_i).
/// Throws std::invalid_argument on all-zero weights or non-finite inputs.
/// Quasi-separation yields converged = false rather than an exception.
FittedModel fit_logistic(const LogisticProblem& problem, const IrlsOptions& options = {});

/// expit(x'b + offset), clamped to [p_min, 1 - p_min].
double predict_proba(const FittedModel& model, std::span<const double> features,
                     double offset = 0.0, double p_min = kDefaultPMin);

/// A fitted conditional-probability (or conditional-mean in [0,1]) model.
class ProbabilityModel {
public:
  virtual ~ProbabilityModel() = default;
  virtual double predict(std::span<const double> x, std::span<const double> s) const = 0;
  /// Coefficients for debugging dumps; empty for models without a linear form.
  virtual std::vector<double> coefficients() const { return {}; }
  virtual bool is_constant() const { return false; }
  virtual std::string diagnostic() const { return {}; }
};

/// Training rows handed to a Learner: raw (x, s-history) plus outcome and weight.
struct TrainingRows {
  std::vector<std::vector<double>> x;
  std::vector<std::vector<double>> s;
  std::vector<double> outcome;
  std::vector<double> weight;

  void add(std::span<const double> xi, std::span<const double> si, double y, double w = 1.0) {
    x.emplace_back(xi.begin(), xi.end());
    s.emplace_back(si.begin(), si.end());
    outcome.push_back(y);
    weight.push_back(w);
  }
  std::size_t size() const noexcept { return outcome.size(); }
};

/// Strategy for producing ProbabilityModels; the shipped default is logistic
/// regression on a DesignSpec.
class Learner {
public:
  virtual ~Learner() = default;
  virtual std::unique_ptr<ProbabilityModel> fit(const TrainingRows& rows, int history) const = 0;
};

struct LearnerOptions {
  int interaction_order = 1;
  int poly_degree = 1;
  double p_min = kDefaultPMin;
  // Fall back to a constant model below this many rows.
  std::size_t min_rows = 5;
  // A fit that does not converge (separation in a small risk set) is replaced
  // by the constant model instead of keeping diverging coefficients.
  bool separation_fallback = true;
  // Constant model for binary outcomes when the minority class has fewer than
  // this many rows per design column.
  double min_events_per_feature = 2.0;
  IrlsOptions irls{};
};

class ConstantModel final : public ProbabilityModel {
public:
  ConstantModel(double value, std::string diagnostic)
      : value_(value), diagnostic_(std::move(diagnostic)) {}
  double predict(std::span<const double>, std::span<const double>) const override {
    return value_;
  }
  std::vector<double> coefficients() const override { return {value_}; }
  bool is_constant() const override { return true; }
  std::string diagnostic() const override { return diagnostic_; }

private:
  double value_;
  std::string diagnostic_;
};

class LogisticModel final : public ProbabilityModel {
public:
  LogisticModel(DesignSpec design, FittedModel fit, double p_min)
      : design_(design), fit_(std::move(fit)), p_min_(p_min) {}
  double predict(std::span<const double> x, std::span<const double> s) const override;
  std::vector<double> coefficients() const override;
  std::string diagnostic() const override { return fit_.diagnostic; }
  const FittedModel& fit() const noexcept { return fit_; }
  const DesignSpec& design() const noexcept { return design_; }

private:
  DesignSpec design_;
  FittedModel fit_;
  double p_min_;
};

class LogisticLearner final : public Learner {
public:
  LogisticLearner(int n_covariates, LearnerOptions options = {})
      : n_covariates_(n_covariates), options_(options) {}
  std::unique_ptr<ProbabilityModel> fit(const TrainingRows& rows, int history) const override;
  const LearnerOptions& options() const noexcept { return options_; }

private:
  int n_covariates_;
  LearnerOptions options_;
};

}  // namespace survsurrogate
