// Influence-function variances and stepdown selection of the surrogate horizon.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace survsurrogate {

/// Standard normal quantile.
double normal_quantile(double p);

struct VarianceResult {
  double sigma2 = 0.0;  // sample variance (divisor n - 1)
  double se = 0.0;      // sqrt(sigma2 / n)
};

/// Throws std::invalid_argument when fewer than two values.
VarianceResult variance_from_if(std::span<const double> if_values);

/// Delta-method variance of 1 - deltaS / delta from the centered moments of
/// the two influence vectors (divisor n - 1). Requires |delta| > 0.
double variance_r(double delta, double delta_s, std::span<const double> phi,
                  std::span<const double> phi_s);

/// Per-subject influence values of R = 1 - deltaS/delta, centered at r.
std::vector<double> r_influence(double delta, double delta_s, std::span<const double> phi,
                                std::span<const double> phi_s);

/// Empirical covariance of the columns (divisor n - 1).
Eigen::MatrixXd covariance_sigma(const Eigen::MatrixXd& if_matrix);

/// Influence vectors for one candidate horizon j.
struct StepdownCandidate {
  int j = 0;
  double delta_s_j = 0.0;   // DeltaS(t, j)
  double delta_s_tl = 0.0;  // DeltaS(t, t_L)
  double delta = 0.0;       // Delta(t)
  std::vector<double> phi_s_j;
  std::vector<double> phi_s_tl;
  std::vector<double> phi;
};

struct StepdownOptions {
  double margin = 0.1;
  double alpha = 0.05;
  bool monotone = true;
  // Multiplier-bootstrap critical values (required when monotone = false).
  bool bootstrap = false;
  int bootstrap_reps = 1000;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct StepdownTest {
  int j = 0;
  double delta_hat = 0.0;
  double sigma_delta = 0.0;  // sqrt(zeta' Sigma zeta); NaN when se was supplied directly
  double se = 0.0;
  double tau = 0.0;
  bool rejected = false;
  int removed_at_step = 0;  // 1-based step at which j left the hypothesis set; 0 = kept
};

struct StepdownStep {
  std::vector<int> hypotheses;
  int argmax = 0;
  double max_stat = 0.0;
  double critical_value = 0.0;
  bool rejected = false;
};

struct StepdownResult {
  int t_L = 0;
  std::vector<StepdownTest> tests;  // ordered by j
  std::vector<StepdownStep> steps;
  int recommended_t0 = 0;
  double margin = 0.0;
  double alpha = 0.0;
  bool monotone = true;
  std::string diagnostic;
};

/// The point estimate and Sigma based test for each candidate j < t_L.
/// Throws std::invalid_argument for margin outside (0,1), and for
/// monotone = false without the bootstrap enabled.
StepdownResult stepdown_select_t0(std::span<const StepdownCandidate> candidates, int t_L,
                                  const StepdownOptions& options);

/// Same procedure on precomputed delta_hat_j and standard errors (monotone
/// critical values only).
StepdownResult stepdown_from_statistics(std::span<const int> js,
                                        std::span<const double> delta_hat,
                                        std::span<const double> se, int t_L,
                                        const StepdownOptions& options);

}  // namespace survsurrogate
