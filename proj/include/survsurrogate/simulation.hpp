// Synthetic data with a normal autoregressive surrogate and logistic hazards,
// the Monte-Carlo truth for (Delta, DeltaS, R), and a replication runner.
//
// Per subject: X ~ N(0,1), G ~ Bernoulli(expit(propensity_slope * X)), S_0 = 0,
//   S_k = a0 G + a1 X + a2 S_{k-1} + sd * N(0,1)
//   P(event at k | at risk) = expit(a3 + a4 G + a5 S_{k-1} + a6 G S_{k-1} + a7 X)
//   C ~ Exponential(censor_rate),  A_k = I(C > k).
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "survsurrogate/core_data.hpp"
#include "survsurrogate/estimators.hpp"
#include "survsurrogate/learners.hpp"

namespace survsurrogate {

struct SimulationSetting {
  std::string name = "custom";
  std::array<double, 8> alpha{};
  double censor_rate = 0.1;
  TimeGrid grid{6, 5};
  int n = 1000;
  double surrogate_sd = 1.0;
  double propensity_slope = 1.0;
};

/// Presets 1, 2, 3. Throws std::out_of_range for any other index.
SimulationSetting setting_preset(int index);

/// Survival probability 1 - expit(a3 + a4 g + a5 s_prev + a6 g s_prev + a7 x).
double dgp_survival(const SimulationSetting& st, int g, double s_prev, double x);
double dgp_surrogate_mean(const SimulationSetting& st, int g, double s_prev, double x);
double dgp_propensity(const SimulationSetting& st, double x);

LongitudinalDataset generate_setting(const SimulationSetting& setting, std::uint64_t seed);

/// Share of subjects whose record ends in censoring at or before t.
double censored_fraction(const LongitudinalDataset& data);

struct TruthValues {
  double delta = 0.0;        // analytic g-computation over counterfactual surrogate paths
  double delta_draws = 0.0;  // from counterfactual event draws
  double delta_s = 0.0;
  double r = 0.0;
  double mc_se = 0.0;  // Monte-Carlo SE of r
  double delta_mc_se = 0.0;
  double delta_draws_mc_se = 0.0;
  double delta_s_mc_se = 0.0;
  long oracle_n = 0;
};

/// Uses $SURROGATE_EVAL_CACHE as a cache directory when set.
TruthValues true_values_oracle(const SimulationSetting& setting, long oracle_n,
                               std::uint64_t seed, int threads = 1);

struct EstimatorConfig {
  int n_folds = 2;
  LearnerOptions learner{};
  bool plugin = true;
  bool tmle = true;
  double alpha = 0.05;
  double r_floor = kDefaultRFloor;
};

struct EstimateSummary {
  double value = 0.0;
  double se = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  bool defined = true;
};

struct ReplicationRecord {
  int rep = 0;
  std::uint64_t seed = 0;
  bool ok = true;
  std::string error;
  double censored_fraction = 0.0;
  // [estimator][target]; estimator 0 plug-in, 1 TMLE; target 0 Delta, 1 DeltaS, 2 R.
  std::array<std::array<std::optional<EstimateSummary>, 3>, 2> est;
  // TMLE diagnostics: |mean targeted EIF - estimate| for Delta and DeltaS.
  std::array<double, 2> tmle_eif_gap{0.0, 0.0};
};

struct SummaryRow {
  std::string estimator;
  std::string target;
  double truth = 0.0;
  int n_used = 0;
  int n_undefined = 0;
  double mean_estimate = 0.0;
  double bias = 0.0;
  double empirical_se = 0.0;
  double mean_se = 0.0;
  double coverage = 0.0;
  double rmse = 0.0;
};

struct SimulationTable {
  SimulationSetting setting;
  TruthValues truth;
  int n_reps = 0;
  int n_failed = 0;
  std::vector<SummaryRow> rows;
  std::vector<ReplicationRecord> replications;
};

/// One replication: generate, cross-fit, estimate.
ReplicationRecord run_one_replication(const SimulationSetting& setting,
                                      const EstimatorConfig& config, int rep,
                                      std::uint64_t root_seed);

SimulationTable run_replications(const SimulationSetting& setting, int n_reps,
                                 const EstimatorConfig& config, std::uint64_t seed,
                                 const TruthValues& truth, int threads = 1);

std::string table_csv(const SimulationTable& table);
std::string replications_csv(const SimulationTable& table);

}  // namespace survsurrogate
