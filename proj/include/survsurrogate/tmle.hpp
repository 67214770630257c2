// Targeted minimum loss estimation by backward sequences of logistic tilts.
#pragma once

#include <array>
#include <span>
#include <vector>

#include "survsurrogate/core_data.hpp"
#include "survsurrogate/estimators.hpp"
#include "survsurrogate/nuisance.hpp"

namespace survsurrogate {

inline constexpr double kTiltBound = 10.0;

struct TiltResult {
  double epsilon = 0.0;
  std::vector<double> values;  // expit(logit(clamped initial) + epsilon), every row
  bool hit_bound = false;
  double score = 0.0;  // sum_i w_i (y_i - value_i) at the solution
};

/// Intercept-only weighted logistic regression of `outcomes` with offset
/// logit(initial). Initial values are clamped to [p_min, 1 - p_min] first;
/// epsilon is confined to [-bound, bound]. All-zero weights give epsilon = 0.
TiltResult tilt_step(std::span<const double> initial, std::span<const double> outcomes,
                     std::span<const double> weights, double p_min = kDefaultPMin,
                     double bound = kTiltBound);

struct TiltRecord {
  int g = 0;
  int k = 0;
  int stage = 0;  // 0 single or outcome stage, 1 surrogate stage
  double epsilon = 0.0;
  bool hit_bound = false;
  std::size_t n_weighted = 0;
};

struct TargetedFit {
  Target target = Target::Delta;
  // Targeted Q_mu_{g,k}: [g][k-1][i], NaN outside the censoring risk set at k.
  std::array<std::vector<std::vector<double>>, 2> q_mu;
  // Targeted surrogate-stage Q*_{g,k} (DeltaS only, k <= t0).
  std::array<std::vector<std::vector<double>>, 2> q_star;
  std::vector<TiltRecord> tilts;
  // Uncentered influence values evaluated at the targeted fit.
  std::vector<double> targeted_if;
  double estimate = 0.0;
};

struct TmleResult {
  TargetedFit fit;
  // Point estimate from targeting; influence values and variance from the
  // one-step influence function, shifted to have mean equal to the estimate.
  EffectEstimate estimate;
};

/// Initial regressions are cross-fitted with the nuisance set's folds (or
/// fit in-sample for a full-sample nuisance set); tilts use the full sample.
TmleResult tmle_delta(const LongitudinalDataset& data, const NuisanceSet& nu,
                      double alpha = 0.05);
TmleResult tmle_delta_s(const LongitudinalDataset& data, const NuisanceSet& nu,
                        double alpha = 0.05);

}  // namespace survsurrogate
