// One-step (influence-function) estimators of the survival treatment effect
// Delta(t), the surrogate-standardized residual effect DeltaS(t, t0), and the
// proportion explained R = 1 - DeltaS / Delta; plus weighting-form and
// substitution-form estimators used as cross-checks.
#pragma once

#include <array>
#include <string>
#include <vector>

#include "survsurrogate/core_data.hpp"
#include "survsurrogate/nuisance.hpp"

namespace survsurrogate {

enum class Target { Delta, DeltaS, R };

const char* target_name(Target t) noexcept;

inline constexpr double kDefaultRFloor = 1e-6;

struct EffectEstimate {
  Target target = Target::Delta;
  double value = 0.0;
  // Uncentered influence values; mean(if_values) == value.
  std::vector<double> if_values;
  double sigma2 = 0.0;
  double se = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double alpha = 0.05;
  TimeGrid grid{1, 0};
  // False for R when |Delta| is below the floor; value/se/ci are then NaN.
  bool defined = true;
  std::string reason;
};

/// Per-subject summands of an uncentered influence value, by arm.
/// value() = sum_g sign_g (weighted[g] + surrogate[g] + substitution[g]),
/// sign_1 = +1, sign_0 = -1.
struct IFComponents {
  std::array<double, 2> weighted{0.0, 0.0};      // outcome-martingale terms
  std::array<double, 2> surrogate{0.0, 0.0};     // surrogate-distribution terms
  std::array<double, 2> substitution{0.0, 0.0};  // mu_g1 Q_g1 (or Q*)
  double value() const noexcept;
};

IFComponents if_components_delta(const SubjectRecord& s, const SubjectNuisances& nu,
                                 const TimeGrid& grid);
IFComponents if_components_delta_s(const SubjectRecord& s, const SubjectNuisances& nu,
                                   const TimeGrid& grid);

double eval_if_delta(const SubjectRecord& s, const SubjectNuisances& nu, const TimeGrid& grid);
double eval_if_delta_s(const SubjectRecord& s, const SubjectNuisances& nu,
                       const TimeGrid& grid);

std::vector<double> if_vector_delta(const LongitudinalDataset& data, const NuisanceSet& nu);
std::vector<double> if_vector_delta_s(const LongitudinalDataset& data, const NuisanceSet& nu);

/// Wraps an influence vector as an estimate with normal CI.
EffectEstimate make_estimate(Target target, double value, std::vector<double> if_values,
                             const TimeGrid& grid, double alpha);

/// R from (Delta, DeltaS) estimates. Undefined below `r_floor`.
EffectEstimate make_r_estimate(const EffectEstimate& delta, const EffectEstimate& delta_s,
                               double alpha, double r_floor = kDefaultRFloor);

struct PluginEstimates {
  EffectEstimate delta;
  EffectEstimate delta_s;
  EffectEstimate r;
};

PluginEstimates estimate_plugin(const LongitudinalDataset& data, const NuisanceSet& nu,
                                double alpha = 0.05, double r_floor = kDefaultRFloor);

double estimate_ipw_delta(const LongitudinalDataset& data, const NuisanceSet& nu);
double estimate_ipw_delta_s(const LongitudinalDataset& data, const NuisanceSet& nu);
double estimate_substitution_delta(const LongitudinalDataset& data, const NuisanceSet& nu);
double estimate_substitution_delta_s(const LongitudinalDataset& data, const NuisanceSet& nu);

/// pi_{g,m} = pi_m^g (1 - pi_m)^(1-g) and likewise pi*; ratio pi*_{g,m} / pi_{g,m},
/// equal to 1 for m = 0 and m > t0.
double surrogate_ratio(const SubjectNuisances& nu, const TimeGrid& grid, int g, int m);

}  // namespace survsurrogate
