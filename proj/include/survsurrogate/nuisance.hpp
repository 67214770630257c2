// Nuisance functions and their cross-fitted predictions.
//
//   e(x)            P(G=1 | X)                                   all subjects
//   pi_k            P(G=1 | X, S_1..S_k, uncensored survivor at k)        k <= t0
//   pistar_k        P(G=1 | X, S_1..S_{k-1}, uncensored survivor at k)    k <= t0
//   gamma_gk        P(A_k=1 | X, G=g, history, censoring risk set at k)
//   mu_gk           P(Y_k=1 | X, G=g, history, hazard risk set at k)
//   Q_gk            E[mu_{g,k+1} Q_{g,k+1} | X, G=g, history, survivor at k]
//   Qstar_gk        same with the arm label dropped from the conditioning
//
// "history" at k is S_1..S_{min(k-1, t0)}. For k > t0 the Q's are products of
// hazards; Q_gt = Qstar_gt = 1.
#pragma once

#include <array>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "survsurrogate/core_data.hpp"
#include "survsurrogate/learners.hpp"

namespace survsurrogate {

enum class Family { Propensity, Pi, PiStar, Censoring, Hazard, Q, QStar };

const char* family_name(Family f) noexcept;

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

/// Learner configuration per nuisance family. Features at time k always use
/// the family's own lag (see the table above).
struct SequentialPlan {
  TimeGrid grid;
  int n_covariates = 0;
  LearnerOptions defaults{};
  std::map<Family, LearnerOptions> overrides;
  // Optional replacement learners; the default is LogisticLearner.
  std::map<Family, std::shared_ptr<const Learner>> learners;

  SequentialPlan(TimeGrid g, int p, LearnerOptions opts = {})
      : grid(g), n_covariates(p), defaults(opts) {}

  /// Surrogate-history length of the family's features at time k.
  int history(Family f, int k) const;
  const LearnerOptions& options(Family f) const;
  std::shared_ptr<const Learner> learner(Family f) const;
  DesignSpec design(Family f, int k) const;
};

/// Per-subject predictions. Vectors are indexed by k - 1. Entries are NaN
/// where the subject's history needed by the function is unobserved.
struct SubjectNuisances {
  double e = kMissing;
  std::vector<double> pi;       // length t0
  std::vector<double> pi_star;  // length t0
  std::array<std::vector<double>, 2> gamma;  // [g], length t
  std::array<std::vector<double>, 2> mu;
  std::array<std::vector<double>, 2> Q;
  std::array<std::vector<double>, 2> Qstar;
};

struct NuisanceDiagnostic {
  Family family;
  int g;     // -1 when not arm-specific
  int k;     // 0 for e
  int fold;  // held-out fold of the training complement; -1 = full sample
  std::string message;
};

struct CoefficientRecord {
  Family family;
  int g;
  int k;
  int fold;
  std::vector<double> coefficients;
};

/// All fitted nuisance models from one training sample.
struct FittedNuisanceModels {
  TimeGrid grid;
  std::unique_ptr<ProbabilityModel> e;
  std::vector<std::unique_ptr<ProbabilityModel>> pi;       // k = 1..t0
  std::vector<std::unique_ptr<ProbabilityModel>> pi_star;  // k = 1..t0
  std::array<std::vector<std::unique_ptr<ProbabilityModel>>, 2> gamma;  // k = 1..t
  std::array<std::vector<std::unique_ptr<ProbabilityModel>>, 2> mu;     // k = 1..t
  // Regression-form Q/Qstar for k <= min(t0, t-1); null elsewhere.
  std::array<std::vector<std::unique_ptr<ProbabilityModel>>, 2> Q;
  std::array<std::vector<std::unique_ptr<ProbabilityModel>>, 2> Qstar;

  explicit FittedNuisanceModels(TimeGrid g);

  double mu_at(const SubjectRecord& s, int g, int k) const;
  double Q_at(const SubjectRecord& s, int g, int k) const;
  double Qstar_at(const SubjectRecord& s, int g, int k) const;
  SubjectNuisances evaluate(const SubjectRecord& s) const;

  void collect(int fold, std::vector<NuisanceDiagnostic>& diags,
               std::vector<CoefficientRecord>& coefs) const;
};

/// Observed surrogate values S_1, S_2, ... up to the first missing entry.
std::vector<double> observed_history(const SubjectRecord& s);

/// Whether the subject's surrogate history needed at time k is observed.
bool history_observed(const SubjectRecord& s, const TimeGrid& grid, int k);

// Family fits on the training rows `train` (dataset positions). Each throws
// std::runtime_error naming the family and k when a risk set is empty.
void fit_propensities(const LongitudinalDataset& data, std::span<const std::size_t> train,
                      const SequentialPlan& plan, FittedNuisanceModels& out);
void fit_censoring(const LongitudinalDataset& data, std::span<const std::size_t> train,
                   const SequentialPlan& plan, FittedNuisanceModels& out);
void fit_hazards(const LongitudinalDataset& data, std::span<const std::size_t> train,
                 const SequentialPlan& plan, FittedNuisanceModels& out);
/// Requires fitted hazards.
void fit_Q_sequential(const LongitudinalDataset& data, std::span<const std::size_t> train,
                      const SequentialPlan& plan, FittedNuisanceModels& out);
/// Requires fitted hazards.
void fit_Qstar_sequential(const LongitudinalDataset& data, std::span<const std::size_t> train,
                          const SequentialPlan& plan, FittedNuisanceModels& out);

FittedNuisanceModels fit_all_nuisances(const LongitudinalDataset& data,
                                       std::span<const std::size_t> train,
                                       const SequentialPlan& plan);

class NuisanceSet {
public:
  NuisanceSet(TimeGrid grid, std::vector<SubjectNuisances> values, std::vector<int> eval_fold,
              int n_folds, SequentialPlan plan, std::vector<NuisanceDiagnostic> diagnostics,
              std::vector<CoefficientRecord> coefficients);

  const TimeGrid& grid() const noexcept { return grid_; }
  std::size_t size() const noexcept { return values_.size(); }
  const SubjectNuisances& operator[](std::size_t i) const { return values_[i]; }
  const std::vector<SubjectNuisances>& values() const noexcept { return values_; }
  /// 0 for full-sample fits.
  int n_folds() const noexcept { return n_folds_; }
  bool cross_fitted() const noexcept { return n_folds_ > 0; }
  /// Fold subject i was evaluated in (its predictions come from models trained
  /// on every other fold); -1 for full-sample fits.
  int eval_fold(std::size_t i) const { return eval_fold_[i]; }
  const std::vector<int>& eval_folds() const noexcept { return eval_fold_; }
  /// Folds whose subjects trained the models used for subject i.
  std::vector<int> training_folds(std::size_t i) const;
  const SequentialPlan& plan() const noexcept { return plan_; }
  const std::vector<NuisanceDiagnostic>& diagnostics() const noexcept { return diagnostics_; }
  const std::vector<CoefficientRecord>& coefficients() const noexcept { return coefficients_; }

  /// Copy with some values replaced (used by robustness checks).
  NuisanceSet with_values(std::vector<SubjectNuisances> values) const;

private:
  TimeGrid grid_;
  std::vector<SubjectNuisances> values_;
  std::vector<int> eval_fold_;
  int n_folds_;
  SequentialPlan plan_;
  std::vector<NuisanceDiagnostic> diagnostics_;
  std::vector<CoefficientRecord> coefficients_;
};

/// For each fold, fit every family on the other folds and evaluate on it.
/// `threads` caps concurrent fold jobs; output does not depend on it.
NuisanceSet crossfit_nuisances(const LongitudinalDataset& data, const FoldAssignment& folds,
                               const SequentialPlan& plan, int threads = 1);

/// Fit and evaluate on the full sample (no sample splitting).
NuisanceSet fit_full_sample_nuisances(const LongitudinalDataset& data,
                                      const SequentialPlan& plan);

/// JSON array of {family, g, k, fold, coefficients}.
std::string coefficients_json(const NuisanceSet& set);

}  // namespace survsurrogate
