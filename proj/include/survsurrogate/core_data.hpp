// Discrete-time longitudinal surrogate / survival data model.
//
// Time is indexed k = 1..t. For each subject we observe baseline covariates X,
// treatment G, and the monotone sequence (A_k, Y_k, S_k):
//   A_k = I{C > k}      (uncensored through k)
//   Y_k = I{T > k}      (event-free through k), present iff A_k = 1
//   S_k                 surrogate, present iff A_k = 1 and Y_k = 1, k <= t0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace survsurrogate {

/// Outcome horizon t and surrogate horizon t0, 0 <= t0 <= t.
///
/// t0 = 0 expresses the "no surrogate" analysis; data sets read from disk
/// always carry t0 >= 1.
class TimeGrid {
public:
  TimeGrid(int t, int t0);

  int t() const noexcept { return t_; }
  int t0() const noexcept { return t0_; }

  /// Surrogate history length available to a model at time k: min(k - 1, t0).
  int history_before(int k) const noexcept { return k - 1 < t0_ ? k - 1 : t0_; }

  bool operator==(const TimeGrid&) const = default;

private:
  int t_;
  int t0_;
};

struct SubjectRecord {
  std::string id;
  std::vector<double> x;
  int g = 0;
  std::vector<std::uint8_t> a;                  // length t
  std::vector<std::optional<std::uint8_t>> y;   // length t
  std::vector<std::optional<double>> s;         // length t0

  // 1-based accessors.
  bool uncensored(int k) const { return a[k - 1] != 0; }
  std::optional<std::uint8_t> outcome(int k) const { return y[k - 1]; }
  std::optional<double> surrogate(int k) const { return s[k - 1]; }

  /// Censoring risk set at k: A_j = Y_j = 1 for all j < k.
  bool in_censoring_risk_set(int k) const;
  /// Hazard risk set at k: censoring risk set and A_k = 1.
  bool in_hazard_risk_set(int k) const;
  /// Uncensored and event-free through k (S_k observed when k <= t0).
  bool survivor(int k) const;

  /// S_1..S_m; every entry must be present.
  std::vector<double> surrogate_history(int m) const;
};

class LongitudinalDataset {
public:
  LongitudinalDataset(TimeGrid grid, std::vector<SubjectRecord> subjects,
                      std::vector<std::string> covariate_names);

  const TimeGrid& grid() const noexcept { return grid_; }
  const std::vector<SubjectRecord>& subjects() const noexcept { return subjects_; }
  const std::vector<std::string>& covariate_names() const noexcept { return covariate_names_; }
  std::size_t size() const noexcept { return subjects_.size(); }
  std::size_t n_covariates() const noexcept { return covariate_names_.size(); }
  const SubjectRecord& operator[](std::size_t i) const { return subjects_[i]; }

  std::size_t arm_size(int g) const;

private:
  TimeGrid grid_;
  std::vector<SubjectRecord> subjects_;
  std::vector<std::string> covariate_names_;
};

struct Violation {
  std::string subject_id;  // empty for dataset-level findings
  std::string field;
  std::string message;
};

/// Every data-model violation; empty iff the dataset is valid.
std::vector<Violation> validate(const LongitudinalDataset& dataset);

class FoldAssignment {
public:
  FoldAssignment(int n_folds, std::vector<int> fold_of_index, std::uint64_t seed,
                 std::vector<std::string> ids);

  int n_folds() const noexcept { return n_folds_; }
  std::uint64_t seed() const noexcept { return seed_; }
  /// Fold of the subject at position i in the dataset.
  int fold_of(std::size_t i) const { return fold_of_index_[i]; }
  const std::vector<int>& folds() const noexcept { return fold_of_index_; }
  std::map<std::string, int> fold_map() const;
  std::vector<std::size_t> members(int fold) const;

private:
  int n_folds_;
  std::vector<int> fold_of_index_;
  std::uint64_t seed_;
  std::vector<std::string> ids_;
};

/// Seeded uniform partition stratified by treatment arm. Sizes differ by at most 1.
FoldAssignment make_folds(const LongitudinalDataset& dataset, int n_folds, std::uint64_t seed);

enum class RiskSetKind {
  Censoring,  // A_{k-1} = Y_{k-1} = 1 (bar)
  Hazard,     // A_k = Y_{k-1} = 1 (bar)
  Survivor,   // A_k = Y_k = 1 (bar)
};

/// Ids of subjects in the requested risk set at k, optionally restricted to one arm.
std::vector<std::string> risk_set(const LongitudinalDataset& dataset, int k,
                                  std::optional<int> arm,
                                  RiskSetKind kind = RiskSetKind::Hazard);

/// Same as risk_set but returns dataset positions.
std::vector<std::size_t> risk_set_indices(const LongitudinalDataset& dataset, int k,
                                          std::optional<int> arm, RiskSetKind kind);

/// Restrict to a subset of positions (keeps grid and covariate names).
LongitudinalDataset subset(const LongitudinalDataset& dataset,
                           const std::vector<std::size_t>& indices);

/// Reinterpret a dataset on a shorter analysis grid (t' <= t, t0' <= t0).
/// Entries past the new horizons are dropped.
LongitudinalDataset restrict_grid(const LongitudinalDataset& dataset, TimeGrid grid);

}  // namespace survsurrogate
