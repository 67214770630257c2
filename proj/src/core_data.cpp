#include "survsurrogate/core_data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

#include "survsurrogate/rng.hpp"

namespace survsurrogate {

TimeGrid::TimeGrid(int t, int t0) : t_(t), t0_(t0) {
  if (t < 1) throw std::invalid_argument("TimeGrid: t must be >= 1");
  if (t0 < 0 || t0 > t) throw std::invalid_argument("TimeGrid: need 0 <= t0 <= t");
}

bool SubjectRecord::in_censoring_risk_set(int k) const {
  for (int j = 1; j < k; ++j) {
    if (!uncensored(j)) return false;
    const auto yj = outcome(j);
    if (!yj || *yj == 0) return false;
  }
  return true;
}

bool SubjectRecord::in_hazard_risk_set(int k) const {
  return in_censoring_risk_set(k) && uncensored(k);
}

bool SubjectRecord::survivor(int k) const {
  if (!in_hazard_risk_set(k)) return false;
  const auto yk = outcome(k);
  return yk && *yk == 1;
}

std::vector<double> SubjectRecord::surrogate_history(int m) const {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(m));
  for (int j = 1; j <= m; ++j) {
    const auto v = surrogate(j);
    if (!v) {
      throw std::logic_error("subject " + id + ": surrogate S_" + std::to_string(j) +
                             " requested but not observed");
    }
    out.push_back(*v);
  }
  return out;
}

LongitudinalDataset::LongitudinalDataset(TimeGrid grid, std::vector<SubjectRecord> subjects,
                                         std::vector<std::string> covariate_names)
    : grid_(grid), subjects_(std::move(subjects)), covariate_names_(std::move(covariate_names)) {}

std::size_t LongitudinalDataset::arm_size(int g) const {
  return static_cast<std::size_t>(std::count_if(
      subjects_.begin(), subjects_.end(), [g](const SubjectRecord& s) { return s.g == g; }));
}

namespace {

void check_subject(const SubjectRecord& s, const TimeGrid& grid, std::size_t p,
                   std::vector<Violation>& out) {
  auto add = [&](std::string field, std::string msg) {
    out.push_back({s.id, std::move(field), std::move(msg)});
  };
  const auto t = static_cast<std::size_t>(grid.t());
  const auto t0 = static_cast<std::size_t>(grid.t0());
  if (s.x.size() != p) {
    add("x", "covariate dimension " + std::to_string(s.x.size()) + " != " + std::to_string(p));
  }
  for (double v : s.x) {
    if (!std::isfinite(v)) {
      add("x", "non-finite covariate");
      break;
    }
  }
  if (s.g != 0 && s.g != 1) add("g", "treatment must be 0 or 1");
  if (s.a.size() != t || s.y.size() != t || s.s.size() != t0) {
    add("shape", "trajectory lengths (a,y,s) must be (t,t,t0)");
    return;
  }
  for (std::size_t k = 0; k < t; ++k) {
    const int kk = static_cast<int>(k) + 1;
    const std::string at = " at k=" + std::to_string(kk);
    if (s.a[k] > 1) add("a", "censoring indicator must be 0 or 1" + at);
    if (k > 0 && s.a[k] == 1 && s.a[k - 1] == 0) add("a", "censoring non-monotone" + at);
    if (s.a[k] == 1 && !s.y[k]) add("y", "outcome missing while uncensored" + at);
    if (s.a[k] == 0 && s.y[k]) add("y", "outcome present while censored" + at);
    if (s.y[k] && *s.y[k] > 1) add("y", "outcome must be 0 or 1" + at);
    if (s.y[k] && *s.y[k] == 1) {
      for (std::size_t j = 0; j < k; ++j) {
        if (s.y[j] && *s.y[j] == 0) {
          add("y", "outcome non-monotone" + at);
          break;
        }
      }
    }
  }
  for (std::size_t k = 0; k < t0; ++k) {
    const int kk = static_cast<int>(k) + 1;
    const std::string at = " at k=" + std::to_string(kk);
    const bool alive = s.a[k] == 1 && s.y[k] && *s.y[k] == 1;
    if (s.s[k] && !alive) {
      add("s", (s.a[k] == 0 ? "surrogate present for censored subject"
                            : "surrogate present for non-survivor") + at);
    }
    if (!s.s[k] && alive) add("s", "surrogate missing for uncensored survivor" + at);
    if (s.s[k] && !std::isfinite(*s.s[k])) add("s", "non-finite surrogate" + at);
  }
}

}  // namespace

std::vector<Violation> validate(const LongitudinalDataset& dataset) {
  std::vector<Violation> out;
  std::set<std::string> seen;
  for (const auto& s : dataset.subjects()) {
    if (!seen.insert(s.id).second) out.push_back({s.id, "id", "duplicate subject id"});
    check_subject(s, dataset.grid(), dataset.n_covariates(), out);
  }
  if (dataset.grid().t0() < 1) out.push_back({"", "grid", "dataset requires t0 >= 1"});
  if (dataset.arm_size(1) == 0) out.push_back({"", "g", "treated arm is empty"});
  if (dataset.arm_size(0) == 0) out.push_back({"", "g", "control arm is empty"});
  return out;
}

FoldAssignment::FoldAssignment(int n_folds, std::vector<int> fold_of_index, std::uint64_t seed,
                               std::vector<std::string> ids)
    : n_folds_(n_folds), fold_of_index_(std::move(fold_of_index)), seed_(seed),
      ids_(std::move(ids)) {}

std::map<std::string, int> FoldAssignment::fold_map() const {
  std::map<std::string, int> m;
  for (std::size_t i = 0; i < ids_.size(); ++i) m.emplace(ids_[i], fold_of_index_[i]);
  return m;
}

std::vector<std::size_t> FoldAssignment::members(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of_index_.size(); ++i) {
    if (fold_of_index_[i] == fold) out.push_back(i);
  }
  return out;
}

FoldAssignment make_folds(const LongitudinalDataset& dataset, int n_folds, std::uint64_t seed) {
  const std::size_t n = dataset.size();
  if (n_folds < 2) throw std::invalid_argument("make_folds: n_folds must be >= 2");
  if (static_cast<std::size_t>(n_folds) > n) {
    throw std::invalid_argument("make_folds: n_folds exceeds the number of subjects");
  }
  Rng rng(derive_seed(seed, 0xF01D));
  std::vector<int> fold(n, -1);
  std::size_t next = 0;
  // Deal each arm round-robin after a Fisher-Yates shuffle; the dealing counter
  // carries across arms so overall sizes stay within one of each other.
  for (int g : {1, 0}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < n; ++i) {
      if (dataset[i].g == g) idx.push_back(i);
    }
    for (std::size_t i = idx.size(); i > 1; --i) {
      std::swap(idx[i - 1], idx[rng.below(i)]);
    }
    for (std::size_t i : idx) fold[i] = static_cast<int>(next++ % static_cast<std::size_t>(n_folds));
  }
  std::vector<std::string> ids;
  ids.reserve(n);
  for (const auto& s : dataset.subjects()) ids.push_back(s.id);
  return FoldAssignment(n_folds, std::move(fold), seed, std::move(ids));
}

namespace {

bool in_kind(const SubjectRecord& s, int k, RiskSetKind kind) {
  switch (kind) {
    case RiskSetKind::Censoring: return s.in_censoring_risk_set(k);
    case RiskSetKind::Hazard: return s.in_hazard_risk_set(k);
    case RiskSetKind::Survivor: return s.survivor(k);
  }
  return false;
}

}  // namespace

std::vector<std::size_t> risk_set_indices(const LongitudinalDataset& dataset, int k,
                                          std::optional<int> arm, RiskSetKind kind) {
  if (k < 1 || k > dataset.grid().t()) {
    throw std::out_of_range("risk_set: k=" + std::to_string(k) + " outside 1.." +
                            std::to_string(dataset.grid().t()));
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& s = dataset[i];
    if (arm && s.g != *arm) continue;
    if (in_kind(s, k, kind)) out.push_back(i);
  }
  return out;
}

std::vector<std::string> risk_set(const LongitudinalDataset& dataset, int k,
                                  std::optional<int> arm, RiskSetKind kind) {
  std::vector<std::string> ids;
  for (std::size_t i : risk_set_indices(dataset, k, arm, kind)) ids.push_back(dataset[i].id);
  return ids;
}

LongitudinalDataset subset(const LongitudinalDataset& dataset,
                           const std::vector<std::size_t>& indices) {
  std::vector<SubjectRecord> subs;
  subs.reserve(indices.size());
  for (std::size_t i : indices) subs.push_back(dataset[i]);
  return LongitudinalDataset(dataset.grid(), std::move(subs), dataset.covariate_names());
}

LongitudinalDataset restrict_grid(const LongitudinalDataset& dataset, TimeGrid grid) {
  if (grid.t() > dataset.grid().t() || grid.t0() > dataset.grid().t0()) {
    throw std::invalid_argument("restrict_grid: analysis grid exceeds the data grid");
  }
  std::vector<SubjectRecord> subs = dataset.subjects();
  for (auto& s : subs) {
    s.a.resize(static_cast<std::size_t>(grid.t()));
    s.y.resize(static_cast<std::size_t>(grid.t()));
    s.s.resize(static_cast<std::size_t>(grid.t0()));
  }
  return LongitudinalDataset(grid, std::move(subs), dataset.covariate_names());
}

}  // namespace survsurrogate
