#include "survsurrogate/nuisance.hpp"

#include <cmath>
#include <stdexcept>

#include "json.hpp"

#include "survsurrogate/parallel.hpp"

namespace survsurrogate {

const char* family_name(Family f) noexcept {
  switch (f) {
    case Family::Propensity: return "e";
    case Family::Pi: return "pi";
    case Family::PiStar: return "pi_star";
    case Family::Censoring: return "gamma";
    case Family::Hazard: return "mu";
    case Family::Q: return "Q";
    case Family::QStar: return "Q_star";
  }
  return "?";
}

int SequentialPlan::history(Family f, int k) const {
  switch (f) {
    case Family::Propensity: return 0;
    case Family::Pi: return k;
    case Family::PiStar: return k - 1;
    default: return grid.history_before(k);
  }
}

const LearnerOptions& SequentialPlan::options(Family f) const {
  const auto it = overrides.find(f);
  return it == overrides.end() ? defaults : it->second;
}

std::shared_ptr<const Learner> SequentialPlan::learner(Family f) const {
  const auto it = learners.find(f);
  if (it != learners.end()) return it->second;
  return std::make_shared<LogisticLearner>(n_covariates, options(f));
}

DesignSpec SequentialPlan::design(Family f, int k) const {
  const auto& o = options(f);
  return DesignSpec{n_covariates, history(f, k), o.interaction_order, o.poly_degree};
}

bool history_observed(const SubjectRecord& s, const TimeGrid& grid, int k) {
  const int h = grid.history_before(k);
  return h == 0 || s.survivor(h);
}

std::vector<double> observed_history(const SubjectRecord& s) {
  std::vector<double> h;
  h.reserve(s.s.size());
  for (const auto& v : s.s) {
    if (!v) break;
    h.push_back(*v);
  }
  return h;
}

namespace {

std::span<const double> first(const std::vector<double>& h, int m) {
  if (m < 0 || static_cast<std::size_t>(m) > h.size()) {
    throw std::logic_error("surrogate history of length " + std::to_string(m) +
                           " is not observed");
  }
  return {h.data(), static_cast<std::size_t>(m)};
}

struct Prepared {
  const LongitudinalDataset& data;
  std::vector<std::vector<double>> pre;

  explicit Prepared(const LongitudinalDataset& d) : data(d) {
    pre.reserve(d.size());
    for (const auto& s : d.subjects()) pre.push_back(observed_history(s));
  }
};

std::unique_ptr<ProbabilityModel> fit_family(const SequentialPlan& plan, Family f, int g, int k,
                                             const TrainingRows& rows) {
  if (rows.size() == 0) {
    throw std::runtime_error(std::string("empty risk set for ") + family_name(f) +
                             (g >= 0 ? " arm " + std::to_string(g) : std::string()) +
                             " at k=" + std::to_string(k) +
                             " (time grid too long for the data?)");
  }
  try {
    return plan.learner(f)->fit(rows, plan.history(f, k));
  } catch (const std::exception& ex) {
    throw std::runtime_error(std::string(family_name(f)) + " g=" + std::to_string(g) +
                             " k=" + std::to_string(k) + ": " + ex.what());
  }
}

void resize_models(FittedNuisanceModels& m) {
  const auto t = static_cast<std::size_t>(m.grid.t());
  const auto t0 = static_cast<std::size_t>(m.grid.t0());
  m.pi.resize(t0);
  m.pi_star.resize(t0);
  for (int g = 0; g < 2; ++g) {
    m.gamma[g].resize(t);
    m.mu[g].resize(t);
    m.Q[g].resize(t);
    m.Qstar[g].resize(t);
  }
}

double mu_v(const FittedNuisanceModels& m, std::span<const double> x,
            const std::vector<double>& pre, int g, int k) {
  const auto& model = m.mu[g][static_cast<std::size_t>(k - 1)];
  if (!model) throw std::logic_error("hazard model missing at k=" + std::to_string(k));
  return model->predict(x, first(pre, m.grid.history_before(k)));
}

double Q_v(const FittedNuisanceModels& m, std::span<const double> x,
           const std::vector<double>& pre, int g, int k) {
  const int t = m.grid.t();
  if (k >= t) return 1.0;
  if (k <= m.grid.t0()) {
    const auto& model = m.Q[g][static_cast<std::size_t>(k - 1)];
    if (!model) throw std::logic_error("Q model missing at k=" + std::to_string(k));
    return model->predict(x, first(pre, k - 1));
  }
  double p = 1.0;
  for (int j = k + 1; j <= t; ++j) p *= mu_v(m, x, pre, g, j);
  return p;
}

double Qstar_v(const FittedNuisanceModels& m, std::span<const double> x,
               const std::vector<double>& pre, int g, int k) {
  if (k < m.grid.t() && k <= m.grid.t0()) {
    const auto& model = m.Qstar[g][static_cast<std::size_t>(k - 1)];
    if (!model) throw std::logic_error("Q_star model missing at k=" + std::to_string(k));
    return model->predict(x, first(pre, k - 1));
  }
  return Q_v(m, x, pre, g, k);
}

}  // namespace

FittedNuisanceModels::FittedNuisanceModels(TimeGrid g) : grid(g) { resize_models(*this); }

double FittedNuisanceModels::mu_at(const SubjectRecord& s, int g, int k) const {
  return mu_v(*this, s.x, observed_history(s), g, k);
}

double FittedNuisanceModels::Q_at(const SubjectRecord& s, int g, int k) const {
  return Q_v(*this, s.x, observed_history(s), g, k);
}

double FittedNuisanceModels::Qstar_at(const SubjectRecord& s, int g, int k) const {
  return Qstar_v(*this, s.x, observed_history(s), g, k);
}

SubjectNuisances FittedNuisanceModels::evaluate(const SubjectRecord& s) const {
  const int t = grid.t();
  const int t0 = grid.t0();
  const auto pre = observed_history(s);
  const int n_obs = static_cast<int>(pre.size());
  SubjectNuisances out;
  out.e = e->predict(s.x, {});
  out.pi.assign(static_cast<std::size_t>(t0), kMissing);
  out.pi_star.assign(static_cast<std::size_t>(t0), kMissing);
  for (int k = 1; k <= std::min(t0, n_obs + 1); ++k) {
    const auto i = static_cast<std::size_t>(k - 1);
    if (k <= n_obs) out.pi[i] = pi[i]->predict(s.x, first(pre, k));
    out.pi_star[i] = pi_star[i]->predict(s.x, first(pre, k - 1));
  }
  for (int g = 0; g < 2; ++g) {
    out.gamma[g].assign(static_cast<std::size_t>(t), kMissing);
    out.mu[g].assign(static_cast<std::size_t>(t), kMissing);
    out.Q[g].assign(static_cast<std::size_t>(t), kMissing);
    out.Qstar[g].assign(static_cast<std::size_t>(t), kMissing);
    for (int k = 1; k <= t; ++k) {
      if (grid.history_before(k) > n_obs) break;
      const auto i = static_cast<std::size_t>(k - 1);
      out.gamma[g][i] = gamma[g][i]->predict(s.x, first(pre, grid.history_before(k)));
      out.mu[g][i] = mu_v(*this, s.x, pre, g, k);
      out.Q[g][i] = Q_v(*this, s.x, pre, g, k);
      out.Qstar[g][i] = Qstar_v(*this, s.x, pre, g, k);
    }
  }
  return out;
}

void FittedNuisanceModels::collect(int fold, std::vector<NuisanceDiagnostic>& diags,
                                   std::vector<CoefficientRecord>& coefs) const {
  auto visit = [&](const std::unique_ptr<ProbabilityModel>& m, Family f, int g, int k) {
    if (!m) return;
    coefs.push_back({f, g, k, fold, m->coefficients()});
    const auto d = m->diagnostic();
    if (!d.empty()) diags.push_back({f, g, k, fold, d});
  };
  visit(e, Family::Propensity, -1, 0);
  for (std::size_t i = 0; i < pi.size(); ++i) {
    visit(pi[i], Family::Pi, -1, static_cast<int>(i) + 1);
    visit(pi_star[i], Family::PiStar, -1, static_cast<int>(i) + 1);
  }
  for (int g = 0; g < 2; ++g) {
    for (std::size_t i = 0; i < gamma[g].size(); ++i) {
      const int k = static_cast<int>(i) + 1;
      visit(gamma[g][i], Family::Censoring, g, k);
      visit(mu[g][i], Family::Hazard, g, k);
      visit(Q[g][i], Family::Q, g, k);
      visit(Qstar[g][i], Family::QStar, g, k);
    }
  }
}

namespace {

void fit_propensities_p(const Prepared& p, std::span<const std::size_t> train,
                        const SequentialPlan& plan, FittedNuisanceModels& out) {
  TrainingRows rows;
  for (std::size_t i : train) {
    const auto& s = p.data[i];
    rows.add(s.x, {}, s.g);
  }
  out.e = fit_family(plan, Family::Propensity, -1, 0, rows);
  for (int k = 1; k <= plan.grid.t0(); ++k) {
    TrainingRows r_pi, r_ps;
    for (std::size_t i : train) {
      const auto& s = p.data[i];
      if (!s.survivor(k)) continue;
      r_pi.add(s.x, first(p.pre[i], k), s.g);
      r_ps.add(s.x, first(p.pre[i], k - 1), s.g);
    }
    out.pi[static_cast<std::size_t>(k - 1)] = fit_family(plan, Family::Pi, -1, k, r_pi);
    out.pi_star[static_cast<std::size_t>(k - 1)] = fit_family(plan, Family::PiStar, -1, k, r_ps);
  }
}

void fit_armwise(const Prepared& p, std::span<const std::size_t> train,
                 const SequentialPlan& plan, Family f, FittedNuisanceModels& out) {
  auto& target = f == Family::Censoring ? out.gamma : out.mu;
  for (int g = 0; g < 2; ++g) {
    for (int k = 1; k <= plan.grid.t(); ++k) {
      TrainingRows rows;
      const int h = plan.grid.history_before(k);
      for (std::size_t i : train) {
        const auto& s = p.data[i];
        if (s.g != g) continue;
        if (f == Family::Censoring) {
          if (!s.in_censoring_risk_set(k)) continue;
          rows.add(s.x, first(p.pre[i], h), s.uncensored(k) ? 1.0 : 0.0);
        } else {
          if (!s.in_hazard_risk_set(k)) continue;
          rows.add(s.x, first(p.pre[i], h), static_cast<double>(*s.outcome(k)));
        }
      }
      target[g][static_cast<std::size_t>(k - 1)] = fit_family(plan, f, g, k, rows);
    }
  }
}

void fit_sequential(const Prepared& p, std::span<const std::size_t> train,
                    const SequentialPlan& plan, bool pooled, FittedNuisanceModels& out) {
  const Family f = pooled ? Family::QStar : Family::Q;
  const int last = std::min(plan.grid.t0(), plan.grid.t() - 1);
  for (int g = 0; g < 2; ++g) {
    for (int k = last; k >= 1; --k) {
      TrainingRows rows;
      for (std::size_t i : train) {
        const auto& s = p.data[i];
        if (!pooled && s.g != g) continue;
        if (!s.survivor(k)) continue;
        const double next = pooled ? Qstar_v(out, s.x, p.pre[i], g, k + 1)
                                   : Q_v(out, s.x, p.pre[i], g, k + 1);
        const double y = mu_v(out, s.x, p.pre[i], g, k + 1) * next;
        if (!std::isfinite(y)) {
          throw std::runtime_error(std::string("non-finite pseudo-outcome for ") +
                                   family_name(f) + " g=" + std::to_string(g) +
                                   " k=" + std::to_string(k));
        }
        rows.add(s.x, first(p.pre[i], k - 1), y);
      }
      auto& target = pooled ? out.Qstar : out.Q;
      target[g][static_cast<std::size_t>(k - 1)] = fit_family(plan, f, g, k, rows);
    }
  }
}

}  // namespace

void fit_propensities(const LongitudinalDataset& data, std::span<const std::size_t> train,
                      const SequentialPlan& plan, FittedNuisanceModels& out) {
  fit_propensities_p(Prepared(data), train, plan, out);
}

void fit_censoring(const LongitudinalDataset& data, std::span<const std::size_t> train,
                   const SequentialPlan& plan, FittedNuisanceModels& out) {
  fit_armwise(Prepared(data), train, plan, Family::Censoring, out);
}

void fit_hazards(const LongitudinalDataset& data, std::span<const std::size_t> train,
                 const SequentialPlan& plan, FittedNuisanceModels& out) {
  fit_armwise(Prepared(data), train, plan, Family::Hazard, out);
}

void fit_Q_sequential(const LongitudinalDataset& data, std::span<const std::size_t> train,
                      const SequentialPlan& plan, FittedNuisanceModels& out) {
  fit_sequential(Prepared(data), train, plan, false, out);
}

void fit_Qstar_sequential(const LongitudinalDataset& data, std::span<const std::size_t> train,
                          const SequentialPlan& plan, FittedNuisanceModels& out) {
  fit_sequential(Prepared(data), train, plan, true, out);
}

FittedNuisanceModels fit_all_nuisances(const LongitudinalDataset& data,
                                       std::span<const std::size_t> train,
                                       const SequentialPlan& plan) {
  if (!(plan.grid == data.grid())) throw std::invalid_argument("plan grid != dataset grid");
  const Prepared p(data);
  FittedNuisanceModels m(plan.grid);
  fit_propensities_p(p, train, plan, m);
  fit_armwise(p, train, plan, Family::Censoring, m);
  fit_armwise(p, train, plan, Family::Hazard, m);
  fit_sequential(p, train, plan, false, m);
  fit_sequential(p, train, plan, true, m);
  return m;
}

NuisanceSet::NuisanceSet(TimeGrid grid, std::vector<SubjectNuisances> values,
                         std::vector<int> eval_fold, int n_folds, SequentialPlan plan,
                         std::vector<NuisanceDiagnostic> diagnostics,
                         std::vector<CoefficientRecord> coefficients)
    : grid_(grid), values_(std::move(values)), eval_fold_(std::move(eval_fold)),
      n_folds_(n_folds), plan_(std::move(plan)), diagnostics_(std::move(diagnostics)),
      coefficients_(std::move(coefficients)) {}

std::vector<int> NuisanceSet::training_folds(std::size_t i) const {
  std::vector<int> out;
  for (int f = 0; f < n_folds_; ++f) {
    if (f != eval_fold_[i]) out.push_back(f);
  }
  return out;
}

NuisanceSet NuisanceSet::with_values(std::vector<SubjectNuisances> values) const {
  if (values.size() != values_.size()) throw std::invalid_argument("with_values: size mismatch");
  NuisanceSet copy = *this;
  copy.values_ = std::move(values);
  return copy;
}

NuisanceSet crossfit_nuisances(const LongitudinalDataset& data, const FoldAssignment& folds,
                               const SequentialPlan& plan, int threads) {
  const int K = folds.n_folds();
  std::vector<SubjectNuisances> values(data.size());
  std::vector<std::vector<NuisanceDiagnostic>> diags(static_cast<std::size_t>(K));
  std::vector<std::vector<CoefficientRecord>> coefs(static_cast<std::size_t>(K));
  parallel_for(static_cast<std::size_t>(K), threads, [&](std::size_t l) {
    const int fold = static_cast<int>(l);
    std::vector<std::size_t> train;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (folds.fold_of(i) != fold) train.push_back(i);
    }
    try {
      const auto models = fit_all_nuisances(data, train, plan);
      for (std::size_t i : folds.members(fold)) values[i] = models.evaluate(data[i]);
      models.collect(fold, diags[l], coefs[l]);
    } catch (const std::exception& ex) {
      throw std::runtime_error("fold " + std::to_string(fold) + ": " + ex.what());
    }
  });
  std::vector<NuisanceDiagnostic> all_diags;
  std::vector<CoefficientRecord> all_coefs;
  for (std::size_t l = 0; l < static_cast<std::size_t>(K); ++l) {
    all_diags.insert(all_diags.end(), diags[l].begin(), diags[l].end());
    all_coefs.insert(all_coefs.end(), coefs[l].begin(), coefs[l].end());
  }
  return NuisanceSet(data.grid(), std::move(values), folds.folds(), K, plan, std::move(all_diags),
                     std::move(all_coefs));
}

NuisanceSet fit_full_sample_nuisances(const LongitudinalDataset& data,
                                      const SequentialPlan& plan) {
  std::vector<std::size_t> all(data.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const auto models = fit_all_nuisances(data, all, plan);
  std::vector<SubjectNuisances> values;
  values.reserve(data.size());
  for (const auto& s : data.subjects()) values.push_back(models.evaluate(s));
  std::vector<NuisanceDiagnostic> diags;
  std::vector<CoefficientRecord> coefs;
  models.collect(-1, diags, coefs);
  return NuisanceSet(data.grid(), std::move(values), std::vector<int>(data.size(), -1), 0, plan,
                     std::move(diags), std::move(coefs));
}

std::string coefficients_json(const NuisanceSet& set) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : set.coefficients()) {
    arr.push_back({{"family", family_name(c.family)},
                   {"g", c.g < 0 ? nlohmann::json(nullptr) : nlohmann::json(c.g)},
                   {"k", c.k},
                   {"fold", c.fold < 0 ? nlohmann::json(nullptr) : nlohmann::json(c.fold)},
                   {"coefficients", c.coefficients}});
  }
  return arr.dump(2);
}

}  // namespace survsurrogate
