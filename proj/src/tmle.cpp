#include "survsurrogate/tmle.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace survsurrogate {

TiltResult tilt_step(std::span<const double> initial, std::span<const double> outcomes,
                     std::span<const double> weights, double p_min, double bound) {
  const std::size_t n = initial.size();
  if (outcomes.size() != n || weights.size() != n) {
    throw std::invalid_argument("tilt_step: length mismatch");
  }
  std::vector<double> off(n);
  double sw = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    off[i] = logit(clamp_probability(initial[i], p_min));
    if (weights[i] < 0.0 || !std::isfinite(weights[i])) {
      throw std::invalid_argument("tilt_step: weights must be finite and nonnegative");
    }
    sw += weights[i];
  }
  auto score = [&](double eps, double* slope) {
    double s = 0.0, d = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (weights[i] == 0.0) continue;
      const double p = expit(off[i] + eps);
      s += weights[i] * (outcomes[i] - p);
      d += weights[i] * p * (1.0 - p);
    }
    if (slope) *slope = d;
    return s;
  };

  TiltResult res;
  double eps = 0.0;
  if (sw > 0.0) {
    const double tol = 1e-13 * std::max(1.0, sw);
    double slope = 0.0;
    double s = score(0.0, &slope);
    if (std::abs(s) > tol) {
      const double s_hi = score(bound, nullptr);
      const double s_lo = score(-bound, nullptr);
      if (s_hi >= 0.0) {
        eps = bound;
        res.hit_bound = true;
      } else if (s_lo <= 0.0) {
        eps = -bound;
        res.hit_bound = true;
      } else {
        // The score is decreasing in eps: safeguarded Newton inside [lo, hi].
        double lo = -bound, hi = bound;
        if (s > 0.0) lo = 0.0; else hi = 0.0;
        for (int it = 0; it < 200 && std::abs(s) > tol; ++it) {
          double next = slope > 0.0 ? eps + s / slope : 0.5 * (lo + hi);
          if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
          eps = next;
          s = score(eps, &slope);
          if (s > 0.0) lo = eps; else hi = eps;
          if (hi - lo < 1e-15) break;
        }
      }
    }
  }
  res.epsilon = eps;
  res.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) res.values[i] = expit(off[i] + eps);
  res.score = 0.0;
  for (std::size_t i = 0; i < n; ++i) res.score += weights[i] * (outcomes[i] - res.values[i]);
  return res;
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Ctx {
  const LongitudinalDataset& data;
  const NuisanceSet& nu;
  TimeGrid grid;
  std::vector<std::vector<double>> pre;
  double p_min;

  Ctx(const LongitudinalDataset& d, const NuisanceSet& n)
      : data(d), nu(n), grid(d.grid()), p_min(n.plan().defaults.p_min) {
    if (d.size() != n.size() || !(d.grid() == n.grid())) {
      throw std::invalid_argument("TMLE: dataset and nuisance set do not match");
    }
    for (const auto& s : d.subjects()) pre.push_back(observed_history(s));
  }

  std::span<const double> hist(std::size_t i, int m) const {
    return {pre[i].data(), static_cast<std::size_t>(m)};
  }
  double e_arm(std::size_t i, int g) const { return g == 1 ? nu[i].e : 1.0 - nu[i].e; }
  double gamma(std::size_t i, int g, int k) const {
    return nu[i].gamma[g][static_cast<std::size_t>(k - 1)];
  }
  double ratio(std::size_t i, int g, int m) const {
    return surrogate_ratio(nu[i], grid, g, m);
  }
  double pi_star_g(std::size_t i, int g, int k) const {
    const double ps = nu[i].pi_star[static_cast<std::size_t>(k - 1)];
    return g == 1 ? ps : 1.0 - ps;
  }
};

using Table = std::array<std::vector<std::vector<double>>, 2>;

Table make_table(const TimeGrid& grid, std::size_t n) {
  Table t;
  for (int g = 0; g < 2; ++g) {
    t[g].assign(static_cast<std::size_t>(grid.t()), std::vector<double>(n, kNaN));
  }
  return t;
}

double cell(const Table& t, int g, int k, std::size_t i) {
  return t[g][static_cast<std::size_t>(k - 1)][i];
}

// One version of every regression per cross-fitting fold: version l is the
// chain fitted on the rows outside fold l (one version, all rows, without
// cross-fitting). Subject i's targeted value is read from version eval_fold(i).
int n_versions(const Ctx& c) { return c.nu.cross_fitted() ? c.nu.n_folds() : 1; }

int version_of(const Ctx& c, std::size_t i) {
  return c.nu.cross_fitted() ? c.nu.eval_fold(i) : 0;
}

// Initial regression of version l on `train` (outcome y), predicted for `pred`.
std::vector<double> fit_predict(const Ctx& c, Family f, int history, int version,
                                const std::vector<std::size_t>& train,
                                const std::vector<double>& y,
                                const std::vector<std::size_t>& pred, int g, int k) {
  const auto learner = c.nu.plan().learner(f);
  TrainingRows rows;
  for (std::size_t r = 0; r < train.size(); ++r) {
    const std::size_t i = train[r];
    if (c.nu.cross_fitted() && c.nu.eval_fold(i) == version) continue;
    rows.add(c.data[i].x, c.hist(i, history), y[r]);
  }
  if (rows.size() == 0) {
    throw std::runtime_error("TMLE: empty training set for the initial regression at g=" +
                             std::to_string(g) + " k=" + std::to_string(k));
  }
  const auto m = learner->fit(rows, history);
  std::vector<double> out(pred.size());
  for (std::size_t r = 0; r < pred.size(); ++r) {
    out[r] = m->predict(c.data[pred[r]].x, c.hist(pred[r], history));
  }
  return out;
}

// Weight products along the observed path for arm g up to (and including) the
// ratio term entering at k: I(G=g)/e_g prod_{j<k} r(j-1)/gamma_gj * r(k-1).
// With standardized = false all ratios are 1.
double outcome_weight(const Ctx& c, std::size_t i, int g, int k, bool standardized) {
  const auto& s = c.data[i];
  if (s.g != g || !s.uncensored(k)) return 0.0;
  double w = 1.0 / c.e_arm(i, g);
  for (int j = 1; j <= k; ++j) {
    if (standardized) w *= c.ratio(i, g, j - 1);
    w /= c.gamma(i, g, j);
  }
  return w;
}

// e_g^{-1} prod_{j<=k} r(j-1) A_j Y_j / gamma_gj * pi*_{g,k}.
double surrogate_weight(const Ctx& c, std::size_t i, int g, int k) {
  if (!c.data[i].survivor(k)) return 0.0;
  double w = 1.0 / c.e_arm(i, g);
  for (int j = 1; j <= k; ++j) w *= c.ratio(i, g, j - 1) / c.gamma(i, g, j);
  return w * c.pi_star_g(i, g, k);
}

// Initial regressions (one per version) and one tilt producing targeted
// values on the censoring risk set at k. `y_of(l, i)` gives the regression
// outcome of row i under version l.
template <class Y, class W>
void target_step(const Ctx& c, Family f, int history, const std::vector<std::size_t>& train,
                 Y&& y_of, const std::vector<std::size_t>& risk, W&& weight_of,
                 std::vector<Table>& versions, Table& targeted, TargetedFit& fit, int g, int k,
                 int stage) {
  const auto kk = static_cast<std::size_t>(k - 1);
  const int nv = n_versions(c);
  std::vector<std::vector<double>> init(static_cast<std::size_t>(nv));
  std::vector<double> y_train(train.size());
  for (int l = 0; l < nv; ++l) {
    for (std::size_t r = 0; r < train.size(); ++r) y_train[r] = y_of(l, train[r]);
    init[static_cast<std::size_t>(l)] = fit_predict(c, f, history, l, train, y_train, risk, g, k);
  }
  std::vector<double> own(risk.size()), w(risk.size()), y(risk.size());
  std::size_t n_weighted = 0;
  for (std::size_t r = 0; r < risk.size(); ++r) {
    const int l = version_of(c, risk[r]);
    own[r] = init[static_cast<std::size_t>(l)][r];
    w[r] = weight_of(risk[r]);
    y[r] = w[r] > 0.0 ? y_of(l, risk[r]) : 0.0;
    if (w[r] > 0.0) ++n_weighted;
  }
  const auto tilt = tilt_step(own, y, w, c.p_min);
  for (int l = 0; l < nv; ++l) {
    auto& dst = versions[static_cast<std::size_t>(l)][g][kk];
    const auto& src = init[static_cast<std::size_t>(l)];
    for (std::size_t r = 0; r < risk.size(); ++r) {
      dst[risk[r]] = expit(logit(clamp_probability(src[r], c.p_min)) + tilt.epsilon);
    }
  }
  for (std::size_t r = 0; r < risk.size(); ++r) targeted[g][kk][risk[r]] = tilt.values[r];
  fit.tilts.push_back({g, k, stage, tilt.epsilon, tilt.hit_bound, n_weighted});
}

std::vector<double> shifted_plugin_if(std::vector<double> phi, double value) {
  double m = 0.0;
  for (double v : phi) m += v;
  m /= static_cast<double>(phi.size());
  for (double& v : phi) v += value - m;
  return phi;
}

double mean_diff(const Table& q, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += q[1][0][i] - q[0][0][i];
  return s / static_cast<double>(n);
}

}  // namespace

TmleResult tmle_delta(const LongitudinalDataset& data, const NuisanceSet& nu, double alpha) {
  const Ctx c(data, nu);
  const int t = c.grid.t();
  const std::size_t n = data.size();
  TargetedFit fit;
  fit.target = Target::Delta;
  fit.q_mu = make_table(c.grid, n);

  std::vector<Table> ver(static_cast<std::size_t>(n_versions(c)), make_table(c.grid, n));

  for (int k = t; k >= 1; --k) {
    const int h = c.grid.history_before(k);
    const auto risk = risk_set_indices(data, k, std::nullopt, RiskSetKind::Censoring);
    for (int g = 0; g < 2; ++g) {
      const auto train = risk_set_indices(data, k, g, RiskSetKind::Hazard);
      auto y_of = [&](int l, std::size_t i) {
        if (*data[i].outcome(k) == 0) return 0.0;
        return k == t ? 1.0 : cell(ver[static_cast<std::size_t>(l)], g, k + 1, i);
      };
      auto w_of = [&](std::size_t i) { return outcome_weight(c, i, g, k, false); };
      target_step(c, Family::Q, h, train, y_of, risk, w_of, ver, fit.q_mu, fit, g, k, 0);
    }
  }
  fit.estimate = mean_diff(fit.q_mu, n);

  fit.targeted_if.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = data[i];
    double v = 0.0;
    for (int g = 0; g < 2; ++g) {
      double part = cell(fit.q_mu, g, 1, i);
      if (s.g == g) {
        for (int j = 1; j <= t && s.uncensored(j); ++j) {
          const bool alive = *s.outcome(j) == 1;
          const double qy = alive ? (j == t ? 1.0 : cell(fit.q_mu, g, j + 1, i)) : 0.0;
          part += outcome_weight(c, i, g, j, false) * (qy - cell(fit.q_mu, g, j, i));
          if (!alive) break;
        }
      }
      v += g == 1 ? part : -part;
    }
    fit.targeted_if[i] = v;
  }

  TmleResult res;
  const double value = fit.estimate;
  res.estimate = make_estimate(Target::Delta, value,
                               shifted_plugin_if(if_vector_delta(data, nu), value), c.grid,
                               alpha);
  res.fit = std::move(fit);
  return res;
}

TmleResult tmle_delta_s(const LongitudinalDataset& data, const NuisanceSet& nu, double alpha) {
  const Ctx c(data, nu);
  const int t = c.grid.t();
  const int t0 = c.grid.t0();
  const std::size_t n = data.size();
  TargetedFit fit;
  fit.target = Target::DeltaS;
  fit.q_mu = make_table(c.grid, n);
  fit.q_star = make_table(c.grid, n);

  auto q_mu_next = [&](int g, int k, std::size_t i) {
    return k == t ? 1.0 : cell(fit.q_mu, g, k + 1, i);
  };

  const auto nv = static_cast<std::size_t>(n_versions(c));
  std::vector<Table> ver_mu(nv, make_table(c.grid, n)), ver_star(nv, make_table(c.grid, n));
  auto next_v = [&](int l, int g, int k, std::size_t i) {
    return k == t ? 1.0 : cell(ver_mu[static_cast<std::size_t>(l)], g, k + 1, i);
  };

  for (int k = t; k >= 1; --k) {
    const int h = c.grid.history_before(k);
    const auto risk = risk_set_indices(data, k, std::nullopt, RiskSetKind::Censoring);
    const auto survivors = risk_set_indices(data, k, std::nullopt, RiskSetKind::Survivor);
    for (int g = 0; g < 2; ++g) {
      const auto kk = static_cast<std::size_t>(k - 1);
      const auto train = risk_set_indices(data, k, g, RiskSetKind::Hazard);
      auto w_y = [&](std::size_t i) { return outcome_weight(c, i, g, k, true); };
      if (k > t0) {
        auto y_of = [&](int l, std::size_t i) {
          return *data[i].outcome(k) == 0 ? 0.0 : next_v(l, g, k, i);
        };
        target_step(c, Family::QStar, h, train, y_of, risk, w_y, ver_mu, fit.q_mu, fit, g, k, 0);
        continue;
      }
      if (k == t) {
        for (std::size_t i : risk) {
          fit.q_star[g][kk][i] = 1.0;
          for (auto& v : ver_star) v[g][kk][i] = 1.0;
        }
      } else {
        auto y_s = [&](int l, std::size_t i) { return next_v(l, g, k, i); };
        auto w_s = [&](std::size_t i) { return surrogate_weight(c, i, g, k); };
        target_step(c, Family::QStar, k - 1, survivors, y_s, risk, w_s, ver_star, fit.q_star, fit,
                    g, k, 1);
      }
      auto y_of = [&](int l, std::size_t i) {
        return *data[i].outcome(k) == 0 ? 0.0 : cell(ver_star[static_cast<std::size_t>(l)], g, k, i);
      };
      target_step(c, Family::Q, h, train, y_of, risk, w_y, ver_mu, fit.q_mu, fit, g, k, 0);
    }
  }
  fit.estimate = mean_diff(fit.q_mu, n);

  fit.targeted_if.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = data[i];
    double v = 0.0;
    for (int g = 0; g < 2; ++g) {
      double part = cell(fit.q_mu, g, 1, i);
      if (s.g == g) {
        for (int j = 1; j <= t && s.uncensored(j); ++j) {
          const bool alive = *s.outcome(j) == 1;
          double qy = 0.0;
          if (alive) qy = j <= t0 ? cell(fit.q_star, g, j, i) : q_mu_next(g, j, i);
          part += outcome_weight(c, i, g, j, true) * (qy - cell(fit.q_mu, g, j, i));
          if (!alive) break;
        }
      }
      for (int j = 1; j <= t0 && s.survivor(j); ++j) {
        part += surrogate_weight(c, i, g, j) * (q_mu_next(g, j, i) - cell(fit.q_star, g, j, i));
      }
      v += g == 1 ? part : -part;
    }
    fit.targeted_if[i] = v;
  }

  TmleResult res;
  const double value = fit.estimate;
  res.estimate = make_estimate(Target::DeltaS, value,
                               shifted_plugin_if(if_vector_delta_s(data, nu), value), c.grid,
                               alpha);
  res.fit = std::move(fit);
  return res;
}

}  // namespace survsurrogate
