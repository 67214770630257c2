#include "survsurrogate/estimators.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "survsurrogate/inference.hpp"

namespace survsurrogate {

const char* target_name(Target t) noexcept {
  switch (t) {
    case Target::Delta: return "delta";
    case Target::DeltaS: return "deltaS";
    case Target::R: return "r";
  }
  return "?";
}

double IFComponents::value() const noexcept {
  return (weighted[1] + surrogate[1] + substitution[1]) -
         (weighted[0] + surrogate[0] + substitution[0]);
}

namespace {

double need(double v, const char* family, int g, int k) {
  if (std::isnan(v)) {
    throw std::invalid_argument(std::string("missing nuisance ") + family +
                                (g >= 0 ? " g=" + std::to_string(g) : std::string()) +
                                " k=" + std::to_string(k));
  }
  return v;
}

double at(const std::vector<double>& v, int k) { return v[static_cast<std::size_t>(k - 1)]; }

double e_arm(const SubjectNuisances& nu, int g) {
  const double e = need(nu.e, "e", -1, 0);
  return g == 1 ? e : 1.0 - e;
}

double gamma_(const SubjectNuisances& nu, int g, int k) {
  return need(at(nu.gamma[g], k), "gamma", g, k);
}
double mu_(const SubjectNuisances& nu, int g, int k) { return need(at(nu.mu[g], k), "mu", g, k); }
double Q_(const SubjectNuisances& nu, int g, int k) { return need(at(nu.Q[g], k), "Q", g, k); }
double Qs_(const SubjectNuisances& nu, int g, int k) {
  return need(at(nu.Qstar[g], k), "Q_star", g, k);
}

// mu_{g,k+1} Q_{g,k+1}, with the k = t boundary equal to 1.
double next_q(const SubjectNuisances& nu, const TimeGrid& grid, int g, int k, bool star) {
  if (k >= grid.t()) return 1.0;
  return mu_(nu, g, k + 1) * (star ? Qs_(nu, g, k + 1) : Q_(nu, g, k + 1));
}

void check_size(const LongitudinalDataset& data, const NuisanceSet& nu) {
  if (data.size() != nu.size()) throw std::invalid_argument("dataset / nuisance size mismatch");
  if (!(data.grid() == nu.grid())) throw std::invalid_argument("dataset / nuisance grid mismatch");
}

}  // namespace

double surrogate_ratio(const SubjectNuisances& nu, const TimeGrid& grid, int g, int m) {
  if (m <= 0 || m > grid.t0()) return 1.0;
  const double p = need(at(nu.pi, m), "pi", -1, m);
  const double ps = need(at(nu.pi_star, m), "pi_star", -1, m);
  return g == 1 ? ps / p : (1.0 - ps) / (1.0 - p);
}

IFComponents if_components_delta(const SubjectRecord& s, const SubjectNuisances& nu,
                                 const TimeGrid& grid) {
  IFComponents c;
  const int t = grid.t();
  for (int g = 0; g < 2; ++g) {
    c.substitution[g] = mu_(nu, g, 1) * Q_(nu, g, 1);
    if (s.g != g) continue;
    double w = 1.0 / e_arm(nu, g);
    double sum = 0.0;
    for (int j = 1; j <= t; ++j) {
      if (!s.uncensored(j)) break;
      const double gj = gamma_(nu, g, j);
      const bool alive = *s.outcome(j) == 1;
      const double yterm = alive ? next_q(nu, grid, g, j, false) : 0.0;
      sum += w / gj * (yterm - mu_(nu, g, j) * Q_(nu, g, j));
      if (!alive) break;
      w /= gj;
    }
    c.weighted[g] = sum;
  }
  return c;
}

IFComponents if_components_delta_s(const SubjectRecord& s, const SubjectNuisances& nu,
                                   const TimeGrid& grid) {
  IFComponents c;
  const int t = grid.t();
  const int t0 = grid.t0();
  for (int g = 0; g < 2; ++g) {
    c.substitution[g] = mu_(nu, g, 1) * Qs_(nu, g, 1);
    const double inv_e = 1.0 / e_arm(nu, g);
    if (s.g == g) {
      double w = inv_e;
      double sum = 0.0;
      for (int j = 1; j <= t; ++j) {
        w *= surrogate_ratio(nu, grid, g, j - 1);
        if (!s.uncensored(j)) break;
        const double gj = gamma_(nu, g, j);
        const double y = *s.outcome(j);
        sum += w / gj * Qs_(nu, g, j) * (y - mu_(nu, g, j));
        if (y == 0.0) break;
        w /= gj;
      }
      c.weighted[g] = sum;
    }
    // Surrogate terms use every arm: pi*_{g,j} stands in for I(G = g).
    double v = inv_e;
    double sum = 0.0;
    for (int j = 1; j <= t0; ++j) {
      v *= surrogate_ratio(nu, grid, g, j - 1);
      if (!s.survivor(j)) break;
      v /= gamma_(nu, g, j);
      const double ps = need(at(nu.pi_star, j), "pi_star", -1, j);
      const double ps_g = g == 1 ? ps : 1.0 - ps;
      sum += v * ps_g * (next_q(nu, grid, g, j, true) - Qs_(nu, g, j));
    }
    c.surrogate[g] = sum;
  }
  return c;
}

double eval_if_delta(const SubjectRecord& s, const SubjectNuisances& nu, const TimeGrid& grid) {
  return if_components_delta(s, nu, grid).value();
}

double eval_if_delta_s(const SubjectRecord& s, const SubjectNuisances& nu,
                       const TimeGrid& grid) {
  return if_components_delta_s(s, nu, grid).value();
}

std::vector<double> if_vector_delta(const LongitudinalDataset& data, const NuisanceSet& nu) {
  check_size(data, nu);
  std::vector<double> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    try {
      out[i] = eval_if_delta(data[i], nu[i], data.grid());
    } catch (const std::invalid_argument& ex) {
      throw std::invalid_argument("subject " + data[i].id + ": " + ex.what());
    }
  }
  return out;
}

std::vector<double> if_vector_delta_s(const LongitudinalDataset& data, const NuisanceSet& nu) {
  check_size(data, nu);
  std::vector<double> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    try {
      out[i] = eval_if_delta_s(data[i], nu[i], data.grid());
    } catch (const std::invalid_argument& ex) {
      throw std::invalid_argument("subject " + data[i].id + ": " + ex.what());
    }
  }
  return out;
}

EffectEstimate make_estimate(Target target, double value, std::vector<double> if_values,
                             const TimeGrid& grid, double alpha) {
  EffectEstimate est;
  est.target = target;
  est.value = value;
  est.alpha = alpha;
  est.grid = grid;
  const auto v = variance_from_if(if_values);
  est.sigma2 = v.sigma2;
  est.se = v.se;
  const double z = normal_quantile(1.0 - alpha / 2.0);
  est.ci_lo = value - z * est.se;
  est.ci_hi = value + z * est.se;
  est.if_values = std::move(if_values);
  return est;
}

EffectEstimate make_r_estimate(const EffectEstimate& delta, const EffectEstimate& delta_s,
                               double alpha, double r_floor) {
  if (!(std::abs(delta.value) >= r_floor)) {
    EffectEstimate est;
    est.target = Target::R;
    est.alpha = alpha;
    est.grid = delta_s.grid;
    est.defined = false;
    est.reason = "treatment effect indistinguishable from zero";
    const double nan = std::numeric_limits<double>::quiet_NaN();
    est.value = est.se = est.sigma2 = est.ci_lo = est.ci_hi = nan;
    return est;
  }
  const double r = 1.0 - delta_s.value / delta.value;
  auto est = make_estimate(Target::R, r,
                           r_influence(delta.value, delta_s.value, delta.if_values,
                                       delta_s.if_values),
                           delta_s.grid, alpha);
  est.sigma2 = variance_r(delta.value, delta_s.value, delta.if_values, delta_s.if_values);
  est.se = std::sqrt(est.sigma2 / static_cast<double>(delta.if_values.size()));
  const double z = normal_quantile(1.0 - alpha / 2.0);
  est.ci_lo = r - z * est.se;
  est.ci_hi = r + z * est.se;
  return est;
}

namespace {

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

PluginEstimates estimate_plugin(const LongitudinalDataset& data, const NuisanceSet& nu,
                                double alpha, double r_floor) {
  auto phi = if_vector_delta(data, nu);
  auto phi_s = if_vector_delta_s(data, nu);
  PluginEstimates out;
  const double d = mean_of(phi);
  const double ds = mean_of(phi_s);
  out.delta = make_estimate(Target::Delta, d, std::move(phi), data.grid(), alpha);
  out.delta_s = make_estimate(Target::DeltaS, ds, std::move(phi_s), data.grid(), alpha);
  out.r = make_r_estimate(out.delta, out.delta_s, alpha, r_floor);
  return out;
}

namespace {

double ipw(const LongitudinalDataset& data, const NuisanceSet& nu, bool standardized) {
  check_size(data, nu);
  const auto& grid = data.grid();
  const int t = grid.t();
  const int last_ratio = std::min(grid.t0(), t - 1);
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& s = data[i];
    if (!s.survivor(t)) continue;
    const int g = s.g;
    double w = 1.0 / e_arm(nu[i], g);
    for (int k = 1; k <= t; ++k) w /= gamma_(nu[i], g, k);
    if (standardized) {
      for (int m = 1; m <= last_ratio; ++m) w *= surrogate_ratio(nu[i], grid, g, m);
    }
    total += g == 1 ? w : -w;
  }
  return total / static_cast<double>(data.size());
}

double substitution(const LongitudinalDataset& data, const NuisanceSet& nu, bool star) {
  check_size(data, nu);
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& v = nu[i];
    const double q1 = star ? Qs_(v, 1, 1) : Q_(v, 1, 1);
    const double q0 = star ? Qs_(v, 0, 1) : Q_(v, 0, 1);
    total += mu_(v, 1, 1) * q1 - mu_(v, 0, 1) * q0;
  }
  return total / static_cast<double>(data.size());
}

}  // namespace

double estimate_ipw_delta(const LongitudinalDataset& data, const NuisanceSet& nu) {
  return ipw(data, nu, false);
}

double estimate_ipw_delta_s(const LongitudinalDataset& data, const NuisanceSet& nu) {
  return ipw(data, nu, true);
}

double estimate_substitution_delta(const LongitudinalDataset& data, const NuisanceSet& nu) {
  return substitution(data, nu, false);
}

double estimate_substitution_delta_s(const LongitudinalDataset& data, const NuisanceSet& nu) {
  return substitution(data, nu, true);
}

}  // namespace survsurrogate
