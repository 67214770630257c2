#include "survsurrogate/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <boost/math/distributions/normal.hpp>

#include "survsurrogate/parallel.hpp"
#include "survsurrogate/rng.hpp"

namespace survsurrogate {

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("normal_quantile: p outside (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

namespace {

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double centered_cross(std::span<const double> a, std::span<const double> b) {
  const double ma = mean_of(a), mb = mean_of(b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - ma) * (b[i] - mb);
  return s / static_cast<double>(a.size() - 1);
}

void require_n(std::size_t n, const char* who) {
  if (n < 2) throw std::invalid_argument(std::string(who) + ": need at least 2 observations");
}

}  // namespace

VarianceResult variance_from_if(std::span<const double> if_values) {
  require_n(if_values.size(), "variance_from_if");
  VarianceResult r;
  r.sigma2 = centered_cross(if_values, if_values);
  r.se = std::sqrt(r.sigma2 / static_cast<double>(if_values.size()));
  return r;
}

double variance_r(double delta, double delta_s, std::span<const double> phi,
                  std::span<const double> phi_s) {
  require_n(phi.size(), "variance_r");
  if (phi.size() != phi_s.size()) throw std::invalid_argument("variance_r: length mismatch");
  if (delta == 0.0) throw std::domain_error("variance_r: delta is zero");
  const double vpp = centered_cross(phi, phi);
  const double vss = centered_cross(phi_s, phi_s);
  const double vps = centered_cross(phi, phi_s);
  const double d2 = delta * delta;
  const double v = vss / d2 + delta_s * delta_s * vpp / (d2 * d2) -
                   2.0 * delta_s * vps / (d2 * delta);
  return std::max(v, 0.0);
}

std::vector<double> r_influence(double delta, double delta_s, std::span<const double> phi,
                                std::span<const double> phi_s) {
  const double mp = mean_of(phi), ms = mean_of(phi_s);
  const double r = 1.0 - delta_s / delta;
  std::vector<double> out(phi.size());
  for (std::size_t i = 0; i < phi.size(); ++i) {
    out[i] = r + delta_s / (delta * delta) * (phi[i] - mp) - (phi_s[i] - ms) / delta;
  }
  return out;
}

Eigen::MatrixXd covariance_sigma(const Eigen::MatrixXd& if_matrix) {
  require_n(static_cast<std::size_t>(if_matrix.rows()), "covariance_sigma");
  const Eigen::MatrixXd c = if_matrix.rowwise() - if_matrix.colwise().mean();
  Eigen::MatrixXd s = (c.transpose() * c) / static_cast<double>(if_matrix.rows() - 1);
  return 0.5 * (s + s.transpose());
}

namespace {

void check_options(const StepdownOptions& o) {
  if (!(o.margin > 0.0 && o.margin < 1.0)) {
    throw std::invalid_argument("stepdown: margin must lie in (0, 1)");
  }
  if (!(o.alpha > 0.0 && o.alpha < 1.0)) {
    throw std::invalid_argument("stepdown: alpha must lie in (0, 1)");
  }
}

// Runs the stepdown loop. `critical(hyp)` returns the critical value for the
// current hypothesis set (indices into tests).
template <class Critical>
void run_stepdown(StepdownResult& res, Critical&& critical) {
  std::vector<std::size_t> active(res.tests.size());
  for (std::size_t i = 0; i < active.size(); ++i) active[i] = i;
  int step = 0;
  while (!active.empty()) {
    ++step;
    std::size_t best = active.front();
    for (std::size_t i : active) {
      if (res.tests[i].tau > res.tests[best].tau) best = i;
    }
    StepdownStep st;
    for (std::size_t i : active) st.hypotheses.push_back(res.tests[i].j);
    st.argmax = res.tests[best].j;
    st.max_stat = res.tests[best].tau;
    st.critical_value = critical(active);
    st.rejected = st.max_stat > st.critical_value;
    res.steps.push_back(st);
    if (!st.rejected) break;
    res.tests[best].rejected = true;
    res.tests[best].removed_at_step = step;
    active.erase(std::find(active.begin(), active.end(), best));
  }
  int rec = res.t_L;
  for (const auto& t : res.tests) {
    if (!t.rejected) rec = std::min(rec, t.j);
  }
  res.recommended_t0 = rec;
  if (!res.tests.empty() && active.empty()) {
    res.diagnostic = "every candidate j < t_L was rejected; recommending t_L";
  }
}

StepdownResult make_result(int t_L, const StepdownOptions& o) {
  StepdownResult res;
  res.t_L = t_L;
  res.margin = o.margin;
  res.alpha = o.alpha;
  res.monotone = o.monotone;
  return res;
}

}  // namespace

StepdownResult stepdown_from_statistics(std::span<const int> js,
                                        std::span<const double> delta_hat,
                                        std::span<const double> se, int t_L,
                                        const StepdownOptions& options) {
  check_options(options);
  if (!options.monotone) {
    throw std::invalid_argument(
        "resampling critical values not implemented for precomputed statistics");
  }
  if (js.size() != delta_hat.size() || js.size() != se.size()) {
    throw std::invalid_argument("stepdown: length mismatch");
  }
  auto res = make_result(t_L, options);
  for (std::size_t i = 0; i < js.size(); ++i) {
    StepdownTest t;
    t.j = js[i];
    t.delta_hat = delta_hat[i];
    t.sigma_delta = std::numeric_limits<double>::quiet_NaN();
    t.se = se[i];
    t.tau = delta_hat[i] / se[i];
    res.tests.push_back(t);
  }
  const double z = normal_quantile(1.0 - options.alpha);
  run_stepdown(res, [z](const std::vector<std::size_t>&) { return z; });
  return res;
}

StepdownResult stepdown_select_t0(std::span<const StepdownCandidate> candidates, int t_L,
                                  const StepdownOptions& options) {
  check_options(options);
  if (!options.monotone && !options.bootstrap) {
    throw std::invalid_argument(
        "resampling critical values not implemented; use the monotone procedure or enable "
        "the multiplier bootstrap");
  }
  auto res = make_result(t_L, options);
  const std::size_t m = candidates.size();
  std::size_t n = 0;
  // Centered influence values of each delta_j, column per candidate.
  Eigen::MatrixXd D;
  for (std::size_t c = 0; c < m; ++c) {
    const auto& cand = candidates[c];
    if (cand.j < 1 || cand.j >= t_L) throw std::invalid_argument("stepdown: need 1 <= j < t_L");
    if (cand.delta == 0.0) throw std::domain_error("stepdown: Delta(t) is zero");
    if (c == 0) {
      n = cand.phi.size();
      require_n(n, "stepdown");
      D.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
    }
    if (cand.phi.size() != n || cand.phi_s_j.size() != n || cand.phi_s_tl.size() != n) {
      throw std::invalid_argument("stepdown: influence vectors of differing length");
    }
    Eigen::MatrixXd F(static_cast<Eigen::Index>(n), 3);
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      F(r, 0) = cand.phi_s_j[i];
      F(r, 1) = cand.phi_s_tl[i];
      F(r, 2) = cand.phi[i];
    }
    const Eigen::Matrix3d sigma = covariance_sigma(F);
    StepdownTest t;
    t.j = cand.j;
    t.delta_hat = (cand.delta_s_j - cand.delta_s_tl) / cand.delta - options.margin;
    const double d = cand.delta;
    // derivative of (a - b) / d: the numerator a - b is (delta_hat + margin) * d
    const Eigen::Vector3d zeta(1.0 / d, -1.0 / d, -(t.delta_hat + options.margin) / d);
    t.sigma_delta = std::sqrt(std::max(0.0, zeta.dot(sigma * zeta)));
    t.se = t.sigma_delta / std::sqrt(static_cast<double>(n));
    t.tau = t.se > 0.0 ? t.delta_hat / t.se
                       : (t.delta_hat > 0 ? std::numeric_limits<double>::infinity()
                                          : -std::numeric_limits<double>::infinity());
    const Eigen::MatrixXd Fc = F.rowwise() - F.colwise().mean();
    D.col(static_cast<Eigen::Index>(c)) = Fc * zeta;
    res.tests.push_back(t);
  }
  std::sort(res.tests.begin(), res.tests.end(),
            [](const StepdownTest& a, const StepdownTest& b) { return a.j < b.j; });

  if (options.monotone) {
    const double z = normal_quantile(1.0 - options.alpha);
    run_stepdown(res, [z](const std::vector<std::size_t>&) { return z; });
    return res;
  }

  // Multiplier bootstrap: T*_b(Omega) = max_{j in Omega} sum_i xi_i D_ij / (n se_j).
  std::vector<std::size_t> col_of(m);
  for (std::size_t c = 0; c < m; ++c) {
    for (std::size_t i = 0; i < m; ++i) {
      if (res.tests[i].j == candidates[c].j) col_of[i] = c;
    }
  }
  const auto B = static_cast<std::size_t>(std::max(1, options.bootstrap_reps));
  Eigen::MatrixXd draws(static_cast<Eigen::Index>(B), static_cast<Eigen::Index>(m));
  parallel_for(B, options.threads, [&](std::size_t b) {
    Rng rng(derive_seed(options.seed, b));
    Eigen::VectorXd xi(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < xi.size(); ++i) xi[i] = rng.normal();
    const Eigen::RowVectorXd s = xi.transpose() * D / static_cast<double>(n);
    for (std::size_t i = 0; i < m; ++i) {
      const double se = res.tests[i].se;
      draws(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(i)) =
          se > 0.0 ? s[static_cast<Eigen::Index>(col_of[i])] / se : 0.0;
    }
  });
  run_stepdown(res, [&](const std::vector<std::size_t>& active) {
    std::vector<double> mx(B);
    for (std::size_t b = 0; b < B; ++b) {
      double v = -std::numeric_limits<double>::infinity();
      for (std::size_t i : active) {
        v = std::max(v, draws(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(i)));
      }
      mx[b] = v;
    }
    std::sort(mx.begin(), mx.end());
    const auto idx = static_cast<std::size_t>(
        std::ceil((1.0 - options.alpha) * static_cast<double>(B))) - 1;
    return mx[std::min(idx, B - 1)];
  });
  return res;
}

}  // namespace survsurrogate
