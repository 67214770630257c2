#include "survsurrogate/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "survsurrogate/csv_io.hpp"
#include "survsurrogate/estimators.hpp"
#include "survsurrogate/inference.hpp"
#include "survsurrogate/nuisance.hpp"
#include "survsurrogate/rng.hpp"
#include "survsurrogate/simulation.hpp"
#include "survsurrogate/tmle.hpp"

namespace survsurrogate {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Child seed streams derived from --seed.
constexpr std::uint64_t kFoldStream = 1;
constexpr std::uint64_t kBootstrapStream = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

void write_file(const fs::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw CsvError("cannot write '" + path.string() + "'");
  f << text;
  if (!f) throw CsvError("write failed for '" + path.string() + "'");
}

json violation_json(const Violation& v) {
  return json{{"id", v.subject_id}, {"field", v.field}, {"message", v.message}};
}

// Reads and validates; prints violations. Returns nullopt-equivalent via exit code.
int load_valid(const RunConfig& c, std::optional<LongitudinalDataset>& out, std::ostream& err) {
  if (c.input.empty()) throw UsageError("an input file is required");
  auto data = read_wide_csv_file(c.input);
  const auto violations = validate(data);
  for (const auto& v : violations) err << violation_json(v).dump() << '\n';
  if (!violations.empty()) return 1;
  out.emplace(std::move(data));
  return 0;
}

LongitudinalDataset analysis_data(const LongitudinalDataset& data, const RunConfig& c) {
  const int t = c.t.value_or(data.grid().t());
  const int t0 = c.t0.value_or(std::min(data.grid().t0(), t));
  if (t > data.grid().t() || t0 > data.grid().t0() || t0 > t) {
    throw UsageError("analysis grid (t=" + std::to_string(t) + ", t0=" + std::to_string(t0) +
                     ") exceeds the data grid (t=" + std::to_string(data.grid().t()) +
                     ", t0=" + std::to_string(data.grid().t0()) + ")");
  }
  if (t0 < 1) throw UsageError("t0 must be >= 1");
  return restrict_grid(data, TimeGrid(t, t0));
}

json estimator_block(const EffectEstimate& d, const EffectEstimate& ds, const EffectEstimate& r) {
  json b;
  b["delta"] = num(d.value);
  b["se_delta"] = num(d.se);
  b["ci_delta"] = json::array({num(d.ci_lo), num(d.ci_hi)});
  b["deltaS"] = num(ds.value);
  b["se_deltaS"] = num(ds.se);
  b["ci_deltaS"] = json::array({num(ds.ci_lo), num(ds.ci_hi)});
  if (r.defined) {
    b["r"] = num(r.value);
    b["se_r"] = num(r.se);
    b["ci_r"] = json::array({num(r.ci_lo), num(r.ci_hi)});
    b["r_reason"] = nullptr;
  } else {
    b["r"] = nullptr;
    b["se_r"] = nullptr;
    b["ci_r"] = nullptr;
    b["r_reason"] = r.reason;
  }
  return b;
}

json tilts_json(const TargetedFit& fit) {
  json a = json::array();
  for (const auto& t : fit.tilts) {
    a.push_back({{"g", t.g},
                 {"k", t.k},
                 {"stage", t.stage == 1 ? "surrogate" : "outcome"},
                 {"epsilon", num(t.epsilon)},
                 {"hit_bound", t.hit_bound},
                 {"n_weighted", t.n_weighted}});
  }
  return a;
}

json diagnostics_json(const NuisanceSet& nu) {
  json a = json::array();
  for (const auto& d : nu.diagnostics()) {
    a.push_back({{"family", family_name(d.family)},
                 {"g", d.g},
                 {"k", d.k},
                 {"fold", d.fold},
                 {"message", d.message}});
  }
  return a;
}

json grid_json(const TimeGrid& g) { return json{{"t", g.t()}, {"t0", g.t0()}}; }

json stepdown_json(const StepdownResult& r) {
  json tests = json::array();
  for (const auto& t : r.tests) {
    tests.push_back({{"j", t.j},
                     {"delta_hat", num(t.delta_hat)},
                     {"sigma_delta", num(t.sigma_delta)},
                     {"se", num(t.se)},
                     {"tau", num(t.tau)},
                     {"rejected", t.rejected},
                     {"removed_at_step", t.removed_at_step}});
  }
  json steps = json::array();
  for (const auto& s : r.steps) {
    steps.push_back({{"hypotheses", s.hypotheses},
                     {"argmax", s.argmax},
                     {"max_stat", num(s.max_stat)},
                     {"critical_value", num(s.critical_value)},
                     {"rejected", s.rejected}});
  }
  return json{{"t_L", r.t_L},
              {"margin", r.margin},
              {"alpha", r.alpha},
              {"monotone", r.monotone},
              {"tests", tests},
              {"steps", steps},
              {"recommended_t0", r.recommended_t0},
              {"diagnostic", r.diagnostic.empty() ? json(nullptr) : json(r.diagnostic)}};
}

json provenance(const RunConfig& c, const FoldAssignment& folds) {
  std::vector<std::size_t> sizes;
  for (int f = 0; f < folds.n_folds(); ++f) sizes.push_back(folds.members(f).size());
  return json{{"seed", c.seed},
              {"fold_seed", folds.seed()},
              {"n_folds", folds.n_folds()},
              {"fold_sizes", sizes}};
}

}  // namespace

std::string estimate_json(const LongitudinalDataset& full, const RunConfig& c, int threads) {
  const auto data = analysis_data(full, c);
  const auto folds = make_folds(data, c.n_folds, derive_seed(c.seed, kFoldStream));
  const SequentialPlan plan(data.grid(), static_cast<int>(data.n_covariates()),
                            c.learner_options());
  const auto nu = crossfit_nuisances(data, folds, plan, threads);
  json res;
  res["tool"] = "survsurrogate";
  res["version"] = kVersion;
  res["config"] = json::parse(to_json(c));
  res["n"] = data.size();
  res["n_treated"] = data.arm_size(1);
  res["n_control"] = data.arm_size(0);
  res["grid"] = grid_json(data.grid());
  res["provenance"] = provenance(c, folds);
  json est = json::object();
  if (c.wants("plugin")) {
    const auto pe = estimate_plugin(data, nu, c.alpha, c.r_floor);
    est["plugin"] = estimator_block(pe.delta, pe.delta_s, pe.r);
  }
  if (c.wants("tmle")) {
    const auto td = tmle_delta(data, nu, c.alpha);
    const auto ts = tmle_delta_s(data, nu, c.alpha);
    const auto tr = make_r_estimate(td.estimate, ts.estimate, c.alpha, c.r_floor);
    auto b = estimator_block(td.estimate, ts.estimate, tr);
    b["tilts_delta"] = tilts_json(td.fit);
    b["tilts_deltaS"] = tilts_json(ts.fit);
    est["tmle"] = std::move(b);
  }
  res["estimators"] = std::move(est);
  res["nuisance_diagnostics"] = diagnostics_json(nu);
  return res.dump(2) + "\n";
}

int cmd_validate(const RunConfig& c, std::ostream& out, std::ostream& err) {
  std::optional<LongitudinalDataset> data;
  const int rc = load_valid(c, data, err);
  if (rc == 0) {
    out << "valid: " << data->size() << " subjects, t=" << data->grid().t()
        << ", t0=" << data->grid().t0() << ", p=" << data->n_covariates() << '\n';
  }
  return rc;
}

int cmd_estimate(const RunConfig& c, int threads, std::ostream& out, std::ostream& err) {
  std::optional<LongitudinalDataset> data;
  if (const int rc = load_valid(c, data, err); rc != 0) return rc;
  std::string text;
  try {
    text = estimate_json(*data, c, threads);
  } catch (const UsageError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  } catch (const std::exception& e) {
    err << "estimation failed: " << e.what() << '\n';
    return 1;
  }
  const fs::path path = fs::path(c.output_dir) / "results.json";
  write_file(path, text);
  out << "wrote " << path.string() << '\n';
  return 0;
}

int cmd_simulate(const RunConfig& c, int threads, std::ostream& out, std::ostream& /*err*/) {
  auto setting = setting_preset(c.setting);
  setting.n = c.n;
  EstimatorConfig ec;
  ec.n_folds = c.n_folds;
  ec.learner = c.learner_options();
  ec.plugin = c.wants("plugin");
  ec.tmle = c.wants("tmle");
  ec.alpha = c.alpha;
  ec.r_floor = c.r_floor;
  const auto truth = true_values_oracle(setting, c.oracle_n, kOracleSeed, threads);
  const auto table = run_replications(setting, c.reps, ec, c.seed, truth, threads);
  const fs::path dir(c.output_dir);
  write_file(dir / "table.csv", table_csv(table));
  write_file(dir / "replications.csv", replications_csv(table));
  double cens = 0.0;
  int ok = 0;
  for (const auto& r : table.replications) {
    if (r.ok) {
      cens += r.censored_fraction;
      ++ok;
    }
  }
  json seeds = json::array();
  for (const auto& r : table.replications) seeds.push_back(r.seed);
  json failures = json::array();
  for (const auto& r : table.replications) {
    if (!r.ok) failures.push_back({{"rep", r.rep}, {"error", r.error}});
  }
  json m{{"tool", "survsurrogate"},
         {"version", kVersion},
         {"config", json::parse(to_json(c))},
         {"setting",
          {{"name", setting.name},
           {"alpha", setting.alpha},
           {"censor_rate", setting.censor_rate},
           {"grid", grid_json(setting.grid)},
           {"n", setting.n},
           {"surrogate_sd", setting.surrogate_sd},
           {"propensity_slope", setting.propensity_slope}}},
         {"truth",
          {{"delta", truth.delta},
           {"delta_draws", truth.delta_draws},
           {"deltaS", truth.delta_s},
           {"r", truth.r},
           {"mc_se_r", truth.mc_se},
           {"mc_se_delta", truth.delta_mc_se},
           {"mc_se_deltaS", truth.delta_s_mc_se},
           {"oracle_n", truth.oracle_n},
           {"oracle_seed", kOracleSeed}}},
         {"root_seed", c.seed},
         {"n_reps", table.n_reps},
         {"n_failed", table.n_failed},
         {"failures", failures},
         {"mean_censored_fraction", ok > 0 ? num(cens / ok) : json(nullptr)},
         {"replication_seeds", seeds}};
  write_file(dir / "manifest.json", m.dump(2) + "\n");
  out << table_csv(table);
  return 0;
}

int cmd_select_t0(const RunConfig& c, int threads, std::ostream& out, std::ostream& err) {
  if (!c.monotone && !c.bootstrap) {
    throw UsageError(
        "non-monotone stepdown needs resampled critical values; pass --bootstrap or use "
        "the monotone procedure");
  }
  std::optional<LongitudinalDataset> full;
  if (const int rc = load_valid(c, full, err); rc != 0) return rc;
  const int t = c.t.value_or(full->grid().t());
  if (t > full->grid().t()) throw UsageError("t exceeds the data horizon");
  const int t_L = c.t_L.value_or(std::min(full->grid().t0(), t - 1));
  if (t_L < 2 || t_L >= t) throw UsageError("t_L must satisfy 2 <= t_L < t");
  if (t_L > full->grid().t0()) throw UsageError("t_L exceeds the surrogate columns in the data");

  std::vector<StepdownCandidate> cands;
  json per_j = json::array();
  try {
    // Delta(t) and DeltaS(t, j) for j = 1..t_L from grids (t, j) on shared folds.
    std::vector<EffectEstimate> ds(static_cast<std::size_t>(t_L));
    EffectEstimate delta;
    const auto base = restrict_grid(*full, TimeGrid(t, t_L));
    const auto folds = make_folds(base, c.n_folds, derive_seed(c.seed, kFoldStream));
    for (int j = 1; j <= t_L; ++j) {
      const auto data = restrict_grid(*full, TimeGrid(t, j));
      const SequentialPlan plan(data.grid(), static_cast<int>(data.n_covariates()),
                                c.learner_options());
      const auto nu = crossfit_nuisances(data, folds, plan, threads);
      auto pe = estimate_plugin(data, nu, c.alpha, c.r_floor);
      if (j == t_L) delta = pe.delta;
      per_j.push_back({{"j", j}, {"deltaS", num(pe.delta_s.value)}, {"se_deltaS", num(pe.delta_s.se)}});
      ds[static_cast<std::size_t>(j - 1)] = std::move(pe.delta_s);
    }
    for (int j = 1; j < t_L; ++j) {
      const auto& dj = ds[static_cast<std::size_t>(j - 1)];
      const auto& dl = ds[static_cast<std::size_t>(t_L - 1)];
      cands.push_back({j, dj.value, dl.value, delta.value, dj.if_values, dl.if_values,
                       delta.if_values});
    }
    StepdownOptions so;
    so.margin = c.margin;
    so.alpha = c.alpha;
    so.monotone = c.monotone;
    so.bootstrap = c.bootstrap;
    so.bootstrap_reps = c.bootstrap_reps;
    so.seed = derive_seed(c.seed, kBootstrapStream);
    so.threads = threads;
    const auto result = stepdown_select_t0(cands, t_L, so);
    json sel = stepdown_json(result);
    sel["tool"] = "survsurrogate";
    sel["version"] = kVersion;
    sel["config"] = json::parse(to_json(c));
    sel["t"] = t;
    sel["delta"] = num(delta.value);
    sel["se_delta"] = num(delta.se);
    sel["deltaS_by_j"] = per_j;
    sel["provenance"] = provenance(c, folds);
    const fs::path path = fs::path(c.output_dir) / "selection.json";
    write_file(path, sel.dump(2) + "\n");
    out << "recommended_t0 " << result.recommended_t0 << '\n';
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  } catch (const CsvError&) {
    throw;
  } catch (const std::runtime_error& e) {
    err << "selection failed: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Surrogate-explained share of a treatment effect on a censored survival outcome"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  std::string config_path;
  int threads = 1;
  RunConfig flags;
  std::map<std::string, CLI::Option*> opt;
  auto key = [](CLI::App* sub, const char* k) { return sub->get_name() + ":" + k; };

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON run configuration");
    opt[key(sub, "threads")] = sub->add_option("--threads", threads, "worker threads (output is identical)")
                         ->check(CLI::PositiveNumber);
  };
  auto data_opts = [&](CLI::App* sub) {
    opt[key(sub, "input")] = sub->add_option("input,--input", flags.input, "wide CSV file");
    opt[key(sub, "output_dir")] = sub->add_option("--out", flags.output_dir, "output directory");
    opt[key(sub, "t")] = sub->add_option("--t", flags.t, "outcome horizon");
    opt[key(sub, "n_folds")] = sub->add_option("--folds", flags.n_folds, "cross-fitting folds");
    opt[key(sub, "seed")] = sub->add_option("--seed", flags.seed, "root seed");
    opt[key(sub, "alpha")] = sub->add_option("--alpha", flags.alpha, "level");
    opt[key(sub, "interaction_order")] =
        sub->add_option("--interactions", flags.interaction_order, "1 main effects, 0 saturated");
    opt[key(sub, "poly_degree")] = sub->add_option("--degree", flags.poly_degree, "polynomial degree");
    opt[key(sub, "p_min")] = sub->add_option("--p-min", flags.p_min, "probability clamp");
  };

  auto* v = app.add_subcommand("validate", "check a wide CSV file against the data model");
  common(v);
  opt[key(v, "input")] = v->add_option("input,--input", flags.input, "wide CSV file");

  auto* e = app.add_subcommand("estimate", "plug-in and TMLE estimates of delta, deltaS and R");
  common(e);
  data_opts(e);
  opt[key(e, "t0")] = e->add_option("--t0", flags.t0, "surrogate horizon");
  opt[key(e, "r_floor")] = e->add_option("--r-floor", flags.r_floor, "smallest |delta| for R");
  opt[key(e, "estimators")] = e->add_option("--estimators", flags.estimators, "plugin and/or tmle")
                          ->delimiter(',');

  auto* s = app.add_subcommand("simulate", "replications under a preset setting");
  common(s);
  opt[key(s, "setting")] = s->add_option("--setting", flags.setting, "preset 1, 2 or 3");
  opt[key(s, "reps")] = s->add_option("--reps", flags.reps, "replications");
  opt[key(s, "seed")] = s->add_option("--seed", flags.seed, "root seed");
  opt[key(s, "n")] = s->add_option("--n", flags.n, "sample size per replication");
  opt[key(s, "oracle_n")] = s->add_option("--oracle-n", flags.oracle_n, "truth oracle sample size");
  opt[key(s, "output_dir")] = s->add_option("--out", flags.output_dir, "output directory");
  opt[key(s, "n_folds")] = s->add_option("--folds", flags.n_folds, "cross-fitting folds");
  opt[key(s, "alpha")] = s->add_option("--alpha", flags.alpha, "level");
  opt[key(s, "estimators")] = s->add_option("--estimators", flags.estimators, "plugin and/or tmle")
                            ->delimiter(',');

  auto* sel = app.add_subcommand("select-t0", "stepdown choice of the surrogate horizon");
  common(sel);
  data_opts(sel);
  opt[key(sel, "margin")] = sel->add_option("--margin", flags.margin, "PTE margin in (0,1)");
  opt[key(sel, "t_L")] = sel->add_option("--t-L", flags.t_L, "largest candidate horizon");
  bool non_monotone = false;
  opt[key(sel, "non_monotone")] = sel->add_flag("--non-monotone", non_monotone,
                                      "max-statistic critical values (needs --bootstrap)");
  opt[key(sel, "bootstrap")] = sel->add_flag("--bootstrap", flags.bootstrap, "multiplier bootstrap");
  opt[key(sel, "bootstrap_reps")] = sel->add_option("--bootstrap-reps", flags.bootstrap_reps, "draws");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& ex) {
    return app.exit(ex, out, err);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex, out, err);
    return 2;
  }

  CLI::App* active = app.get_subcommands().front();
  try {
    RunConfig c;
    if (!config_path.empty()) c = load_config(config_path);
    c.command = active->get_name();
    auto set = [&](const char* key, auto& dst, const auto& src) {
      auto it = opt.find(active->get_name() + ":" + key);
      if (it != opt.end() && it->second->count() > 0) dst = src;
    };
    set("input", c.input, flags.input);
    set("output_dir", c.output_dir, flags.output_dir);
    set("t", c.t, flags.t);
    set("t0", c.t0, flags.t0);
    set("n_folds", c.n_folds, flags.n_folds);
    set("seed", c.seed, flags.seed);
    set("alpha", c.alpha, flags.alpha);
    set("interaction_order", c.interaction_order, flags.interaction_order);
    set("poly_degree", c.poly_degree, flags.poly_degree);
    set("p_min", c.p_min, flags.p_min);
    set("r_floor", c.r_floor, flags.r_floor);
    set("estimators", c.estimators, flags.estimators);
    set("setting", c.setting, flags.setting);
    set("reps", c.reps, flags.reps);
    set("n", c.n, flags.n);
    set("oracle_n", c.oracle_n, flags.oracle_n);
    set("margin", c.margin, flags.margin);
    set("t_L", c.t_L, flags.t_L);
    set("bootstrap", c.bootstrap, flags.bootstrap);
    set("bootstrap_reps", c.bootstrap_reps, flags.bootstrap_reps);
    if (sel->parsed() && opt[key(sel, "non_monotone")]->count() > 0) c.monotone = !non_monotone;
    check_config(c);

    if (c.command == "validate") return cmd_validate(c, out, err);
    if (c.command == "estimate") return cmd_estimate(c, threads, out, err);
    if (c.command == "simulate") return cmd_simulate(c, threads, out, err);
    return cmd_select_t0(c, threads, out, err);
  } catch (const ConfigError& ex) {
    err << "error: " << ex.what() << '\n';
    return 2;
  } catch (const CsvError& ex) {
    err << "error: " << ex.what() << '\n';
    return 2;
  } catch (const UsageError& ex) {
    err << "error: " << ex.what() << '\n';
    return 2;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return 1;
  }
}

}  // namespace survsurrogate
