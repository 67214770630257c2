#include "survsurrogate/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace survsurrogate {

using nlohmann::json;

bool RunConfig::wants(const std::string& estimator) const {
  return std::find(estimators.begin(), estimators.end(), estimator) != estimators.end();
}

LearnerOptions RunConfig::learner_options() const {
  LearnerOptions o;
  o.interaction_order = interaction_order;
  o.poly_degree = poly_degree;
  o.p_min = p_min;
  return o;
}

namespace {

template <class T>
json opt(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

json to_object(const RunConfig& c) {
  return json{{"command", c.command},
              {"input", c.input},
              {"output_dir", c.output_dir},
              {"t", opt(c.t)},
              {"t0", opt(c.t0)},
              {"n_folds", c.n_folds},
              {"seed", c.seed},
              {"alpha", c.alpha},
              {"r_floor", c.r_floor},
              {"interaction_order", c.interaction_order},
              {"poly_degree", c.poly_degree},
              {"p_min", c.p_min},
              {"estimators", c.estimators},
              {"margin", c.margin},
              {"t_L", opt(c.t_L)},
              {"monotone", c.monotone},
              {"bootstrap", c.bootstrap},
              {"bootstrap_reps", c.bootstrap_reps},
              {"setting", c.setting},
              {"reps", c.reps},
              {"n", c.n},
              {"oracle_n", c.oracle_n}};
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

template <class T>
void read(const json& j, const char* key, std::optional<T>& out) {
  if (!j.contains(key)) return;
  if (j.at(key).is_null()) {
    out.reset();
    return;
  }
  T v{};
  read(j, key, v);
  out = v;
}

}  // namespace

std::string to_json(const RunConfig& config) { return to_object(config).dump(2) + "\n"; }

RunConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  const json known = to_object(RunConfig{});
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  RunConfig c;
  read(j, "command", c.command);
  read(j, "input", c.input);
  read(j, "output_dir", c.output_dir);
  read(j, "t", c.t);
  read(j, "t0", c.t0);
  read(j, "n_folds", c.n_folds);
  read(j, "seed", c.seed);
  read(j, "alpha", c.alpha);
  read(j, "r_floor", c.r_floor);
  read(j, "interaction_order", c.interaction_order);
  read(j, "poly_degree", c.poly_degree);
  read(j, "p_min", c.p_min);
  read(j, "estimators", c.estimators);
  read(j, "margin", c.margin);
  read(j, "t_L", c.t_L);
  read(j, "monotone", c.monotone);
  read(j, "bootstrap", c.bootstrap);
  read(j, "bootstrap_reps", c.bootstrap_reps);
  read(j, "setting", c.setting);
  read(j, "reps", c.reps);
  read(j, "n", c.n);
  read(j, "oracle_n", c.oracle_n);
  check_config(c);
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

void check_config(const RunConfig& c) {
  static const std::set<std::string> commands{"validate", "estimate", "simulate", "select-t0"};
  if (!commands.count(c.command)) throw ConfigError("unknown command '" + c.command + "'");
  if (c.n_folds < 2) throw ConfigError("n_folds must be >= 2");
  if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw ConfigError("alpha must lie in (0,1)");
  if (!(c.r_floor >= 0.0)) throw ConfigError("r_floor must be >= 0");
  if (c.interaction_order < 0) throw ConfigError("interaction_order must be >= 0");
  if (c.poly_degree < 1) throw ConfigError("poly_degree must be >= 1");
  if (!(c.p_min > 0.0 && c.p_min < 0.5)) throw ConfigError("p_min must lie in (0, 0.5)");
  if (c.estimators.empty()) throw ConfigError("estimators must not be empty");
  for (const auto& e : c.estimators) {
    if (e != "plugin" && e != "tmle") throw ConfigError("unknown estimator '" + e + "'");
  }
  if (!(c.margin > 0.0 && c.margin < 1.0)) throw ConfigError("margin must lie in (0,1)");
  if (c.t && *c.t < 1) throw ConfigError("t must be >= 1");
  if (c.t0 && *c.t0 < 1) throw ConfigError("t0 must be >= 1");
  if (c.t && c.t0 && *c.t0 > *c.t) throw ConfigError("t0 must not exceed t");
  if (c.t_L && *c.t_L < 2) throw ConfigError("t_L must be >= 2");
  if (c.bootstrap_reps < 1) throw ConfigError("bootstrap_reps must be >= 1");
  if (c.setting < 1 || c.setting > 3) {
    throw ConfigError("setting must be 1, 2 or 3 (got " + std::to_string(c.setting) + ")");
  }
  if (c.reps < 0) throw ConfigError("reps must be >= 0");
  if (c.n < 10) throw ConfigError("n must be >= 10");
  if (c.oracle_n < 40) throw ConfigError("oracle_n must be >= 40");
}

}  // namespace survsurrogate
