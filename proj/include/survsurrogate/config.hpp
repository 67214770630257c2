// Run configuration shared by the CLI subcommands; round-trips through JSON.
#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "survsurrogate/learners.hpp"

namespace survsurrogate {

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::string command = "estimate";
  std::string input;
  std::string output_dir = ".";
  // Analysis grid; defaults to the data's own horizons.
  std::optional<int> t;
  std::optional<int> t0;
  int n_folds = 2;
  std::uint64_t seed = 1;
  double alpha = 0.05;
  double r_floor = 1e-6;
  int interaction_order = 1;
  int poly_degree = 1;
  double p_min = kDefaultPMin;
  std::vector<std::string> estimators{"plugin", "tmle"};
  // select-t0
  double margin = 0.1;
  std::optional<int> t_L;
  bool monotone = true;
  bool bootstrap = false;
  int bootstrap_reps = 1000;
  // simulate
  int setting = 1;
  int reps = 500;
  int n = 1000;
  long oracle_n = 200000;

  bool wants(const std::string& estimator) const;
  LearnerOptions learner_options() const;
};

/// Canonical form: keys sorted, two-space indent, trailing newline.
std::string to_json(const RunConfig& config);
/// Throws ConfigError on unknown keys, wrong types or out-of-range values.
RunConfig config_from_json(const std::string& text);
RunConfig load_config(const std::string& path);

/// Range checks; throws ConfigError.
void check_config(const RunConfig& config);

}  // namespace survsurrogate
