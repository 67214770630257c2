#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "schema_check.hpp"
#include "survsurrogate/cli.hpp"
#include "survsurrogate/csv_io.hpp"
#include "survsurrogate/simulation.hpp"

using namespace survsurrogate;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "survsurrogate");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("survsurrogate_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string setting_csv(const fs::path& dir, int setting, int n, std::uint64_t seed) {
  auto st = setting_preset(setting);
  st.n = n;
  const auto path = (dir / ("setting" + std::to_string(setting) + ".csv")).string();
  write_wide_csv_file(generate_setting(st, seed), path);
  return path;
}

// Arms that differ only in the label: no covariate signal, no events.
std::string identical_arms_csv(const fs::path& dir) {
  std::vector<SubjectRecord> v;
  for (int i = 0; i < 40; ++i) {
    SubjectRecord r;
    r.id = "s" + std::to_string(i);
    r.x = {1.0};
    r.g = i % 2;
    r.a = {1, 1, 1};
    r.y = {1, 1, 1};
    r.s = {0.5, 0.5};
    v.push_back(std::move(r));
  }
  const auto path = (dir / "identical.csv").string();
  write_wide_csv_file(LongitudinalDataset(TimeGrid(3, 2), std::move(v), {"x1"}), path);
  return path;
}

}  // namespace

TEST_CASE("validate exit codes") {
  const auto dir = fresh_dir("validate");
  const auto good = setting_csv(dir, 1, 200, 3);
  const auto ok = cli({"validate", good});
  CHECK(ok.code == 0);
  CHECK(ok.out.find("valid: 200 subjects, t=6, t0=5, p=1") != std::string::npos);

  auto data = read_wide_csv_file(good);
  auto subjects = data.subjects();
  std::size_t victim = 0;
  while (!subjects[victim].uncensored(3)) ++victim;
  subjects[victim].a[1] = 0;  // censored at 2 but observed again at 3
  subjects[victim].y[1] = std::nullopt;
  if (subjects[victim].s[1]) subjects[victim].s[1] = std::nullopt;
  const auto bad = (dir / "bad.csv").string();
  write_wide_csv_file(LongitudinalDataset(data.grid(), subjects, data.covariate_names()), bad);
  const auto found = cli({"validate", bad});
  CHECK(found.code == 1);
  std::istringstream lines(found.err);
  std::string first;
  std::getline(lines, first);
  const auto j = json::parse(first);
  CHECK(j["id"] == subjects[victim].id);
  CHECK(j.contains("field"));
  CHECK(j["message"].get<std::string>().find("non-monotone") != std::string::npos);

  CHECK(cli({"validate", (dir / "missing.csv").string()}).code == 2);
  CHECK(cli({"validate"}).code == 2);
  CHECK(cli({}).code == 2);
  CHECK(cli({"bogus"}).code == 2);
  CHECK(cli({"--help"}).code == 0);
  fs::remove_all(dir);
}

TEST_CASE("estimate output is deterministic and matches the schema") {
  const auto dir = fresh_dir("estimate");
  const auto input = setting_csv(dir, 1, 400, 7);
  const auto out = (dir / "out").string();
  const auto a = cli({"estimate", input, "--seed", "7", "--out", out});
  REQUIRE(a.code == 0);
  const auto first = slurp(fs::path(out) / "results.json");
  const auto b = cli({"estimate", input, "--seed", "7", "--out", out, "--threads", "2"});
  REQUIRE(b.code == 0);
  CHECK(slurp(fs::path(out) / "results.json") == first);

  const auto j = json::parse(first);
  CHECK(j["estimators"].contains("plugin"));
  CHECK(j["estimators"].contains("tmle"));
  CHECK(j["n"] == 400);
  CHECK(j["grid"]["t"] == 6);
  CHECK(j["provenance"]["fold_sizes"].size() == 2);
  CHECK(j["estimators"]["plugin"]["r"].is_number());
  CHECK(j["estimators"]["tmle"]["tilts_delta"].is_array());

  const auto sch = schema::load(std::string(SURVSURROGATE_SCHEMA_DIR) + "/results.schema.json");
  const auto errors = schema::check(sch, j);
  for (const auto& e : errors) MESSAGE(e);
  CHECK(errors.empty());

  const auto c = cli({"estimate", input, "--seed", "8", "--out", out});
  REQUIRE(c.code == 0);
  CHECK(slurp(fs::path(out) / "results.json") != first);
  fs::remove_all(dir);
}

TEST_CASE("estimate options") {
  const auto dir = fresh_dir("options");
  const auto input = setting_csv(dir, 2, 300, 1);
  const auto out = (dir / "out").string();
  REQUIRE(cli({"estimate", input, "--out", out, "--estimators", "plugin", "--t", "4", "--t0",
               "2", "--folds", "3"})
              .code == 0);
  const auto j = json::parse(slurp(fs::path(out) / "results.json"));
  CHECK(j["estimators"].contains("plugin"));
  CHECK_FALSE(j["estimators"].contains("tmle"));
  CHECK(j["grid"]["t"] == 4);
  CHECK(j["grid"]["t0"] == 2);
  CHECK(j["provenance"]["fold_sizes"].size() == 3);
  CHECK(cli({"estimate", input, "--out", out, "--t", "9"}).code == 2);
  CHECK(cli({"estimate", input, "--out", out, "--estimators", "ols"}).code == 2);
  CHECK(cli({"estimate", input, "--out", out, "--folds", "1"}).code == 2);
  fs::remove_all(dir);
}

TEST_CASE("identical arms give a zero effect and no R") {
  const auto dir = fresh_dir("identical");
  const auto input = identical_arms_csv(dir);
  const auto out = (dir / "out").string();
  const auto r = cli({"estimate", input, "--out", out});
  REQUIRE(r.code == 0);
  const auto j = json::parse(slurp(fs::path(out) / "results.json"));
  for (const char* est : {"plugin", "tmle"}) {
    const auto& e = j["estimators"][est];
    CHECK(std::abs(e["delta"].get<double>()) < 1e-12);
    CHECK(e["r"].is_null());
    CHECK(e["se_r"].is_null());
    CHECK(e["r_reason"] == "treatment effect indistinguishable from zero");
  }
  const auto sch = schema::load(std::string(SURVSURROGATE_SCHEMA_DIR) + "/results.schema.json");
  CHECK(schema::check(sch, j).empty());
  fs::remove_all(dir);
}

TEST_CASE("config file with flag overrides") {
  const auto dir = fresh_dir("config");
  const auto input = setting_csv(dir, 1, 300, 2);
  const auto cfg = dir / "run.json";
  {
    std::ofstream f(cfg);
    f << R"({"command": "estimate", "seed": 5, "n_folds": 3, "estimators": ["plugin"]})";
  }
  const auto out = (dir / "out").string();
  REQUIRE(cli({"estimate", input, "--config", cfg.string(), "--out", out, "--folds", "2"}).code ==
          0);
  const auto j = json::parse(slurp(fs::path(out) / "results.json"));
  CHECK(j["config"]["seed"] == 5);
  CHECK(j["config"]["n_folds"] == 2);
  CHECK_FALSE(j["estimators"].contains("tmle"));

  const auto bad = dir / "bad.json";
  {
    std::ofstream f(bad);
    f << R"({"seed": 5, "foldz": 3})";
  }
  const auto r = cli({"estimate", input, "--config", bad.string(), "--out", out});
  CHECK(r.code == 2);
  CHECK(r.err.find("foldz") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("simulate is reproducible") {
  const auto dir = fresh_dir("simulate");
  ::setenv("SURROGATE_EVAL_CACHE", (dir / "cache").c_str(), 1);
  const std::vector<std::string> args{"simulate", "--setting", "1", "--reps", "10", "--seed",
                                      "1", "--n", "300", "--oracle-n", "5000"};
  auto a_args = args;
  a_args.insert(a_args.end(), {"--out", (dir / "a").string()});
  auto b_args = args;
  b_args.insert(b_args.end(), {"--out", (dir / "b").string(), "--threads", "2"});
  const auto a = cli(a_args);
  const auto b = cli(b_args);
  ::unsetenv("SURROGATE_EVAL_CACHE");
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  CHECK(a.out == b.out);
  CHECK(slurp(dir / "a" / "table.csv") == slurp(dir / "b" / "table.csv"));
  CHECK(slurp(dir / "a" / "replications.csv") == slurp(dir / "b" / "replications.csv"));
  const auto m = json::parse(slurp(dir / "a" / "manifest.json"));
  CHECK(m["n_reps"] == 10);
  CHECK(m["replication_seeds"].size() == 10);
  CHECK(m["truth"]["oracle_n"] == 5000);
  CHECK(cli({"simulate", "--setting", "9", "--out", (dir / "c").string()}).code == 2);
  CHECK(cli({"simulate", "--reps", "-1", "--out", (dir / "c").string()}).code == 2);
  fs::remove_all(dir);
}

TEST_CASE("select-t0") {
  const auto dir = fresh_dir("select");
  const auto input = setting_csv(dir, 1, 500, 4);
  const auto out = (dir / "out").string();

  const auto one = cli({"select-t0", input, "--t-L", "2", "--out", out});
  REQUIRE(one.code == 0);
  const auto j1 = json::parse(slurp(fs::path(out) / "selection.json"));
  CHECK(j1["tests"].size() == 1);
  CHECK(j1["t_L"] == 2);
  CHECK(j1["deltaS_by_j"].size() == 2);

  // a wide margin accepts every candidate
  const auto wide = cli({"select-t0", input, "--margin", "0.9", "--out", out});
  REQUIRE(wide.code == 0);
  CHECK(wide.out == "recommended_t0 1\n");
  const auto j2 = json::parse(slurp(fs::path(out) / "selection.json"));
  CHECK(j2["recommended_t0"] == 1);
  CHECK(j2["t_L"] == 5);
  CHECK(j2["tests"].size() == 4);

  CHECK(cli({"select-t0", input, "--non-monotone", "--out", out}).code == 2);
  CHECK(cli({"select-t0", input, "--margin", "1.5", "--out", out}).code == 2);
  CHECK(cli({"select-t0", input, "--t-L", "1", "--out", out}).code == 2);
  const auto boot = cli({"select-t0", input, "--non-monotone", "--bootstrap", "--bootstrap-reps",
                         "200", "--t-L", "3", "--out", out});
  CHECK(boot.code == 0);
  fs::remove_all(dir);
}

TEST_CASE("installed binary exit status") {
  const std::string bin = SURVSURROGATE_CLI_PATH;
  auto status = [](const std::string& cmd) {
    const int s = std::system((cmd + " >/dev/null 2>&1").c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
  };
  CHECK(status(bin + " --version") == 0);
  CHECK(status(bin + " validate /nonexistent/file.csv") == 2);
  CHECK(status(bin + " simulate --setting 9") == 2);
}
