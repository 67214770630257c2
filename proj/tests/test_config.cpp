#include "doctest.h"
#include "survsurrogate/config.hpp"

using namespace survsurrogate;

TEST_CASE("config round trips through canonical JSON") {
  RunConfig c;
  c.command = "select-t0";
  c.input = "data.csv";
  c.t = 6;
  c.t_L = 4;
  c.margin = 0.2;
  c.estimators = {"plugin"};
  c.seed = 18446744073709551615ull;
  const auto text = to_json(c);
  const auto back = config_from_json(text);
  CHECK(to_json(back) == text);
  CHECK(back.seed == c.seed);
  CHECK(*back.t_L == 4);
  CHECK(!back.t0);
}

TEST_CASE("unknown keys and bad values are rejected") {
  CHECK_THROWS_AS(config_from_json(R"({"seeed": 3})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"margin": 1.5})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"margin": 0})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"n_folds": "two"})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"estimators": ["plugin", "bart"]})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"setting": 9})"), ConfigError);
  CHECK_THROWS_AS(config_from_json("[1,2]"), ConfigError);
  CHECK_THROWS_AS(config_from_json("{"), ConfigError);
  const auto c = config_from_json(R"({"alpha": 0.1, "t0": null})");
  CHECK(c.alpha == 0.1);
  CHECK(!c.t0);
}
