#include <sstream>

#include "doctest.h"
#include "survsurrogate/csv_io.hpp"
#include "survsurrogate/simulation.hpp"

using namespace survsurrogate;

TEST_CASE("wide csv round trip is exact") {
  auto st = setting_preset(1);
  st.n = 60;
  const auto d = generate_setting(st, 11);
  std::ostringstream out;
  write_wide_csv(d, out);
  std::istringstream in(out.str());
  const auto back = read_wide_csv(in);
  REQUIRE(back.size() == d.size());
  CHECK(back.grid() == d.grid());
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(back[i].id == d[i].id);
    CHECK(back[i].x == d[i].x);
    CHECK(back[i].g == d[i].g);
    CHECK(back[i].a == d[i].a);
    CHECK(back[i].y == d[i].y);
    CHECK(back[i].s == d[i].s);
  }
  std::ostringstream again;
  write_wide_csv(back, again);
  CHECK(again.str() == out.str());
}

TEST_CASE("header determines p, t and t0") {
  std::istringstream in(
      "id,x1,x2,g,a1,a2,y1,y2,s1\n"
      "p,0.5,1,1,1,1,1,0,2.5\n"
      "q,-1,0,0,1,0,1,,3\r\n");
  const auto d = read_wide_csv(in);
  CHECK(d.grid() == TimeGrid(2, 1));
  CHECK(d.n_covariates() == 2);
  CHECK(d[1].a[1] == 0);
  CHECK(!d[1].y[1]);
  CHECK(*d[1].s[0] == 3.0);
  CHECK(validate(d).empty());
}

TEST_CASE("malformed input throws CsvError") {
  auto bad = [](const std::string& text) {
    std::istringstream in(text);
    CHECK_THROWS_AS(read_wide_csv(in), CsvError);
  };
  bad("");
  bad("id,x1,a1,y1,s1\n1,0,1,1,0\n");          // no g
  bad("id,x1,g,a1,a2,y1,s1\n1,0,1,1,1,1,0\n");  // y2 missing
  bad("id,x1,g,a1,y1,s1\n");                    // no rows
  bad("id,x1,g,a1,y1,s1\n1,0,1,1,1\n");         // short row
  bad("id,x1,g,a1,y1,s1\n1,abc,1,1,1,0\n");     // not a number
  bad("id,x1,g,a1,y1,s1\n1,0,2,1,1,0\n");       // g not binary
  bad("id,x1,g,a1,y1,s1,extra\n1,0,1,1,1,0,0\n");
  CHECK_THROWS_AS(read_wide_csv_file("/nonexistent/file.csv"), CsvError);
}

TEST_CASE("float formatting keeps 17 significant digits") {
  CHECK(format_double(0.1) == "0.10000000000000001");
  CHECK(format_double(2.0) == "2");
  CHECK(format_double(-1.5e-300) == "-1.5000000000000001e-300");
}
