// Cohort invariants, centering, standardization, and CSV round-trips.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "rddclust/cohort.hpp"
#include "rddclust/csv.hpp"
#include "rddclust/error.hpp"
#include "rddclust/rng.hpp"
#include "support/helpers.hpp"

using rddclust::Cohort;
using rddclust::Error;
using rddclust::ErrorCode;

namespace {

Cohort small_valid_cohort() {
  Cohort c;
  c.x0 = 0.2;
  c.id = {"u1", "u2", "u3", "u4"};
  c.x = {0.10, 0.15, 0.25, 0.30};
  c.t = {0, 0, 1, 1};
  c.y = {3.5, 3.6, 1.4, 1.3};
  c.schema.cont_names = {"age", "sbp"};
  c.cont = {{52.0, 61.0, 58.0, 65.0}, {120.0, 131.0, 142.0, 150.0}};
  c.schema.cat_names = {"site"};
  c.schema.cat_levels = {3};
  c.cat = {{1, 2, 3, 1}};
  return c;
}

std::string temp_path(const std::string& stem) {
  return (std::filesystem::temp_directory_path() / stem).string();
}

}  // namespace

TEST_CASE("validate_cohort accepts a well-formed cohort") {
  CHECK_NOTHROW(rddclust::validate_cohort(small_valid_cohort()));
}

TEST_CASE("validate_cohort rejects structural violations") {
  SUBCASE("fewer than two units") {
    Cohort c;
    c.x0 = 0.2;
    c.id = {"u1"};
    c.x = {0.3};
    c.t = {1};
    c.y = {1.0};
    CHECK_THROWS_AS(rddclust::validate_cohort(c), Error);
  }
  SUBCASE("non-finite threshold") {
    auto c = small_valid_cohort();
    c.x0 = std::nan("");
    CHECK_THROWS_AS(rddclust::validate_cohort(c), Error);
  }
  SUBCASE("column length mismatch") {
    auto c = small_valid_cohort();
    c.y.pop_back();
    CHECK_THROWS_AS(rddclust::validate_cohort(c), Error);
  }
  SUBCASE("covariates out of sync with schema") {
    auto c = small_valid_cohort();
    c.schema.cont_names.push_back("hdl");
    CHECK_THROWS_AS(rddclust::validate_cohort(c), Error);
  }
  SUBCASE("non-finite forcing value names the unit") {
    auto c = small_valid_cohort();
    c.x[2] = std::numeric_limits<double>::infinity();
    try {
      rddclust::validate_cohort(c);
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::validation);
      CHECK(std::string(e.what()).find("u3") != std::string::npos);
    }
  }
  SUBCASE("non-finite outcome") {
    auto c = small_valid_cohort();
    c.y[1] = std::nan("");
    CHECK_THROWS_AS(rddclust::validate_cohort(c), Error);
  }
  SUBCASE("treatment value 2 is rejected") {
    auto c = small_valid_cohort();
    c.t[0] = 2;
    try {
      rddclust::validate_cohort(c);
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::validation);
      CHECK(std::string(e.what()).find("0/1") != std::string::npos);
    }
  }
  SUBCASE("duplicate unit id") {
    auto c = small_valid_cohort();
    c.id[3] = "u2";
    try {
      rddclust::validate_cohort(c);
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("duplicate") != std::string::npos);
      CHECK(std::string(e.what()).find("u2") != std::string::npos);
    }
  }
  SUBCASE("all units on one side of the threshold") {
    auto c = small_valid_cohort();
    c.x = {0.25, 0.26, 0.27, 0.28};
    CHECK_THROWS_AS(rddclust::validate_cohort(c), Error);
  }
  SUBCASE("non-finite continuous covariate") {
    auto c = small_valid_cohort();
    c.cont[1][0] = std::nan("");
    CHECK_THROWS_AS(rddclust::validate_cohort(c), Error);
  }
  SUBCASE("categorical level out of range") {
    auto c = small_valid_cohort();
    c.cat[0][2] = 4;  // schema says 3 levels
    CHECK_THROWS_AS(rddclust::validate_cohort(c), Error);
    c.cat[0][2] = 0;
    CHECK_THROWS_AS(rddclust::validate_cohort(c), Error);
  }
  SUBCASE("categorical covariate with fewer than 2 levels") {
    auto c = small_valid_cohort();
    c.schema.cat_levels[0] = 1;
    c.cat[0] = {1, 1, 1, 1};
    CHECK_THROWS_AS(rddclust::validate_cohort(c), Error);
  }
}

TEST_CASE("center_forcing computes xc = x - x0 and side indicator") {
  auto c = small_valid_cohort();
  const auto view = rddclust::center_forcing(c);
  REQUIRE(view.xc.size() == c.size());
  REQUIRE(view.z.size() == c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    CHECK(view.xc[i] == c.x[i] - c.x0);
    CHECK(view.z[i] == (c.x[i] >= c.x0 ? 1 : 0));
  }
}

TEST_CASE("center_forcing: unit exactly at the threshold counts as above") {
  auto c = small_valid_cohort();
  c.x[1] = c.x0;
  const auto view = rddclust::center_forcing(c);
  CHECK(view.xc[1] == 0.0);
  CHECK(view.z[1] == 1);
}

TEST_CASE("center_forcing is translation-consistent") {
  // Shifting x and x0 by the same amount leaves z unchanged and moves xc
  // only by floating-point representation effects of the subtraction.
  auto c = small_valid_cohort();
  auto shifted = c;
  const double delta = 5.0;
  for (auto& v : shifted.x) v += delta;
  shifted.x0 += delta;
  const auto a = rddclust::center_forcing(c);
  const auto b = rddclust::center_forcing(shifted);
  for (std::size_t i = 0; i < c.size(); ++i) {
    CHECK(a.z[i] == b.z[i]);
    CHECK(a.xc[i] == doctest::Approx(b.xc[i]).epsilon(1e-12));
  }
}

TEST_CASE("standardize_covariates yields mean 0 and sample sd 1") {
  rddclust::Rng rng(77);
  Cohort c;
  c.x0 = 0.5;
  const std::size_t n = 257;
  c.schema.cont_names = {"a", "b", "c"};
  c.cont.resize(3);
  for (std::size_t i = 0; i < n; ++i) {
    c.id.push_back("u" + std::to_string(i));
    c.x.push_back(rng.uniform());
    c.t.push_back(0);
    c.y.push_back(0.0);
    c.cont[0].push_back(rng.normal(10.0, 3.0));
    c.cont[1].push_back(rng.uniform(-4.0, 9.0));
    c.cont[2].push_back(rng.exponential());
  }
  const auto m = rddclust::standardize_covariates(c);
  REQUIRE(m.n == n);
  REQUIRE(m.dim == 3);
  for (std::size_t j = 0; j < 3; ++j) {
    std::vector<double> col(m.col(j), m.col(j) + n);
    CHECK(std::abs(testsupport::mean(col)) < 1e-12);
    CHECK(testsupport::sample_variance(col) == doctest::Approx(1.0).epsilon(1e-12));
    // definition check on a few entries
    for (std::size_t i : {std::size_t{0}, n / 2, n - 1}) {
      const double expect = (c.cont[j][i] - m.means[j]) / m.sds[j];
      CHECK(m.col(j)[i] == expect);
    }
  }
}

TEST_CASE("standardize_covariates is idempotent up to rounding") {
  rddclust::Rng rng(5150);
  Cohort c;
  c.x0 = 0.5;
  const std::size_t n = 64;
  c.schema.cont_names = {"v"};
  c.cont.resize(1);
  for (std::size_t i = 0; i < n; ++i) {
    c.id.push_back(std::to_string(i));
    c.x.push_back(rng.uniform());
    c.t.push_back(0);
    c.y.push_back(0.0);
    c.cont[0].push_back(rng.normal(-3.0, 0.25));
  }
  const auto once = rddclust::standardize_covariates(c);
  Cohort again = c;
  again.cont[0].assign(once.col(0), once.col(0) + n);
  const auto twice = rddclust::standardize_covariates(again);
  for (std::size_t i = 0; i < n; ++i)
    CHECK(twice.col(0)[i] == doctest::Approx(once.col(0)[i]).epsilon(1e-13));
}

TEST_CASE("standardize_covariates rejects a constant covariate") {
  auto c = small_valid_cohort();
  c.cont[0] = {7.0, 7.0, 7.0, 7.0};
  try {
    rddclust::standardize_covariates(c);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::validation);
    CHECK(std::string(e.what()).find("age") != std::string::npos);
    CHECK(std::string(e.what()).find("zero variance") != std::string::npos);
  }
}

TEST_CASE("fmt_double round-trips and handles non-finite values") {
  CHECK(rddclust::fmt_double(0.1) == "0.1");
  CHECK(rddclust::fmt_double(-2.0) == "-2");
  CHECK(rddclust::fmt_double(std::nan("")) == "NA");
  CHECK(rddclust::fmt_double(std::numeric_limits<double>::infinity()) == "NA");
  rddclust::Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    const double v = rng.normal() * std::pow(10.0, rng.uniform(-12.0, 12.0));
    const std::string s = rddclust::fmt_double(v);
    CHECK(std::stod(s) == v);
  }
}

TEST_CASE("cohort CSV round-trip preserves every field exactly") {
  rddclust::Rng rng(20260825);
  Cohort c;
  c.x0 = 0.2;
  const std::size_t n = 100;
  c.schema.cont_names = {"age", "hdl"};
  c.cont.resize(2);
  c.schema.cat_names = {"site"};
  c.schema.cat_levels = {4};
  c.cat.resize(1);
  for (std::size_t i = 0; i < n; ++i) {
    c.id.push_back("p" + std::to_string(i + 1));
    c.x.push_back(rng.uniform(0.01, 0.6));
    c.t.push_back(rng.bernoulli(0.5) ? 1 : 0);
    c.y.push_back(rng.normal(3.7, 1.2));
    c.cont[0].push_back(rng.uniform(50.0, 70.0));
    c.cont[1].push_back(rng.normal(1.3, 0.3));
    c.cat[0].push_back(static_cast<std::int32_t>(rng.below(4)) + 1);
  }
  // Guarantee both sides are populated.
  c.x[0] = 0.1;
  c.x[1] = 0.3;
  c.cat[0][0] = 4;  // make max level match the schema

  const std::string path = temp_path("rddclust_roundtrip.csv");
  rddclust::write_cohort_csv(c, path);
  const auto back = rddclust::load_cohort_csv(path, c.x0, {"site"});
  std::filesystem::remove(path);

  REQUIRE(back.size() == n);
  CHECK(back.schema.cont_names == c.schema.cont_names);
  CHECK(back.schema.cat_names == c.schema.cat_names);
  CHECK(back.schema.cat_levels == c.schema.cat_levels);
  for (std::size_t i = 0; i < n; ++i) {
    CHECK(back.id[i] == c.id[i]);
    CHECK(back.x[i] == c.x[i]);  // bitwise via shortest round-trip format
    CHECK(back.t[i] == c.t[i]);
    CHECK(back.y[i] == c.y[i]);
    CHECK(back.cont[0][i] == c.cont[0][i]);
    CHECK(back.cont[1][i] == c.cont[1][i]);
    CHECK(back.cat[0][i] == c.cat[0][i]);
  }
}

TEST_CASE("load_cohort_csv reports schema and parse errors precisely") {
  const std::string path = temp_path("rddclust_badcsv.csv");

  SUBCASE("missing required column t") {
    std::ofstream out(path);
    out << "id,x,y\nu1,0.1,2.0\nu2,0.3,1.0\n";
    out.close();
    try {
      rddclust::load_cohort_csv(path, 0.2);
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::io);
      CHECK(std::string(e.what()).find("'t'") != std::string::npos);
    }
  }
  SUBCASE("non-numeric outcome cites the data row") {
    std::ofstream out(path);
    out << "id,x,t,y\n";
    for (int i = 1; i <= 6; ++i)
      out << "u" << i << "," << (i <= 3 ? 0.1 : 0.3) << ",0,1.5\n";
    out << "u7,0.35,1,oops\n";
    out.close();
    try {
      rddclust::load_cohort_csv(path, 0.2);
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::io);
      CHECK(std::string(e.what()).find("y") != std::string::npos);
      CHECK(std::string(e.what()).find("row 7") != std::string::npos);
      CHECK(std::string(e.what()).find("oops") != std::string::npos);
    }
  }
  SUBCASE("field count mismatch cites the row") {
    std::ofstream out(path);
    out << "id,x,t,y\nu1,0.1,0,1.5\nu2,0.3,1\n";
    out.close();
    try {
      rddclust::load_cohort_csv(path, 0.2);
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("row 2") != std::string::npos);
    }
  }
  SUBCASE("treatment outside 0/1") {
    std::ofstream out(path);
    out << "id,x,t,y\nu1,0.1,0,1.5\nu2,0.3,2,1.0\n";
    out.close();
    CHECK_THROWS_AS(rddclust::load_cohort_csv(path, 0.2), Error);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(rddclust::load_cohort_csv(temp_path("no_such_file.csv"), 0.2),
                    Error);
  }
  std::filesystem::remove(path);
}

TEST_CASE("load_cohort_csv classifies extra columns by cat_names") {
  const std::string path = temp_path("rddclust_catcols.csv");
  std::ofstream out(path);
  out << "id,x,t,y,age,site\n"
      << "u1,0.1,0,3.2,55,1\n"
      << "u2,0.15,0,3.4,62,2\n"
      << "u3,0.3,1,1.2,58,3\n"
      << "u4,0.35,1,1.1,66,2\n";
  out.close();
  const auto c = rddclust::load_cohort_csv(path, 0.2, {"site"});
  std::filesystem::remove(path);
  REQUIRE(c.schema.cont_names == std::vector<std::string>{"age"});
  REQUIRE(c.schema.cat_names == std::vector<std::string>{"site"});
  CHECK(c.schema.cat_levels == std::vector<int>{3});
  CHECK(c.cont[0][2] == 58.0);
  CHECK(c.cat[0][1] == 2);
}
