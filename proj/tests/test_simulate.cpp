// Synthetic cohort generator: determinism, validity, and design moments.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "rddclust/cohort.hpp"
#include "rddclust/error.hpp"
#include "rddclust/simulate.hpp"
#include "support/helpers.hpp"

using rddclust::Cohort;
using rddclust::Error;
using rddclust::SimConfig;
using rddclust::StudyConfig;

namespace {

bool cohorts_identical(const Cohort& a, const Cohort& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.id[i] != b.id[i] || a.x[i] != b.x[i] || a.t[i] != b.t[i] ||
        a.y[i] != b.y[i])
      return false;
    for (std::size_t j = 0; j < a.cont.size(); ++j)
      if (a.cont[j][i] != b.cont[j][i]) return false;
  }
  return true;
}

// OLS fit of y on columns of X; returns (coef, se) for column `which`.
std::pair<double, double> ols_coef(const Eigen::MatrixXd& X,
                                   const Eigen::VectorXd& y, int which) {
  const Eigen::MatrixXd xtx = X.transpose() * X;
  const Eigen::VectorXd beta = xtx.ldlt().solve(X.transpose() * y);
  const Eigen::VectorXd resid = y - X * beta;
  const double s2 = resid.squaredNorm() /
                    static_cast<double>(X.rows() - X.cols());
  const Eigen::MatrixXd cov = s2 * xtx.inverse();
  return {beta(which), std::sqrt(cov(which, which))};
}

}  // namespace

TEST_CASE("simulate_cohort is deterministic in the seed") {
  SimConfig cfg;
  cfg.n = 500;
  cfg.seed = 42;
  const auto a = rddclust::simulate_cohort(cfg);
  const auto b = rddclust::simulate_cohort(cfg);
  CHECK(cohorts_identical(a, b));
  cfg.seed = 43;
  const auto c = rddclust::simulate_cohort(cfg);
  CHECK_FALSE(cohorts_identical(a, c));
}

TEST_CASE("simulate_study derives replicate seeds as seed XOR r") {
  StudyConfig study;
  study.sim.n = 120;
  study.sim.seed = 9001;
  study.n_reps = 4;
  const auto reps = rddclust::simulate_study(study);
  REQUIRE(reps.size() == 4);
  for (std::size_t r = 0; r < 4; ++r) {
    SimConfig one = study.sim;
    one.seed = study.sim.seed ^ r;
    CHECK(cohorts_identical(reps[r], rddclust::simulate_cohort(one)));
  }
  // replicates differ from each other
  CHECK_FALSE(cohorts_identical(reps[0], reps[1]));
}

TEST_CASE("simulated cohorts satisfy all cohort invariants") {
  SimConfig cfg;
  cfg.n = 2000;
  cfg.seed = 7;
  const auto c = rddclust::simulate_cohort(cfg);
  CHECK_NOTHROW(rddclust::validate_cohort(c));
  REQUIRE(c.size() == 2000);
  CHECK(c.schema.cont_names ==
        std::vector<std::string>{"age", "sbp", "hdl"});
  CHECK(c.schema.cat_names.empty());

  std::size_t above = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    CHECK(c.x[i] > 0.01);
    CHECK(c.x[i] < 0.60);
    CHECK(c.cont[0][i] >= 50.0);
    CHECK(c.cont[0][i] <= 70.0);
    CHECK(c.cont[2][i] > 0.5);  // hdl floor
    if (c.x[i] >= c.x0) ++above;
  }
  // The score median sits at the threshold, so the split is near 50/50.
  const double frac = double(above) / double(c.size());
  CHECK(frac > 0.40);
  CHECK(frac < 0.60);
}

TEST_CASE("compliance rates match the configured asymptotes") {
  SimConfig cfg;
  cfg.n = 100000;
  cfg.seed = 123;
  cfg.compliance_above = 0.85;
  cfg.compliance_below = 0.10;
  const auto c = rddclust::simulate_cohort(cfg);
  double t_above = 0, n_above = 0, t_below = 0, n_below = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    // Skip the narrow transition band around the threshold.
    if (std::abs(c.x[i] - c.x0) < 0.005) continue;
    if (c.x[i] >= c.x0) {
      t_above += c.t[i];
      n_above += 1;
    } else {
      t_below += c.t[i];
      n_below += 1;
    }
  }
  REQUIRE(n_above > 1000);
  REQUIRE(n_below > 1000);
  CHECK(t_above / n_above == doctest::Approx(0.85).epsilon(0.015));
  CHECK(t_below / n_below == doctest::Approx(0.10).scale(1.0).epsilon(0.15));
}

TEST_CASE("zero effect yields a treatment coefficient near zero") {
  SimConfig cfg;
  cfg.n = 20000;
  cfg.effect = 0.0;
  cfg.confounding_scale = 0.0;
  cfg.seed = 99;
  const auto c = rddclust::simulate_cohort(cfg);
  const auto n = static_cast<Eigen::Index>(c.size());
  Eigen::MatrixXd X(n, 3);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = c.x[i] - c.x0;
    X(i, 2) = c.t[i];
    y(i) = c.y[i];
  }
  const auto [coef, se] = ols_coef(X, y, 2);
  CHECK(std::abs(coef) < 3.0 * se);
}

TEST_CASE("configured effect is recovered by correctly specified OLS") {
  SimConfig cfg;
  cfg.n = 20000;
  cfg.effect = -2.0;
  cfg.confounding_scale = 0.0;
  cfg.seed = 1234;
  const auto c = rddclust::simulate_cohort(cfg);
  const auto n = static_cast<Eigen::Index>(c.size());
  Eigen::MatrixXd X(n, 3);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = c.x[i] - c.x0;
    X(i, 2) = c.t[i];
    y(i) = c.y[i];
  }
  const auto [coef, se] = ols_coef(X, y, 2);
  CHECK(coef == doctest::Approx(-2.0).epsilon(0.05));
  CHECK(std::abs(coef + 2.0) < 3.5 * se);
}

TEST_CASE("exact-sharp compliance makes treatment equal assignment") {
  SimConfig cfg;
  cfg.n = 3000;
  cfg.compliance_below = 0.0;
  cfg.compliance_above = 1.0;
  cfg.seed = 5;
  const auto c = rddclust::simulate_cohort(cfg);
  const auto view = rddclust::center_forcing(c);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(c.t[i] == view.z[i]);
}

TEST_CASE("validate_sim_config rejects out-of-domain settings") {
  SimConfig ok;
  CHECK_NOTHROW(rddclust::validate_sim_config(ok));

  SimConfig bad = ok;
  bad.n = 49;
  CHECK_THROWS_AS(rddclust::validate_sim_config(bad), Error);

  bad = ok;
  bad.x0 = 0.0;
  CHECK_THROWS_AS(rddclust::validate_sim_config(bad), Error);
  bad.x0 = 1.0;
  CHECK_THROWS_AS(rddclust::validate_sim_config(bad), Error);

  bad = ok;
  bad.compliance_below = 0.9;
  bad.compliance_above = 0.3;
  CHECK_THROWS_AS(rddclust::validate_sim_config(bad), Error);

  bad = ok;
  bad.compliance_above = 1.2;
  CHECK_THROWS_AS(rddclust::validate_sim_config(bad), Error);

  bad = ok;
  bad.effect = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(rddclust::validate_sim_config(bad), Error);

  bad = ok;
  bad.confounding_scale = -0.1;
  CHECK_THROWS_AS(rddclust::validate_sim_config(bad), Error);

  StudyConfig study;
  study.n_reps = 0;
  CHECK_THROWS_AS(rddclust::simulate_study(study), Error);
}

TEST_CASE("confounding shifts the naive contrast but not the design") {
  // With high confounding the covariates leak into y; the generator must
  // still produce valid cohorts and identical covariate streams given the
  // same seed (confounding only alters y).
  SimConfig lo;
  lo.n = 400;
  lo.seed = 31;
  lo.confounding_scale = 0.0;
  SimConfig hi = lo;
  hi.confounding_scale = 5.0;
  const auto a = rddclust::simulate_cohort(lo);
  const auto b = rddclust::simulate_cohort(hi);
  CHECK_NOTHROW(rddclust::validate_cohort(b));
  bool y_differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.x[i] == b.x[i]);
    CHECK(a.t[i] == b.t[i]);
    CHECK(a.cont[0][i] == b.cont[0][i]);
    CHECK(a.cont[1][i] == b.cont[1][i]);
    CHECK(a.cont[2][i] == b.cont[2][i]);
    if (a.y[i] != b.y[i]) y_differs = true;
  }
  CHECK(y_differs);
}
