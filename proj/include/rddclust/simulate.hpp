#pragma once

#include <cstdint>
#include <vector>

#include "rddclust/cohort.hpp"

namespace rddclust {

// Synthetic fuzzy-discontinuity cohort generator. Covariates are a clinical
// triple (age, sbp, hdl); the risk score x is a logistic function of their
// standardized values plus noise, rescaled into (0.01, 0.6) with its median
// at the threshold. Treatment probability rises steeply (logistic in x - x0)
// from compliance_below to compliance_above, and the outcome is linear in
// x - x0 with an additive treatment effect and a small covariate confounder.
struct SimConfig {
  std::size_t n = 2000;
  double effect = -2.0;
  double x0 = 0.20;
  double compliance_above = 0.85;
  double compliance_below = 0.10;
  // Multiplier on the 0.1-per-covariate confounding coefficients
  // (0 = none, 1 = low, 5 = high).
  double confounding_scale = 1.0;
  std::uint64_t seed = 0;
};

struct StudyConfig {
  SimConfig sim;
  std::size_t n_reps = 20;
};

//! Validates config invariants; throws Error(config) on violation.
void validate_sim_config(const SimConfig& cfg);

Cohort simulate_cohort(const SimConfig& cfg);

//! Replicate r (0-based) uses the derived seed sim.seed XOR r.
std::vector<Cohort> simulate_study(const StudyConfig& cfg);

}  // namespace rddclust
