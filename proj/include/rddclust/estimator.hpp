#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace rddclust {

// Two-sided linear outcome model with shared noise: below-threshold units
// follow beta0 + slope_b * xc, above-threshold units add the discontinuity
// lambda (the treatment-intent jump) and use slope_a. The noise sd is
// uniform on (0, sigma_upper).
struct OutcomePriors {
  double beta0_mean = 3.7;
  double beta0_var = 0.25;
  double lambda_mean = -2.0;
  double lambda_var = 1.0;
  double slope_mean = 0.0;
  double slope_var = 2.0;
  double sigma_upper = 5.0;

  void validate() const;
};

enum class DenominatorModel { unconstrained, flexible };

struct DenominatorPriors {
  // Unconstrained: conjugate Beta(beta_a, beta_b) per side.
  double beta_a = 1.0;
  double beta_b = 1.0;
  // Flexible: Gaussian priors on the logit compliance per side.
  double logit_above_mean = 2.0;
  double logit_below_mean = -2.0;
  double logit_var = 1.0;

  void validate() const;
};

struct EstimationConfig {
  int n_draws = 10000;       // retained draws for every chain
  int outcome_burn_in = 2000;
  int flex_burn_in = 5000;   // flexible chain runs 2*n_draws kept at thin 2
  std::uint64_t seed = 0;
  // Permits empty/degenerate designs (prior-only runs in tests).
  bool allow_degenerate = false;

  void validate() const;
};

struct AteDraws {
  std::vector<double> delta_beta;  // draws of the outcome jump lambda
  std::vector<double> beta0_below;
  std::vector<double> slope_below;
  std::vector<double> slope_above;
  std::vector<double> sigma;
};

//! Blocked Gibbs: the four location parameters are drawn jointly from their
//! exact Gaussian conditional given sigma; sigma is slice-sampled within
//! (0, sigma_upper). Requires >= 2 units per side unless allow_degenerate.
AteDraws fit_ate(std::span<const double> xc, std::span<const double> y,
                 std::span<const std::uint8_t> z, const OutcomePriors& priors,
                 const EstimationConfig& cfg);

struct DenominatorCounts {
  std::size_t treated_above = 0;
  std::size_t n_above = 0;
  std::size_t treated_below = 0;
  std::size_t n_below = 0;
};

DenominatorCounts denominator_counts(std::span<const std::uint8_t> t,
                                     std::span<const std::uint8_t> z);

struct DenominatorDraws {
  std::vector<double> pi_above;
  std::vector<double> pi_below;
  std::vector<double> delta_pi;
};

//! Compliance-jump draws. The unconstrained model uses exact conjugate Beta
//! posteriors; the flexible model runs an adaptive random-walk Metropolis
//! chain on each side's logit (step tuned to 30-50% acceptance during
//! burn-in, frozen afterwards).
DenominatorDraws fit_denominator(const DenominatorCounts& counts,
                                 DenominatorModel model,
                                 const DenominatorPriors& priors,
                                 const EstimationConfig& cfg);

struct LateDraws {
  std::vector<double> draws;
  std::size_t excluded = 0;  // |delta_pi| below the stability floor
};

//! Draw-wise ratio delta_beta / delta_pi; draws with |delta_pi| < 1e-6 are
//! excluded and counted. Errors when every draw is excluded.
LateDraws compute_late(std::span<const double> delta_beta,
                       std::span<const double> delta_pi);

struct Summary {
  double median = 0.0;
  double mean = 0.0;
  double lower = 0.0;   // 2.5% quantile
  double upper = 0.0;   // 97.5% quantile
  std::size_t n = 0;
};

//! Median/mean and the equal-tailed 95% interval (type-7 quantiles).
Summary summarize(std::span<const double> draws, std::size_t min_draws = 100);

}  // namespace rddclust
