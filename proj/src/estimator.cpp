#include "rddclust/estimator.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>

#include "rddclust/error.hpp"
#include "rddclust/rng.hpp"

namespace rddclust {
namespace {

constexpr double kDeltaPiFloor = 1e-6;

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Log density (up to a constant) of the noise sd given the location draw:
// flat on (0, upper), likelihood contributes -n*log(sigma) - rss/(2 sigma^2).
double sigma_logpdf(double sigma, double n, double rss) {
  return -n * std::log(sigma) - rss / (2.0 * sigma * sigma);
}

// Shrinkage slice sampler on the bounded support (0, upper). The current
// point always satisfies the slice inclusion, so the interval collapses
// toward it and the loop terminates.
double slice_sigma(double current, double n, double rss, double upper,
                   Rng& rng) {
  const double log_y = sigma_logpdf(current, n, rss) - rng.exponential();
  double lo = 0.0;
  double hi = upper;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const double candidate = rng.uniform(lo, hi);
    if (sigma_logpdf(candidate, n, rss) >= log_y) return candidate;
    if (candidate < current) {
      lo = candidate;
    } else {
      hi = candidate;
    }
  }
  return current;  // numerically stuck; keep the previous value
}

}  // namespace

void OutcomePriors::validate() const {
  if (!(beta0_var > 0.0) || !(lambda_var > 0.0) || !(slope_var > 0.0)) {
    fail(ErrorCode::config, "outcome prior variances must be positive");
  }
  if (!(sigma_upper > 0.0)) {
    fail(ErrorCode::config, "sigma_upper must be positive");
  }
  if (!std::isfinite(beta0_mean) || !std::isfinite(lambda_mean) ||
      !std::isfinite(slope_mean)) {
    fail(ErrorCode::config, "outcome prior means must be finite");
  }
}

void DenominatorPriors::validate() const {
  if (!(beta_a > 0.0) || !(beta_b > 0.0)) {
    fail(ErrorCode::config, "Beta prior parameters must be positive");
  }
  if (!(logit_var > 0.0)) {
    fail(ErrorCode::config, "logit prior variance must be positive");
  }
  if (!std::isfinite(logit_above_mean) || !std::isfinite(logit_below_mean)) {
    fail(ErrorCode::config, "logit prior means must be finite");
  }
}

void EstimationConfig::validate() const {
  if (n_draws < 1) fail(ErrorCode::config, "n_draws must be >= 1");
  if (outcome_burn_in < 0 || flex_burn_in < 0) {
    fail(ErrorCode::config, "burn-in lengths must be non-negative");
  }
}

AteDraws fit_ate(std::span<const double> xc, std::span<const double> y,
                 std::span<const std::uint8_t> z, const OutcomePriors& priors,
                 const EstimationConfig& cfg) {
  priors.validate();
  cfg.validate();
  const std::size_t n = xc.size();
  if (y.size() != n || z.size() != n) {
    fail(ErrorCode::validation, "fit_ate inputs must have matching lengths");
  }
  std::size_t n_above = 0;
  for (std::size_t i = 0; i < n; ++i) n_above += z[i] ? 1u : 0u;
  const std::size_t n_below = n - n_above;
  if (!cfg.allow_degenerate && (n_above < 2 || n_below < 2)) {
    fail(ErrorCode::estimation,
         "outcome model needs at least 2 units on each side of the "
         "threshold (got " +
             std::to_string(n_below) + " below, " + std::to_string(n_above) +
             " above)");
  }

  // Design columns: intercept, side indicator, below-side slope, above-side
  // slope. Sufficient statistics are precomputed once.
  Eigen::Matrix4d xtx = Eigen::Matrix4d::Zero();
  Eigen::Vector4d xty = Eigen::Vector4d::Zero();
  double yty = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double zi = z[i] ? 1.0 : 0.0;
    Eigen::Vector4d row;
    row << 1.0, zi, (1.0 - zi) * xc[i], zi * xc[i];
    xtx.noalias() += row * row.transpose();
    xty.noalias() += row * y[i];
    yty += y[i] * y[i];
  }

  Eigen::Vector4d prior_mean;
  prior_mean << priors.beta0_mean, priors.lambda_mean, priors.slope_mean,
      priors.slope_mean;
  Eigen::Vector4d prior_prec;
  prior_prec << 1.0 / priors.beta0_var, 1.0 / priors.lambda_var,
      1.0 / priors.slope_var, 1.0 / priors.slope_var;

  Rng rng(cfg.seed);
  AteDraws out;
  out.delta_beta.reserve(static_cast<std::size_t>(cfg.n_draws));
  out.beta0_below.reserve(static_cast<std::size_t>(cfg.n_draws));
  out.slope_below.reserve(static_cast<std::size_t>(cfg.n_draws));
  out.slope_above.reserve(static_cast<std::size_t>(cfg.n_draws));
  out.sigma.reserve(static_cast<std::size_t>(cfg.n_draws));

  double sigma = priors.sigma_upper / 2.0;
  const int total = cfg.outcome_burn_in + cfg.n_draws;
  for (int it = 0; it < total; ++it) {
    // Location block: exact Gaussian conditional given sigma.
    const double inv_var = 1.0 / (sigma * sigma);
    Eigen::Matrix4d prec = xtx * inv_var;
    prec.diagonal() += prior_prec;
    Eigen::Vector4d shift =
        xty * inv_var + prior_prec.cwiseProduct(prior_mean);
    Eigen::LLT<Eigen::Matrix4d> llt(prec);
    if (llt.info() != Eigen::Success) {
      fail(ErrorCode::estimation,
           "outcome posterior precision is not positive definite");
    }
    const Eigen::Vector4d mean = llt.solve(shift);
    Eigen::Vector4d noise;
    for (int j = 0; j < 4; ++j) noise[j] = rng.normal();
    const Eigen::Vector4d theta =
        mean + llt.matrixU().solve(noise);

    // Scale block: residual sum of squares from the sufficient statistics.
    const double rss = std::max(
        yty - 2.0 * theta.dot(xty) + theta.dot(xtx * theta), 1e-12);
    sigma = slice_sigma(sigma, static_cast<double>(n), rss,
                        priors.sigma_upper, rng);

    if (it >= cfg.outcome_burn_in) {
      out.beta0_below.push_back(theta[0]);
      out.delta_beta.push_back(theta[1]);
      out.slope_below.push_back(theta[2]);
      out.slope_above.push_back(theta[3]);
      out.sigma.push_back(sigma);
    }
  }
  return out;
}

DenominatorCounts denominator_counts(std::span<const std::uint8_t> t,
                                     std::span<const std::uint8_t> z) {
  if (t.size() != z.size()) {
    fail(ErrorCode::validation,
         "treatment and side indicators must have matching lengths");
  }
  DenominatorCounts c;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (z[i]) {
      ++c.n_above;
      c.treated_above += t[i] ? 1u : 0u;
    } else {
      ++c.n_below;
      c.treated_below += t[i] ? 1u : 0u;
    }
  }
  return c;
}

namespace {

// Adaptive random-walk Metropolis on a single logit-compliance parameter.
// Target: binomial likelihood with a Gaussian prior on the logit scale.
std::vector<double> flexible_side_chain(std::size_t treated, std::size_t total,
                                        double prior_mean, double prior_var,
                                        const EstimationConfig& cfg,
                                        Rng& rng) {
  const double s = static_cast<double>(treated);
  const double m = static_cast<double>(total);
  const auto log_target = [&](double theta) {
    const double loglik = s * theta - m * softplus(theta);
    const double resid = theta - prior_mean;
    return loglik - resid * resid / (2.0 * prior_var);
  };

  double theta = prior_mean;
  double lp = log_target(theta);
  double step = 0.5;
  int accepted = 0;
  const int adapt_window = 100;

  std::vector<double> kept;
  kept.reserve(static_cast<std::size_t>(cfg.n_draws));
  const int post = 2 * cfg.n_draws;  // thinned by 2 after burn-in
  const int total_iters = cfg.flex_burn_in + post;
  for (int it = 0; it < total_iters; ++it) {
    const double proposal = theta + step * rng.normal();
    const double lp_new = log_target(proposal);
    if (std::log(rng.uniform_pos()) < lp_new - lp) {
      theta = proposal;
      lp = lp_new;
      ++accepted;
    }
    const bool in_burn = it < cfg.flex_burn_in;
    if (in_burn && (it + 1) % adapt_window == 0) {
      const double rate = static_cast<double>(accepted) / adapt_window;
      if (rate < 0.3) {
        step *= 0.8;
      } else if (rate > 0.5) {
        step *= 1.25;
      }
      accepted = 0;
    }
    if (!in_burn) {
      const int since_burn = it - cfg.flex_burn_in;
      if (since_burn % 2 == 1) kept.push_back(theta);
    }
  }
  return kept;
}

}  // namespace

DenominatorDraws fit_denominator(const DenominatorCounts& counts,
                                 DenominatorModel model,
                                 const DenominatorPriors& priors,
                                 const EstimationConfig& cfg) {
  priors.validate();
  cfg.validate();
  if (counts.treated_above > counts.n_above ||
      counts.treated_below > counts.n_below) {
    fail(ErrorCode::validation,
         "treated counts cannot exceed side totals");
  }

  Rng rng(cfg.seed);
  DenominatorDraws out;
  const auto n_keep = static_cast<std::size_t>(cfg.n_draws);
  out.pi_above.reserve(n_keep);
  out.pi_below.reserve(n_keep);
  out.delta_pi.reserve(n_keep);

  if (model == DenominatorModel::unconstrained) {
    const double aa = priors.beta_a + static_cast<double>(counts.treated_above);
    const double ab = priors.beta_b +
                      static_cast<double>(counts.n_above - counts.treated_above);
    const double ba = priors.beta_a + static_cast<double>(counts.treated_below);
    const double bb = priors.beta_b +
                      static_cast<double>(counts.n_below - counts.treated_below);
    for (int i = 0; i < cfg.n_draws; ++i) {
      const double pa = rng.beta(aa, ab);
      const double pb = rng.beta(ba, bb);
      out.pi_above.push_back(pa);
      out.pi_below.push_back(pb);
      out.delta_pi.push_back(pa - pb);
    }
    return out;
  }

  // Flexible model: independent logit chains per side, run sequentially on
  // the same stream so results stay deterministic for a given seed.
  const std::vector<double> above =
      flexible_side_chain(counts.treated_above, counts.n_above,
                          priors.logit_above_mean, priors.logit_var, cfg, rng);
  const std::vector<double> below =
      flexible_side_chain(counts.treated_below, counts.n_below,
                          priors.logit_below_mean, priors.logit_var, cfg, rng);
  for (std::size_t i = 0; i < above.size(); ++i) {
    const double pa = logistic(above[i]);
    const double pb = logistic(below[i]);
    out.pi_above.push_back(pa);
    out.pi_below.push_back(pb);
    out.delta_pi.push_back(pa - pb);
  }
  return out;
}

LateDraws compute_late(std::span<const double> delta_beta,
                       std::span<const double> delta_pi) {
  if (delta_beta.size() != delta_pi.size()) {
    fail(ErrorCode::validation,
         "numerator and denominator draw counts differ (" +
             std::to_string(delta_beta.size()) + " vs " +
             std::to_string(delta_pi.size()) + ")");
  }
  if (delta_beta.empty()) {
    fail(ErrorCode::validation, "no posterior draws supplied");
  }
  LateDraws out;
  out.draws.reserve(delta_beta.size());
  for (std::size_t i = 0; i < delta_beta.size(); ++i) {
    if (std::abs(delta_pi[i]) < kDeltaPiFloor) {
      ++out.excluded;
      continue;
    }
    out.draws.push_back(delta_beta[i] / delta_pi[i]);
  }
  if (out.draws.empty()) {
    fail(ErrorCode::estimation,
         "all posterior draws had a compliance jump below the stability "
         "floor; the ratio estimand is not identified");
  }
  return out;
}

namespace {

double quantile_type7(const std::vector<double>& sorted, double q) {
  const std::size_t n = sorted.size();
  if (n == 1) return sorted[0];
  const double h = q * static_cast<double>(n - 1);
  const auto lo = static_cast<std::size_t>(h);
  if (lo + 1 >= n) return sorted[n - 1];
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

}  // namespace

Summary summarize(std::span<const double> draws, std::size_t min_draws) {
  if (draws.size() < min_draws) {
    fail(ErrorCode::estimation,
         "too few posterior draws to summarize (" +
             std::to_string(draws.size()) + " < " +
             std::to_string(min_draws) + ")");
  }
  std::vector<double> sorted(draws.begin(), draws.end());
  std::sort(sorted.begin(), sorted.end());
  double total = 0.0;
  for (double v : sorted) total += v;
  Summary s;
  s.n = sorted.size();
  s.mean = total / static_cast<double>(sorted.size());
  s.median = quantile_type7(sorted, 0.5);
  s.lower = quantile_type7(sorted, 0.025);
  s.upper = quantile_type7(sorted, 0.975);
  return s;
}

}  // namespace rddclust
