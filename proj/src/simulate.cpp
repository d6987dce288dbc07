#include "rddclust/simulate.hpp"

#include <cmath>
#include <string>

#include "rddclust/error.hpp"
#include "rddclust/rng.hpp"

namespace rddclust {

namespace {

// Generator constants. Covariate z-scores use the population moments of the
// sampling distributions so each unit is generated independently.
constexpr double kAgeMean = 60.0, kAgeSd = 5.7735026918962573;  // U(50,70)
constexpr double kSbpMean = 135.0, kSbpSd = 15.0;
constexpr double kHdlMean = 1.3, kHdlSd = 0.3, kHdlFloor = 0.5;
constexpr double kRiskWeight = 0.35;    // per-covariate loading on the score
constexpr double kRiskNoiseSd = 0.62;   // keeps clusters informative, not exact
constexpr double kRiskLo = 0.01, kRiskSpan = 0.59;
constexpr double kComplianceScale = 5e-4;  // width of the compliance rise
constexpr double kOutcomeIntercept = 3.7;
constexpr double kOutcomeSlope = 1.5;
constexpr double kConfounderCoef = 0.1;
constexpr double kOutcomeNoiseSd = 0.8;

double logistic(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

void validate_sim_config(const SimConfig& cfg) {
  if (cfg.n < 50) fail(ErrorCode::config, "sim.n must be at least 50");
  if (!(cfg.x0 > 0.0 && cfg.x0 < 1.0))
    fail(ErrorCode::config, "sim.x0 must lie in (0, 1)");
  if (!(cfg.compliance_below >= 0.0 && cfg.compliance_above <= 1.0 &&
        cfg.compliance_below <= cfg.compliance_above))
    fail(ErrorCode::config,
         "compliance must satisfy 0 <= below <= above <= 1");
  if (!std::isfinite(cfg.effect))
    fail(ErrorCode::config, "sim.effect must be finite");
  if (!(cfg.confounding_scale >= 0.0))
    fail(ErrorCode::config, "sim.confounding_scale must be non-negative");
}

Cohort simulate_cohort(const SimConfig& cfg) {
  validate_sim_config(cfg);
  Rng rng(cfg.seed);

  // Median of the latent score maps to x = x0. kRiskCenter is
  // logit((x0 - lo)/span) so that half the cohort lands on each side.
  const double risk_center =
      std::log((cfg.x0 - kRiskLo) / kRiskSpan / (1.0 - (cfg.x0 - kRiskLo) / kRiskSpan));
  const bool exact_sharp =
      cfg.compliance_below == 0.0 && cfg.compliance_above == 1.0;

  Cohort cohort;
  cohort.x0 = cfg.x0;
  cohort.schema.cont_names = {"age", "sbp", "hdl"};
  cohort.cont.resize(3);
  const std::size_t n = cfg.n;
  cohort.id.reserve(n);
  cohort.x.reserve(n);
  cohort.t.reserve(n);
  cohort.y.reserve(n);
  for (auto& col : cohort.cont) col.reserve(n);

  for (std::size_t i = 0; i < n; ++i) {
    const double age = rng.uniform(50.0, 70.0);
    const double sbp = rng.normal(kSbpMean, kSbpSd);
    double hdl;
    do {
      hdl = rng.normal(kHdlMean, kHdlSd);
    } while (hdl <= kHdlFloor);

    const double za = (age - kAgeMean) / kAgeSd;
    const double zs = (sbp - kSbpMean) / kSbpSd;
    const double zh = (hdl - kHdlMean) / kHdlSd;

    const double latent = kRiskWeight * (za + zs - zh) +
                          kRiskNoiseSd * rng.normal() + risk_center;
    const double x = kRiskLo + kRiskSpan * logistic(latent);
    const double xc = x - cfg.x0;

    std::uint8_t t;
    if (exact_sharp) {
      t = xc >= 0.0 ? 1 : 0;  // degenerate limit of the compliance curve
    } else {
      const double p = cfg.compliance_below +
                       (cfg.compliance_above - cfg.compliance_below) *
                           logistic(xc / kComplianceScale);
      t = rng.bernoulli(p) ? 1 : 0;
    }

    const double y = kOutcomeIntercept + kOutcomeSlope * xc +
                     cfg.effect * t +
                     cfg.confounding_scale * kConfounderCoef * (za + zs - zh) +
                     kOutcomeNoiseSd * rng.normal();

    cohort.id.push_back(std::to_string(i + 1));
    cohort.x.push_back(x);
    cohort.t.push_back(t);
    cohort.y.push_back(y);
    cohort.cont[0].push_back(age);
    cohort.cont[1].push_back(sbp);
    cohort.cont[2].push_back(hdl);
  }
  return cohort;
}

std::vector<Cohort> simulate_study(const StudyConfig& cfg) {
  if (cfg.n_reps == 0)
    fail(ErrorCode::config, "study.n_reps must be positive");
  std::vector<Cohort> cohorts;
  cohorts.reserve(cfg.n_reps);
  for (std::size_t r = 0; r < cfg.n_reps; ++r) {
    SimConfig rep_cfg = cfg.sim;
    rep_cfg.seed = cfg.sim.seed ^ static_cast<std::uint64_t>(r);
    cohorts.push_back(simulate_cohort(rep_cfg));
  }
  return cohorts;
}

}  // namespace rddclust
