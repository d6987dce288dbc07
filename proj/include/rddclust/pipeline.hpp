#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rddclust/bandwidth.hpp"
#include "rddclust/cohort.hpp"
#include "rddclust/config.hpp"
#include "rddclust/dpmm.hpp"
#include "rddclust/estimator.hpp"
#include "rddclust/partition.hpp"
#include "rddclust/selection.hpp"
#include "rddclust/simulate.hpp"

namespace rddclust {

struct BaselineSettings {
  bool lr = true;
  bool ik = true;
  bool cv = true;
  std::vector<double> fixed_h = {0.10, 0.05};
  double cv_delta = 0.5;
  double lr_alpha = 0.15;
  IkKernel ik_kernel = IkKernel::triangular;
};

// Effective settings for one batch run. Scalar clustering hyperparameters
// are stored here and expanded into DpmmPriors once the covariate
// dimensions of the cohort are known.
struct RunConfig {
  StudyConfig study;

  double dpmm_kappa0 = 0.0;       // 0 = automatic (cont_dim + 2)
  double dpmm_sigma0_scale = 1.0;
  double dpmm_r0_scale = 1.0;
  double dpmm_dirichlet_a = 0.5;
  double dpmm_alpha_shape = 2.0;
  double dpmm_alpha_rate = 1.0;
  double dpmm_fixed_alpha = 0.0;  // 0 = learn the concentration

  McmcConfig clustering;
  EstimationConfig estimation;

  double zeta = 0.0;  // > 2 overrides the explicit balance bounds
  BalanceBounds bounds;
  std::vector<Strategy> strategies = {Strategy::inc10, Strategy::c25,
                                      Strategy::n50, Strategy::n25};
  BaselineSettings baselines;

  std::size_t k_min = 0;  // 0 = automatic candidate range
  std::size_t k_max = 0;

  int plot_bins = 20;

  std::string input_csv;  // non-empty switches analyze to CSV ingestion
  double input_x0 = 0.20;
  std::vector<std::string> input_cat_cols;

  std::string out_dir = "out";
  std::uint64_t seed = 1;
  int threads = 1;

  void validate() const;
  //! Clustering priors for a cohort with the given covariate shape.
  DpmmPriors make_dpmm_priors(std::size_t cont_dim,
                              const std::vector<int>& cat_levels) const;
  BalanceBounds effective_bounds() const;
};

//! Builds a RunConfig from flat configuration keys; rejects unknown keys.
RunConfig parse_run_config(const Config& cfg);

// One comparison-table entry: a selection strategy or a bandwidth baseline.
struct MethodSpec {
  std::string label;  // inc10 / c25 / n50 / n25 / LR / IK / h=0.10 / CV
  bool is_strategy = false;
  Strategy strategy = Strategy::inc10;
  BandwidthMethod bw = BandwidthMethod::fixed;
  double fixed_h = 0.0;
};

std::vector<MethodSpec> method_order(const RunConfig& cfg);

struct MethodOutcome {
  std::string label;
  bool ok = false;
  std::string note;  // failure reason, shortfall marker, or empty
  std::vector<std::size_t> subset;  // unit indices into the cohort
  bool sharp = false;  // t == z throughout the subset; compliance jump is 1
  double bandwidth = 0.0;  // baselines only
  AteDraws ate;
  DenominatorDraws unct;
  DenominatorDraws flex;
  LateDraws late_unct;
  LateDraws late_flex;
};

struct ReplicateResult {
  std::size_t replicate = 0;
  bool ok = false;  // false = replicate-level failure, see note
  std::string note;
  Cohort cohort;
  CenteredView centered;
  std::vector<ClusterSummary> clusters;
  Partition partition;
  std::vector<MethodOutcome> methods;  // in method_order
  BandwidthResult cv_result, ik_result, lr_result;
  bool have_cv = false, have_ik = false, have_lr = false;
};

//! Clustering, selection, and estimation for a single cohort. Method-level
//! failures are recorded in the outcome notes, not thrown.
ReplicateResult analyze_replicate(const Cohort& cohort, const RunConfig& cfg,
                                  std::size_t replicate);

struct ComparisonRow {
  std::string estimand;  // LATE_flex or LATE_unct
  std::string method;
  bool available = false;
  Summary summary;
  double mean_subset = 0.0;
  std::size_t replicates = 0;  // replicates contributing draws
};

struct RunOutput {
  std::vector<ReplicateResult> replicates;
  std::vector<ComparisonRow> table;
};

//! Full batch: simulate (or load) cohorts, analyze every replicate (up to
//! cfg.threads in parallel), pool posterior draws across replicates per
//! method, and write all artifacts under cfg.out_dir.
RunOutput run_pipeline(const RunConfig& cfg);

//! Simulate-only mode: writes rep_<r>.csv cohorts and the manifest.
void run_simulate(const RunConfig& cfg);

//! Regenerates plot CSVs from the artifacts of a previous analyze run.
void run_report(const std::string& run_dir, int bins);

}  // namespace rddclust
