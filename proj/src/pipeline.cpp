#include "rddclust/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <thread>

#include "rddclust/csv.hpp"
#include "rddclust/error.hpp"

namespace fs = std::filesystem;

namespace rddclust {
namespace {

constexpr const char* kVersion = "rddclust 0.1.0";

std::string fixed_label(double h) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "h=%.2f", h);
  return buffer;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::io, "cannot open for writing: " + path.string());
  return out;
}

}  // namespace

void RunConfig::validate() const {
  validate_sim_config(study.sim);
  if (study.n_reps < 1) fail(ErrorCode::config, "n_reps must be >= 1");
  clustering.validate();
  estimation.validate();
  effective_bounds().validate();
  if (zeta != 0.0 && !(zeta > 2.0)) {
    fail(ErrorCode::config, "zeta must be > 2 (or 0 for explicit bounds)");
  }
  if ((k_min == 0) != (k_max == 0) || (k_min > 0 && k_min > k_max)) {
    fail(ErrorCode::config,
         "partition.k_min and partition.k_max must be set together with "
         "k_min <= k_max");
  }
  if (plot_bins < 1) fail(ErrorCode::config, "report.bins must be >= 1");
  if (threads < 1) fail(ErrorCode::config, "threads must be >= 1");
  if (!(baselines.cv_delta >= 0.5) || !(baselines.cv_delta < 1.0)) {
    fail(ErrorCode::config, "baselines.cv_delta must lie in [0.5, 1)");
  }
  if (!(baselines.lr_alpha >= 0.0) || !(baselines.lr_alpha <= 1.0)) {
    fail(ErrorCode::config, "baselines.lr_alpha must lie in [0, 1]");
  }
  for (double h : baselines.fixed_h) {
    if (!(h > 0.0)) fail(ErrorCode::config, "fixed window must be positive");
  }
  if (method_order(*this).empty()) {
    fail(ErrorCode::config, "no selection strategies or baselines enabled");
  }
  if (out_dir.empty()) fail(ErrorCode::config, "output directory not set");
}

DpmmPriors RunConfig::make_dpmm_priors(
    std::size_t cont_dim, const std::vector<int>& cat_levels) const {
  DpmmPriors priors = DpmmPriors::defaults(cont_dim, cat_levels);
  if (dpmm_kappa0 > 0.0) priors.kappa0 = dpmm_kappa0;
  priors.sigma0 *= dpmm_sigma0_scale;
  priors.r0 *= dpmm_r0_scale;
  for (auto& row : priors.dirichlet_a) {
    std::fill(row.begin(), row.end(), dpmm_dirichlet_a);
  }
  priors.alpha_shape = dpmm_alpha_shape;
  priors.alpha_rate = dpmm_alpha_rate;
  priors.fixed_alpha = dpmm_fixed_alpha;
  return priors;
}

BalanceBounds RunConfig::effective_bounds() const {
  if (zeta > 2.0) return BalanceBounds::from_zeta(zeta);
  return bounds;
}

RunConfig parse_run_config(const Config& cfg) {
  RunConfig rc;
  rc.study.sim.n = static_cast<std::size_t>(
      cfg.get_int("sim.n", static_cast<int>(rc.study.sim.n)));
  rc.study.sim.effect = cfg.get_double("sim.effect", rc.study.sim.effect);
  rc.study.sim.x0 = cfg.get_double("sim.x0", rc.study.sim.x0);
  rc.study.sim.compliance_above =
      cfg.get_double("sim.compliance_above", rc.study.sim.compliance_above);
  rc.study.sim.compliance_below =
      cfg.get_double("sim.compliance_below", rc.study.sim.compliance_below);
  rc.study.sim.confounding_scale =
      cfg.get_double("sim.confounding_scale", rc.study.sim.confounding_scale);
  rc.study.n_reps = cfg.get_int("study.reps", rc.study.n_reps);

  rc.dpmm_kappa0 = cfg.get_double("dpmm.kappa0", rc.dpmm_kappa0);
  rc.dpmm_sigma0_scale =
      cfg.get_double("dpmm.sigma0_scale", rc.dpmm_sigma0_scale);
  rc.dpmm_r0_scale = cfg.get_double("dpmm.r0_scale", rc.dpmm_r0_scale);
  rc.dpmm_dirichlet_a =
      cfg.get_double("dpmm.dirichlet_a", rc.dpmm_dirichlet_a);
  rc.dpmm_alpha_shape =
      cfg.get_double("dpmm.alpha_shape", rc.dpmm_alpha_shape);
  rc.dpmm_alpha_rate = cfg.get_double("dpmm.alpha_rate", rc.dpmm_alpha_rate);
  rc.dpmm_fixed_alpha =
      cfg.get_double("dpmm.fixed_alpha", rc.dpmm_fixed_alpha);

  rc.clustering.n_iter =
      cfg.get_int("clustering.iterations", rc.clustering.n_iter);
  rc.clustering.burn_in =
      cfg.get_int("clustering.burn_in", rc.clustering.burn_in);
  rc.clustering.thin = cfg.get_int("clustering.thin", rc.clustering.thin);
  rc.clustering.label_moves_per_sweep = cfg.get_int(
      "clustering.label_moves", rc.clustering.label_moves_per_sweep);

  rc.estimation.n_draws =
      cfg.get_int("estimation.draws", rc.estimation.n_draws);
  rc.estimation.outcome_burn_in =
      cfg.get_int("estimation.burn_in", rc.estimation.outcome_burn_in);
  rc.estimation.flex_burn_in =
      cfg.get_int("estimation.flex_burn_in", rc.estimation.flex_burn_in);

  rc.zeta = cfg.get_double("selection.zeta", rc.zeta);
  rc.bounds.lower = cfg.get_double("selection.balance_lower", rc.bounds.lower);
  rc.bounds.upper = cfg.get_double("selection.balance_upper", rc.bounds.upper);
  const std::vector<std::string> strategy_names =
      cfg.get_list("selection.strategies", {"inc10", "c25", "n50", "n25"});
  rc.strategies.clear();
  for (const std::string& name : strategy_names) {
    rc.strategies.push_back(parse_strategy(name));
  }

  rc.k_min = static_cast<std::size_t>(
      cfg.get_int("partition.k_min", static_cast<int>(rc.k_min)));
  rc.k_max = static_cast<std::size_t>(
      cfg.get_int("partition.k_max", static_cast<int>(rc.k_max)));

  const std::vector<std::string> enabled =
      cfg.get_list("baselines.enabled", {"lr", "ik", "fixed", "cv"});
  rc.baselines.lr = rc.baselines.ik = rc.baselines.cv = false;
  bool fixed_enabled = false;
  for (const std::string& name : enabled) {
    if (name == "lr") {
      rc.baselines.lr = true;
    } else if (name == "ik") {
      rc.baselines.ik = true;
    } else if (name == "cv") {
      rc.baselines.cv = true;
    } else if (name == "fixed") {
      fixed_enabled = true;
    } else {
      fail(ErrorCode::config, "unknown baseline: " + name);
    }
  }
  rc.baselines.fixed_h =
      cfg.get_double_list("baselines.fixed_h", rc.baselines.fixed_h);
  if (!fixed_enabled) rc.baselines.fixed_h.clear();
  rc.baselines.cv_delta =
      cfg.get_double("baselines.cv_delta", rc.baselines.cv_delta);
  rc.baselines.lr_alpha =
      cfg.get_double("baselines.lr_alpha", rc.baselines.lr_alpha);
  const std::string kernel =
      cfg.get_string("baselines.ik_kernel", "triangular");
  if (kernel == "triangular") {
    rc.baselines.ik_kernel = IkKernel::triangular;
  } else if (kernel == "rectangular") {
    rc.baselines.ik_kernel = IkKernel::rectangular;
  } else {
    fail(ErrorCode::config, "unknown ik kernel: " + kernel);
  }

  rc.plot_bins = cfg.get_int("report.bins", rc.plot_bins);

  rc.input_csv = cfg.get_string("input.path", rc.input_csv);
  rc.input_x0 = cfg.get_double("input.x0", rc.input_x0);
  rc.input_cat_cols = cfg.get_list("input.categorical", rc.input_cat_cols);

  rc.seed = cfg.get_u64("run.seed", rc.seed);
  rc.out_dir = cfg.get_string("run.out", rc.out_dir);
  rc.threads = cfg.get_int("run.threads", rc.threads);

  cfg.assert_all_consumed();
  return rc;
}

std::vector<MethodSpec> method_order(const RunConfig& cfg) {
  std::vector<MethodSpec> specs;
  for (Strategy s : cfg.strategies) {
    MethodSpec spec;
    spec.label = strategy_name(s);
    spec.is_strategy = true;
    spec.strategy = s;
    specs.push_back(spec);
  }
  if (cfg.baselines.lr) {
    MethodSpec spec;
    spec.label = "LR";
    spec.bw = BandwidthMethod::lr;
    specs.push_back(spec);
  }
  if (cfg.baselines.ik) {
    MethodSpec spec;
    spec.label = "IK";
    spec.bw = BandwidthMethod::ik;
    specs.push_back(spec);
  }
  for (double h : cfg.baselines.fixed_h) {
    MethodSpec spec;
    spec.label = fixed_label(h);
    spec.bw = BandwidthMethod::fixed;
    spec.fixed_h = h;
    specs.push_back(spec);
  }
  if (cfg.baselines.cv) {
    MethodSpec spec;
    spec.label = "CV";
    spec.bw = BandwidthMethod::cv;
    specs.push_back(spec);
  }
  return specs;
}

namespace {

// Estimation seeds: offset by replicate and method index so every chain in
// the batch draws from an independent stream.
constexpr std::uint64_t kClusteringPurpose = 1;
constexpr std::uint64_t kEstimationBase = 100;

MethodOutcome failed_outcome(const std::string& label,
                             const std::string& note) {
  MethodOutcome out;
  out.label = label;
  out.ok = false;
  out.note = note;
  return out;
}

// Runs the three posterior passes (outcome jump, both compliance models)
// on a unit subset. Throws Error on degenerate subsets.
MethodOutcome estimate_subset(const Cohort& cohort, const CenteredView& view,
                              const RunConfig& cfg, std::size_t replicate,
                              std::size_t method_index,
                              const MethodSpec& spec,
                              std::vector<std::size_t> subset) {
  MethodOutcome out;
  out.label = spec.label;
  out.subset = std::move(subset);

  std::vector<double> xc, y;
  std::vector<std::uint8_t> t, z;
  xc.reserve(out.subset.size());
  y.reserve(out.subset.size());
  t.reserve(out.subset.size());
  z.reserve(out.subset.size());
  for (std::size_t i : out.subset) {
    xc.push_back(view.xc[i]);
    y.push_back(cohort.y[i]);
    t.push_back(cohort.t[i]);
    z.push_back(view.z[i]);
  }

  out.sharp = true;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] != z[i]) {
      out.sharp = false;
      break;
    }
  }

  EstimationConfig ecfg = cfg.estimation;
  const std::uint64_t base =
      kEstimationBase + 3 * static_cast<std::uint64_t>(method_index);
  ecfg.seed = derive_seed(cfg.seed, replicate, base);
  out.ate = fit_ate(xc, y, z, OutcomePriors{}, ecfg);

  if (out.sharp) {
    // Treatment follows the threshold rule exactly: the compliance jump is
    // identically 1 and the ratio estimand reduces to the outcome jump.
    const std::size_t m = out.ate.delta_beta.size();
    out.unct.pi_above.assign(m, 1.0);
    out.unct.pi_below.assign(m, 0.0);
    out.unct.delta_pi.assign(m, 1.0);
    out.flex = out.unct;
  } else {
    const DenominatorCounts counts = denominator_counts(t, z);
    EstimationConfig unct_cfg = cfg.estimation;
    unct_cfg.seed = derive_seed(cfg.seed, replicate, base + 1);
    out.unct = fit_denominator(counts, DenominatorModel::unconstrained,
                               DenominatorPriors{}, unct_cfg);
    EstimationConfig flex_cfg = cfg.estimation;
    flex_cfg.seed = derive_seed(cfg.seed, replicate, base + 2);
    out.flex = fit_denominator(counts, DenominatorModel::flexible,
                               DenominatorPriors{}, flex_cfg);
  }
  out.late_unct = compute_late(out.ate.delta_beta, out.unct.delta_pi);
  out.late_flex = compute_late(out.ate.delta_beta, out.flex.delta_pi);
  out.ok = true;
  return out;
}

}  // namespace

ReplicateResult analyze_replicate(const Cohort& cohort, const RunConfig& cfg,
                                  std::size_t replicate) {
  ReplicateResult res;
  res.replicate = replicate;
  res.cohort = cohort;
  const std::vector<MethodSpec> specs = method_order(cfg);

  try {
    validate_cohort(cohort);
    res.centered = center_forcing(cohort);
  } catch (const Error& e) {
    res.ok = false;
    res.note = e.what();
    for (const MethodSpec& spec : specs) {
      res.methods.push_back(failed_outcome(spec.label, res.note));
    }
    return res;
  }
  res.ok = true;

  // Covariate preprocessing, shared by clustering and the balance window.
  StandardizedMatrix standardized;
  std::vector<std::vector<double>> balance_covariates;
  std::string covariate_note;
  try {
    standardized = standardize_covariates(cohort);
    for (std::size_t j = 0; j < standardized.dim; ++j) {
      balance_covariates.emplace_back(standardized.col(j),
                                      standardized.col(j) + standardized.n);
    }
    for (const auto& col : cohort.cat) {
      balance_covariates.emplace_back(col.begin(), col.end());
    }
  } catch (const Error& e) {
    covariate_note = e.what();
  }

  // Clustering stage: mixture MCMC -> co-clustering matrix -> representative
  // partition -> balance/homogeneity summaries.
  bool clustering_ok = false;
  std::string cluster_note = covariate_note;
  PosteriorSimilarityMatrix psm;
  if (covariate_note.empty()) {
    try {
      if (standardized.dim == 0 && cohort.cat.empty()) {
        fail(ErrorCode::validation, "no covariates available for clustering");
      }
      const DpmmData data =
          DpmmData::from(standardized, cohort.cat, cohort.schema.cat_levels);
      const DpmmPriors priors =
          cfg.make_dpmm_priors(data.cont_dim, data.cat_levels);
      McmcConfig mcmc = cfg.clustering;
      mcmc.seed = derive_seed(cfg.seed, replicate, kClusteringPurpose);
      const PartitionChain chain = run_dpmm(data, priors, mcmc);
      psm = compute_psm(chain);
      std::vector<std::size_t> k_range;
      if (cfg.k_min > 0) {
        for (std::size_t k = cfg.k_min;
             k <= std::min(cfg.k_max, cohort.x.size() - 1); ++k) {
          k_range.push_back(k);
        }
      }
      const BestPartition best = best_partition(psm, k_range);
      res.partition = best.partition;
      res.clusters = summarize_clusters(res.partition, psm, res.centered.z,
                                        cfg.effective_bounds());
      clustering_ok = true;
    } catch (const Error& e) {
      cluster_note = e.what();
    }
  }
  if (!clustering_ok && res.note.empty()) res.note = cluster_note;

  // Strategy selections over the ranked balanced clusters.
  std::map<Strategy, Selection> selections;
  std::map<Strategy, std::string> selection_notes;
  for (Strategy s : cfg.strategies) {
    if (!clustering_ok) {
      selection_notes[s] = cluster_note;
      continue;
    }
    try {
      selections[s] = select_units(res.clusters, res.partition, s,
                                   cohort.x.size());
    } catch (const Error& e) {
      selection_notes[s] = e.what();
    }
  }

  // Baseline bandwidth selectors on the full cohort.
  std::string cv_note, ik_note, lr_note;
  if (cfg.baselines.cv) {
    try {
      res.cv_result = cv_select(res.centered.xc, cohort.y, cohort.t,
                                res.centered.z, default_cv_grid(),
                                cfg.baselines.cv_delta);
      res.have_cv = true;
    } catch (const Error& e) {
      cv_note = e.what();
    }
  }
  if (cfg.baselines.ik) {
    try {
      res.ik_result = ik_bandwidth(res.centered.xc, cohort.y, res.centered.z,
                                   cfg.baselines.ik_kernel);
      res.have_ik = true;
    } catch (const Error& e) {
      ik_note = e.what();
    }
  }
  if (cfg.baselines.lr) {
    try {
      if (balance_covariates.empty()) {
        fail(ErrorCode::validation,
             covariate_note.empty() ? "no covariates available for the "
                                      "balance window"
                                    : covariate_note);
      }
      res.lr_result =
          lr_window(res.centered.xc, res.centered.z, balance_covariates,
                    cfg.baselines.lr_alpha, default_lr_grid());
      res.have_lr = true;
    } catch (const Error& e) {
      lr_note = e.what();
    }
  }

  // Estimation per method.
  for (std::size_t m = 0; m < specs.size(); ++m) {
    const MethodSpec& spec = specs[m];
    std::vector<std::size_t> subset;
    std::string note;
    double bandwidth = 0.0;
    if (spec.is_strategy) {
      const auto it = selections.find(spec.strategy);
      if (it == selections.end()) {
        res.methods.push_back(
            failed_outcome(spec.label, selection_notes[spec.strategy]));
        continue;
      }
      subset.assign(it->second.unit_indices.begin(),
                    it->second.unit_indices.end());
      if (it->second.shortfall) note = "coverage shortfall";
    } else if (spec.bw == BandwidthMethod::cv) {
      if (!res.have_cv) {
        res.methods.push_back(failed_outcome(spec.label, cv_note));
        continue;
      }
      subset = res.cv_result.unit_indices;
      bandwidth = res.cv_result.h;
    } else if (spec.bw == BandwidthMethod::ik) {
      if (!res.have_ik) {
        res.methods.push_back(failed_outcome(spec.label, ik_note));
        continue;
      }
      subset = res.ik_result.unit_indices;
      bandwidth = res.ik_result.h;
      if (res.ik_result.fallback) note = "curvature fallback";
    } else if (spec.bw == BandwidthMethod::lr) {
      if (!res.have_lr) {
        res.methods.push_back(failed_outcome(spec.label, lr_note));
        continue;
      }
      subset = res.lr_result.unit_indices;
      bandwidth = res.lr_result.h;
      if (res.lr_result.fallback) note = "smallest window imbalanced";
    } else {
      try {
        subset = subset_by_bandwidth(res.centered.xc, spec.fixed_h);
        bandwidth = spec.fixed_h;
      } catch (const Error& e) {
        res.methods.push_back(failed_outcome(spec.label, e.what()));
        continue;
      }
    }

    try {
      MethodOutcome out = estimate_subset(cohort, res.centered, cfg,
                                          replicate, m, spec,
                                          std::move(subset));
      out.bandwidth = bandwidth;
      if (!note.empty()) out.note = note;
      res.methods.push_back(std::move(out));
    } catch (const Error& e) {
      res.methods.push_back(failed_outcome(spec.label, e.what()));
    }
  }

  return res;
}

namespace {

void write_cluster_summary(const ReplicateResult& res, const fs::path& path) {
  std::ofstream out = open_out(path);
  out << "cluster_id,n,pi_z,homogeneity,singleton,balanced,rank\n";
  for (const ClusterSummary& c : res.clusters) {
    out << c.cluster_id << ',' << c.n << ',' << fmt_double(c.pi_z) << ','
        << fmt_double(c.homogeneity) << ',' << (c.singleton ? 1 : 0) << ','
        << (c.balanced ? 1 : 0) << ',' << c.rank << '\n';
  }
}

void write_selection(const ReplicateResult& res, const RunConfig& cfg,
                     const fs::path& path) {
  std::ofstream out = open_out(path);
  out << "strategy,unit_id,cluster_id\n";
  for (const MethodOutcome& m : res.methods) {
    if (!m.ok) continue;
    bool is_strategy = false;
    for (Strategy s : cfg.strategies) {
      if (m.label == strategy_name(s)) is_strategy = true;
    }
    if (!is_strategy) continue;
    for (std::size_t i : m.subset) {
      const std::int32_t cluster =
          res.partition.labels.empty()
              ? 0
              : res.partition.labels[i];
      out << m.label << ',' << res.cohort.id[i] << ',' << cluster << '\n';
    }
  }
}

void write_bandwidth_diagnostics(const ReplicateResult& res,
                                 const fs::path& dir, std::size_t r) {
  if (res.have_cv) {
    std::ofstream out =
        open_out(dir / ("bandwidth_cv_rep" + std::to_string(r) + ".csv"));
    out << "h,criterion\n";
    for (const CvPoint& p : res.cv_result.cv_curve) {
      out << fmt_double(p.h) << ',' << fmt_double(p.criterion) << '\n';
    }
  }
  if (res.have_lr) {
    std::ofstream out =
        open_out(dir / ("bandwidth_lr_rep" + std::to_string(r) + ".csv"));
    out << "h,min_p\n";
    for (const LrPoint& p : res.lr_result.lr_trace) {
      out << fmt_double(p.h) << ',' << fmt_double(p.min_p) << '\n';
    }
  }
  if (res.have_ik) {
    std::ofstream out =
        open_out(dir / ("bandwidth_ik_rep" + std::to_string(r) + ".csv"));
    out << "f,sigma2_a,sigma2_b,m2_a,m2_b,Ck,h\n";
    const IkComponents& c = res.ik_result.ik;
    out << fmt_double(c.f_x0) << ',' << fmt_double(c.sigma2_above) << ','
        << fmt_double(c.sigma2_below) << ',' << fmt_double(c.m2_above) << ','
        << fmt_double(c.m2_below) << ',' << fmt_double(c.ck) << ','
        << fmt_double(res.ik_result.h) << '\n';
  }
}

void write_replicate_artifacts(const ReplicateResult& res,
                               const RunConfig& cfg) {
  const fs::path dir(cfg.out_dir);
  const std::size_t r = res.replicate;
  write_cohort_csv(res.cohort, (dir / ("rep_" + std::to_string(r) + ".csv"))
                                   .string());
  write_cluster_summary(
      res, dir / ("cluster_summary_rep" + std::to_string(r) + ".csv"));
  write_selection(res, cfg,
                  dir / ("selection_rep" + std::to_string(r) + ".csv"));
  write_bandwidth_diagnostics(res, dir, r);
}

struct PooledMethod {
  std::vector<double> flex;
  std::vector<double> unct;
  double subset_total = 0.0;
  std::size_t contributing = 0;
};

std::vector<ComparisonRow> build_comparison(
    const std::vector<ReplicateResult>& results,
    const std::vector<MethodSpec>& specs) {
  std::vector<ComparisonRow> rows;
  for (const char* estimand : {"LATE_flex", "LATE_unct"}) {
    const bool flex = std::string(estimand) == "LATE_flex";
    for (const MethodSpec& spec : specs) {
      PooledMethod pooled;
      for (const ReplicateResult& res : results) {
        for (const MethodOutcome& m : res.methods) {
          if (m.label != spec.label || !m.ok) continue;
          const std::vector<double>& draws =
              flex ? m.late_flex.draws : m.late_unct.draws;
          pooled.flex.insert(pooled.flex.end(), draws.begin(), draws.end());
          pooled.subset_total += static_cast<double>(m.subset.size());
          ++pooled.contributing;
        }
      }
      ComparisonRow row;
      row.estimand = estimand;
      row.method = spec.label;
      row.replicates = pooled.contributing;
      if (!pooled.flex.empty()) {
        row.available = true;
        row.summary = summarize(pooled.flex, 1);
        row.mean_subset =
            pooled.subset_total / static_cast<double>(pooled.contributing);
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

void write_comparison_table(const std::vector<ComparisonRow>& rows,
                            const fs::path& path) {
  std::ofstream out = open_out(path);
  out << "estimand,method,median,mean,lower,upper,mean_subset_size,"
         "replicates\n";
  for (const ComparisonRow& row : rows) {
    if (row.available) {
      out << row.estimand << ',' << row.method << ','
          << fmt_double(row.summary.median) << ','
          << fmt_double(row.summary.mean) << ','
          << fmt_double(row.summary.lower) << ','
          << fmt_double(row.summary.upper) << ','
          << fmt_double(row.mean_subset) << ',' << row.replicates << '\n';
    } else {
      out << row.estimand << ',' << row.method << ",NA,NA,NA,NA,NA,0\n";
    }
  }
}

void write_per_replicate(const std::vector<ReplicateResult>& results,
                         const fs::path& path) {
  std::ofstream out = open_out(path);
  out << "replicate,method,estimand,median,mean,lower,upper,subset_size,"
         "excluded,note\n";
  for (const ReplicateResult& res : results) {
    for (const MethodOutcome& m : res.methods) {
      if (!m.ok) continue;
      const auto row = [&](const std::string& estimand,
                           std::span<const double> draws,
                           std::size_t excluded) {
        const Summary s = summarize(draws, 1);
        out << res.replicate << ',' << m.label << ',' << estimand << ','
            << fmt_double(s.median) << ',' << fmt_double(s.mean) << ','
            << fmt_double(s.lower) << ',' << fmt_double(s.upper) << ','
            << m.subset.size() << ',' << excluded << ',' << m.note << '\n';
      };
      row("ATE", m.ate.delta_beta, 0);
      row("LATE_unct", m.late_unct.draws, m.late_unct.excluded);
      row("LATE_flex", m.late_flex.draws, m.late_flex.excluded);
    }
  }
}

void write_quarantine(const std::vector<ReplicateResult>& results,
                      const fs::path& path) {
  std::ofstream out = open_out(path);
  out << "replicate,scope,reason\n";
  for (const ReplicateResult& res : results) {
    if (!res.ok || !res.note.empty()) {
      out << res.replicate << ',' << (res.ok ? "clustering" : "replicate")
          << ',' << res.note << '\n';
    }
    for (const MethodOutcome& m : res.methods) {
      if (!m.ok) {
        out << res.replicate << ',' << m.label << ',' << m.note << '\n';
      }
    }
  }
}

void write_scatter_plots(const ReplicateResult& res, const RunConfig& cfg,
                         const fs::path& dir) {
  for (Strategy s : cfg.strategies) {
    const std::string label = strategy_name(s);
    std::vector<std::uint8_t> selected(res.cohort.x.size(), 0);
    for (const MethodOutcome& m : res.methods) {
      if (m.label != label || !m.ok) continue;
      for (std::size_t i : m.subset) selected[i] = 1;
    }
    std::ofstream out =
        open_out(dir / ("plot_scatter_selection_" + label + ".csv"));
    out << "x,y,t,selected\n";
    for (std::size_t i = 0; i < res.cohort.x.size(); ++i) {
      out << fmt_double(res.cohort.x[i]) << ',' << fmt_double(res.cohort.y[i])
          << ',' << int(res.cohort.t[i]) << ',' << int(selected[i]) << '\n';
    }
  }
}

void write_binned_means(const std::vector<double>& x,
                        const std::vector<double>& y,
                        const std::vector<std::uint8_t>& t, int bins,
                        const fs::path& path) {
  const auto [min_it, max_it] = std::minmax_element(x.begin(), x.end());
  const double lo = *min_it;
  const double hi = *max_it;
  const double width = (hi - lo) / bins;
  std::vector<std::size_t> count(bins, 0);
  std::vector<double> sum_y(bins, 0.0), sum_t(bins, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    int b = width > 0.0 ? static_cast<int>((x[i] - lo) / width) : 0;
    b = std::clamp(b, 0, bins - 1);
    ++count[b];
    sum_y[b] += y[i];
    sum_t[b] += t[i] ? 1.0 : 0.0;
  }
  std::ofstream out = open_out(path);
  out << "bin,lo,hi,count,mean_y,mean_t\n";
  for (int b = 0; b < bins; ++b) {
    const double bin_lo = lo + b * width;
    const double bin_hi = b + 1 == bins ? hi : lo + (b + 1) * width;
    out << b << ',' << fmt_double(bin_lo) << ',' << fmt_double(bin_hi) << ','
        << count[b];
    if (count[b] > 0) {
      out << ',' << fmt_double(sum_y[b] / count[b]) << ','
          << fmt_double(sum_t[b] / count[b]) << '\n';
    } else {
      out << ",NA,NA\n";
    }
  }
}

void write_forest(const std::vector<ComparisonRow>& rows,
                  const fs::path& path) {
  std::ofstream out = open_out(path);
  out << "estimand,method,median,lower,upper\n";
  for (const ComparisonRow& row : rows) {
    if (!row.available) continue;
    out << row.estimand << ',' << row.method << ','
        << fmt_double(row.summary.median) << ','
        << fmt_double(row.summary.lower) << ','
        << fmt_double(row.summary.upper) << '\n';
  }
}

std::string manifest_text(const RunConfig& cfg, const std::string& mode) {
  std::ostringstream out;
  out << kVersion << '\n';
  out << "mode = " << mode << '\n';
  out << "run.seed = " << cfg.seed << '\n';
  out << "run.threads = " << cfg.threads << '\n';
  out << "run.out = " << cfg.out_dir << '\n';
  out << "input.path = "
      << (cfg.input_csv.empty() ? "(simulated)" : cfg.input_csv) << '\n';
  out << "input.x0 = " << fmt_double(cfg.input_x0) << '\n';
  out << "sim.n = " << cfg.study.sim.n << '\n';
  out << "sim.effect = " << fmt_double(cfg.study.sim.effect) << '\n';
  out << "sim.x0 = " << fmt_double(cfg.study.sim.x0) << '\n';
  out << "sim.compliance_above = "
      << fmt_double(cfg.study.sim.compliance_above) << '\n';
  out << "sim.compliance_below = "
      << fmt_double(cfg.study.sim.compliance_below) << '\n';
  out << "sim.confounding_scale = "
      << fmt_double(cfg.study.sim.confounding_scale) << '\n';
  out << "study.reps = " << cfg.study.n_reps << '\n';
  out << "dpmm.kappa0 = " << fmt_double(cfg.dpmm_kappa0) << '\n';
  out << "dpmm.sigma0_scale = " << fmt_double(cfg.dpmm_sigma0_scale) << '\n';
  out << "dpmm.r0_scale = " << fmt_double(cfg.dpmm_r0_scale) << '\n';
  out << "dpmm.dirichlet_a = " << fmt_double(cfg.dpmm_dirichlet_a) << '\n';
  out << "dpmm.alpha_shape = " << fmt_double(cfg.dpmm_alpha_shape) << '\n';
  out << "dpmm.alpha_rate = " << fmt_double(cfg.dpmm_alpha_rate) << '\n';
  out << "dpmm.fixed_alpha = " << fmt_double(cfg.dpmm_fixed_alpha) << '\n';
  out << "clustering.iterations = " << cfg.clustering.n_iter << '\n';
  out << "clustering.burn_in = " << cfg.clustering.burn_in << '\n';
  out << "clustering.thin = " << cfg.clustering.thin << '\n';
  out << "clustering.label_moves = " << cfg.clustering.label_moves_per_sweep
      << '\n';
  out << "estimation.draws = " << cfg.estimation.n_draws << '\n';
  out << "estimation.burn_in = " << cfg.estimation.outcome_burn_in << '\n';
  out << "estimation.flex_burn_in = " << cfg.estimation.flex_burn_in << '\n';
  out << "selection.zeta = " << fmt_double(cfg.zeta) << '\n';
  const BalanceBounds b = cfg.effective_bounds();
  out << "selection.balance_lower = " << fmt_double(b.lower) << '\n';
  out << "selection.balance_upper = " << fmt_double(b.upper) << '\n';
  out << "selection.strategies = ";
  for (std::size_t i = 0; i < cfg.strategies.size(); ++i) {
    out << (i ? "," : "") << strategy_name(cfg.strategies[i]);
  }
  out << '\n';
  out << "partition.k_min = " << cfg.k_min << '\n';
  out << "partition.k_max = " << cfg.k_max << '\n';
  out << "baselines.enabled = ";
  {
    std::vector<std::string> on;
    if (cfg.baselines.lr) on.push_back("lr");
    if (cfg.baselines.ik) on.push_back("ik");
    if (!cfg.baselines.fixed_h.empty()) on.push_back("fixed");
    if (cfg.baselines.cv) on.push_back("cv");
    for (std::size_t i = 0; i < on.size(); ++i) {
      out << (i ? "," : "") << on[i];
    }
  }
  out << '\n';
  out << "baselines.fixed_h = ";
  for (std::size_t i = 0; i < cfg.baselines.fixed_h.size(); ++i) {
    out << (i ? "," : "") << fmt_double(cfg.baselines.fixed_h[i]);
  }
  out << '\n';
  out << "baselines.cv_delta = " << fmt_double(cfg.baselines.cv_delta) << '\n';
  out << "baselines.lr_alpha = " << fmt_double(cfg.baselines.lr_alpha) << '\n';
  out << "baselines.ik_kernel = "
      << (cfg.baselines.ik_kernel == IkKernel::triangular ? "triangular"
                                                          : "rectangular")
      << '\n';
  out << "report.bins = " << cfg.plot_bins << '\n';
  return out.str();
}

}  // namespace

RunOutput run_pipeline(const RunConfig& cfg) {
  cfg.validate();
  const fs::path dir(cfg.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    fail(ErrorCode::io, "cannot create output directory: " + dir.string());
  }

  std::vector<Cohort> cohorts;
  std::string mode;
  if (!cfg.input_csv.empty()) {
    mode = "analyze-csv";
    cohorts.push_back(
        load_cohort_csv(cfg.input_csv, cfg.input_x0, cfg.input_cat_cols));
  } else {
    mode = "analyze-simulated";
    StudyConfig study = cfg.study;
    study.sim.seed = cfg.seed;
    cohorts = simulate_study(study);
  }

  const std::size_t reps = cohorts.size();
  std::vector<ReplicateResult> results(reps);
  std::atomic<std::size_t> next{0};
  const std::vector<MethodSpec> specs = method_order(cfg);

  const auto worker = [&]() {
    for (;;) {
      const std::size_t r = next.fetch_add(1);
      if (r >= reps) break;
      try {
        results[r] = analyze_replicate(cohorts[r], cfg, r);
      } catch (const std::exception& e) {
        // analyze_replicate quarantines expected failures itself; this
        // guards against unexpected ones (e.g. allocation failure).
        ReplicateResult res;
        res.replicate = r;
        res.cohort = cohorts[r];
        res.ok = false;
        res.note = e.what();
        for (const MethodSpec& spec : specs) {
          res.methods.push_back(failed_outcome(spec.label, res.note));
        }
        results[r] = std::move(res);
      }
      write_replicate_artifacts(results[r], cfg);
    }
  };

  const int n_threads =
      std::max(1, std::min<int>(cfg.threads, static_cast<int>(reps)));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_threads));
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();
  }

  RunOutput output;
  output.table = build_comparison(results, specs);
  write_comparison_table(output.table, dir / "comparison_table.csv");
  write_per_replicate(results, dir / "per_replicate.csv");
  write_quarantine(results, dir / "quarantine.csv");
  write_forest(output.table, dir / "plot_forest.csv");
  write_scatter_plots(results[0], cfg, dir);
  write_binned_means(results[0].cohort.x, results[0].cohort.y,
                     results[0].cohort.t, cfg.plot_bins,
                     dir / "plot_binned_means.csv");
  {
    std::ofstream manifest = open_out(dir / "run_manifest.txt");
    manifest << manifest_text(cfg, mode);
  }
  output.replicates = std::move(results);
  return output;
}

void run_simulate(const RunConfig& cfg) {
  cfg.validate();
  const fs::path dir(cfg.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    fail(ErrorCode::io, "cannot create output directory: " + dir.string());
  }
  StudyConfig study = cfg.study;
  study.sim.seed = cfg.seed;
  const std::vector<Cohort> cohorts = simulate_study(study);
  for (std::size_t r = 0; r < cohorts.size(); ++r) {
    write_cohort_csv(cohorts[r],
                     (dir / ("rep_" + std::to_string(r) + ".csv")).string());
  }
  std::ofstream manifest = open_out(dir / "run_manifest.txt");
  manifest << manifest_text(cfg, "simulate");
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream stream(line);
  while (std::getline(stream, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::size_t find_column(const std::vector<std::string>& header,
                        const std::string& name, const std::string& file) {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  fail(ErrorCode::validation, file + " is missing column " + name);
}

}  // namespace

void run_report(const std::string& run_dir, int bins) {
  if (bins < 1) fail(ErrorCode::config, "report bins must be >= 1");
  const fs::path dir(run_dir);

  // Forest plot data from the comparison table.
  {
    std::ifstream in(dir / "comparison_table.csv");
    if (!in) {
      fail(ErrorCode::io,
           "cannot open " + (dir / "comparison_table.csv").string());
    }
    std::string line;
    if (!std::getline(in, line)) {
      fail(ErrorCode::validation, "comparison_table.csv is empty");
    }
    const std::vector<std::string> header = split_csv_line(line);
    const std::size_t i_est =
        find_column(header, "estimand", "comparison_table.csv");
    const std::size_t i_method =
        find_column(header, "method", "comparison_table.csv");
    const std::size_t i_median =
        find_column(header, "median", "comparison_table.csv");
    const std::size_t i_lower =
        find_column(header, "lower", "comparison_table.csv");
    const std::size_t i_upper =
        find_column(header, "upper", "comparison_table.csv");
    std::ofstream out = open_out(dir / "plot_forest.csv");
    out << "estimand,method,median,lower,upper\n";
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const std::vector<std::string> fields = split_csv_line(line);
      if (fields[i_median] == "NA") continue;
      out << fields[i_est] << ',' << fields[i_method] << ','
          << fields[i_median] << ',' << fields[i_lower] << ','
          << fields[i_upper] << '\n';
    }
  }

  // Cohort columns from the first replicate.
  std::vector<std::string> ids;
  std::vector<double> x, y;
  std::vector<std::uint8_t> t;
  {
    std::ifstream in(dir / "rep_0.csv");
    if (!in) fail(ErrorCode::io, "cannot open " + (dir / "rep_0.csv").string());
    std::string line;
    if (!std::getline(in, line)) {
      fail(ErrorCode::validation, "rep_0.csv is empty");
    }
    const std::vector<std::string> header = split_csv_line(line);
    const std::size_t i_id = find_column(header, "id", "rep_0.csv");
    const std::size_t i_x = find_column(header, "x", "rep_0.csv");
    const std::size_t i_t = find_column(header, "t", "rep_0.csv");
    const std::size_t i_y = find_column(header, "y", "rep_0.csv");
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const std::vector<std::string> fields = split_csv_line(line);
      ids.push_back(fields[i_id]);
      x.push_back(std::stod(fields[i_x]));
      t.push_back(fields[i_t] == "1" ? 1 : 0);
      y.push_back(std::stod(fields[i_y]));
    }
  }
  if (x.empty()) fail(ErrorCode::validation, "rep_0.csv has no data rows");

  // Selection flags for the scatter files.
  std::map<std::string, std::vector<std::uint8_t>> selected;
  {
    std::ifstream in(dir / "selection_rep0.csv");
    if (in) {
      std::map<std::string, std::size_t> index_of;
      for (std::size_t i = 0; i < ids.size(); ++i) index_of[ids[i]] = i;
      std::string line;
      std::getline(in, line);  // header
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        const std::vector<std::string> fields = split_csv_line(line);
        if (fields.size() < 2) continue;
        auto& flags = selected[fields[0]];
        if (flags.empty()) flags.assign(ids.size(), 0);
        const auto it = index_of.find(fields[1]);
        if (it != index_of.end()) flags[it->second] = 1;
      }
    }
  }
  for (const auto& [strategy, flags] : selected) {
    std::ofstream out =
        open_out(dir / ("plot_scatter_selection_" + strategy + ".csv"));
    out << "x,y,t,selected\n";
    for (std::size_t i = 0; i < x.size(); ++i) {
      out << fmt_double(x[i]) << ',' << fmt_double(y[i]) << ','
          << int(t[i]) << ',' << int(flags[i]) << '\n';
    }
  }

  write_binned_means(x, y, t, bins, dir / "plot_binned_means.csv");
}

}  // namespace rddclust
