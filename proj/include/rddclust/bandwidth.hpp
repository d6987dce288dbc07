#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace rddclust {

enum class BandwidthMethod { cv, ik, lr, fixed };

std::string bandwidth_method_name(BandwidthMethod m);

enum class IkKernel { rectangular, triangular };

struct CvPoint {
  double h = 0.0;
  double criterion = 0.0;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;
};

struct IkComponents {
  double f_x0 = 0.0;        // forcing-variable density at the threshold
  double sigma2_below = 0.0;
  double sigma2_above = 0.0;
  double m2_below = 0.0;    // one-sided second derivative of the regression
  double m2_above = 0.0;
  double ck = 0.0;          // kernel constant
};

struct LrPoint {
  double h = 0.0;
  double min_p = 0.0;
  bool skipped = false;  // window left a side with < 2 units
};

struct BandwidthResult {
  BandwidthMethod method = BandwidthMethod::fixed;
  double h = 0.0;
  std::vector<std::size_t> unit_indices;  // units with |xc| <= h
  bool fallback = false;  // see each selector's degenerate path
  std::vector<CvPoint> cv_curve;    // populated by cv_select (outcome)
  std::vector<CvPoint> cv_curve_t;  // populated by fuzzy cv_select (treatment)
  IkComponents ik;                  // populated by ik_bandwidth
  std::vector<LrPoint> lr_trace;    // populated by lr_window
};

struct CvEval {
  double criterion = 0.0;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;
};

//! Cross-validation criterion for bandwidth h: for every unit inside the
//! delta-quantile band around the threshold, predicts its value from a local
//! linear fit over same-side units within distance h strictly on the side
//! away from the threshold (mimicking boundary prediction), and averages the
//! squared errors. Units with fewer than 2 usable neighbours are skipped;
//! all skipped is an error. delta in [0.5, 1).
CvEval cv_criterion(std::span<const double> xc, std::span<const double> v,
                    std::span<const std::uint8_t> z, double h, double delta);

//! Grid argmin of cv_criterion on the outcome (ties broken toward smaller
//! h). When a non-degenerate treatment vector is supplied the criterion is
//! also minimized over t and the smaller of the two selected bandwidths is
//! returned; a treatment that is constant within each side falls back to the
//! outcome-only choice (fallback flag set).
BandwidthResult cv_select(std::span<const double> xc,
                          std::span<const double> y,
                          std::span<const std::uint8_t> t,
                          std::span<const std::uint8_t> z,
                          std::span<const double> h_grid, double delta = 0.5);

//! Kernel constant (V/B^2)^{1/5} of the boundary local-linear equivalent
//! kernel, evaluated by quadrature.
double ck_constant(IkKernel kernel);

//! Plug-in bandwidth from precomputed components:
//! h = C_K * ((s2b + s2a) / (f * (m2b + m2a)^2))^{1/5} * n^{-1/5}.
//! A curvature sum below 1e-8 signals an unbounded bandwidth; the fallback
//! value is returned and *fallback set.
double ik_plugin_h(const IkComponents& c, std::size_t n, double fallback_h,
                   bool* fallback);

//! Plug-in bandwidth with components estimated from the data: density at the
//! threshold by Gaussian KDE (Silverman's rule), one-sided residual
//! variances from local linear fits in a pilot window, and one-sided
//! curvature from quartic polynomial fits. Requires >= 20 units per side.
BandwidthResult ik_bandwidth(std::span<const double> xc,
                             std::span<const double> y,
                             std::span<const std::uint8_t> z, IkKernel kernel);

//! Iterative covariate-balance window: starting from the smallest window,
//! tests every covariate for a location shift across the threshold
//! (rank-sum, normal approximation) and keeps growing while the minimum
//! p-value stays above alpha_level. Returns the largest passing window, or
//! the smallest feasible one with the fallback flag when even it fails.
BandwidthResult lr_window(std::span<const double> xc,
                          std::span<const std::uint8_t> z,
                          const std::vector<std::vector<double>>& covariates,
                          double alpha_level, std::span<const double> h_grid);

//! Indices of units with |xc| <= h; errors when either side is empty.
std::vector<std::size_t> subset_by_bandwidth(std::span<const double> xc,
                                             double h);

//! BandwidthResult wrapper for a fixed window.
BandwidthResult fixed_bandwidth(std::span<const double> xc, double h);

//! count log-spaced values from lo to hi inclusive.
std::vector<double> geometric_grid(double lo, double hi, std::size_t count);

std::vector<double> default_cv_grid();  // 30 points, 0.01 .. 0.30
std::vector<double> default_lr_grid();  // 12 points, 0.01 .. 0.25

//! Two-sided rank-sum p-value (normal approximation with tie and continuity
//! corrections) for a location shift between the two groups.
double rank_sum_pvalue(std::span<const double> group0,
                       std::span<const double> group1);

}  // namespace rddclust
