#include "rddclust/bandwidth.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <utility>

#include "rddclust/error.hpp"

namespace rddclust {
namespace {

constexpr double kCurvatureFloor = 1e-8;

double quantile_type7(std::vector<double> values, double q) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n == 1) return values[0];
  const double h = q * static_cast<double>(n - 1);
  const auto lo = static_cast<std::size_t>(h);
  if (lo + 1 >= n) return values[n - 1];
  const double frac = h - static_cast<double>(lo);
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

struct SidePoints {
  std::vector<double> x;  // ascending
  std::vector<double> v;  // matched values
};

// Local linear prediction at `at` from the points in [first, last); falls
// back to the window mean when the x spread is degenerate. Returns false
// with fewer than 2 points.
bool local_linear_predict(const SidePoints& side, std::size_t first,
                          std::size_t last, double at, double* pred) {
  const std::size_t m = last - first;
  if (m < 2) return false;
  double sx = 0.0, sv = 0.0;
  for (std::size_t j = first; j < last; ++j) {
    sx += side.x[j];
    sv += side.v[j];
  }
  const double xbar = sx / static_cast<double>(m);
  const double vbar = sv / static_cast<double>(m);
  double sxx = 0.0, sxv = 0.0;
  for (std::size_t j = first; j < last; ++j) {
    const double dx = side.x[j] - xbar;
    sxx += dx * dx;
    sxv += dx * (side.v[j] - vbar);
  }
  if (sxx <= 1e-300) {
    *pred = vbar;
    return true;
  }
  const double slope = sxv / sxx;
  *pred = vbar + slope * (at - xbar);
  return true;
}

SidePoints collect_side(std::span<const double> xc, std::span<const double> v,
                        std::span<const std::uint8_t> z, bool above) {
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < xc.size(); ++i) {
    if ((z[i] != 0) == above) order.push_back(i);
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return xc[a] < xc[b];
  });
  SidePoints side;
  side.x.reserve(order.size());
  side.v.reserve(order.size());
  for (std::size_t i : order) {
    side.x.push_back(xc[i]);
    side.v.push_back(v[i]);
  }
  return side;
}

}  // namespace

std::string bandwidth_method_name(BandwidthMethod m) {
  switch (m) {
    case BandwidthMethod::cv: return "cv";
    case BandwidthMethod::ik: return "ik";
    case BandwidthMethod::lr: return "lr";
    case BandwidthMethod::fixed: return "fixed";
  }
  fail(ErrorCode::generic, "unknown bandwidth method");
}

CvEval cv_criterion(std::span<const double> xc, std::span<const double> v,
                    std::span<const std::uint8_t> z, double h, double delta) {
  const std::size_t n = xc.size();
  if (v.size() != n || z.size() != n) {
    fail(ErrorCode::validation,
         "cv_criterion inputs must have matching lengths");
  }
  if (!(h > 0.0)) fail(ErrorCode::config, "bandwidth must be positive");
  if (!(delta >= 0.5) || !(delta < 1.0)) {
    fail(ErrorCode::config, "cv delta must lie in [0.5, 1)");
  }

  const SidePoints below = collect_side(xc, v, z, false);
  const SidePoints above = collect_side(xc, v, z, true);
  if (below.x.empty() || above.x.empty()) {
    fail(ErrorCode::validation,
         "cv_criterion needs units on both sides of the threshold");
  }

  // Evaluation band: from the delta-quantile of the below side to the
  // (1-delta)-quantile of the above side — the units closest to the
  // threshold on each side.
  const double band_lo = quantile_type7(below.x, delta);
  const double band_hi = quantile_type7(above.x, 1.0 - delta);

  CvEval eval;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (xc[i] < band_lo || xc[i] > band_hi) continue;
    const SidePoints& side = z[i] ? above : below;
    std::size_t first = 0;
    std::size_t last = 0;
    if (z[i]) {
      // Fit on same-side points strictly to the right: (x_i, x_i + h].
      first = static_cast<std::size_t>(
          std::upper_bound(side.x.begin(), side.x.end(), xc[i]) -
          side.x.begin());
      last = static_cast<std::size_t>(
          std::upper_bound(side.x.begin(), side.x.end(), xc[i] + h) -
          side.x.begin());
    } else {
      // Fit on same-side points strictly to the left: [x_i - h, x_i).
      first = static_cast<std::size_t>(
          std::lower_bound(side.x.begin(), side.x.end(), xc[i] - h) -
          side.x.begin());
      last = static_cast<std::size_t>(
          std::lower_bound(side.x.begin(), side.x.end(), xc[i]) -
          side.x.begin());
    }
    double pred = 0.0;
    if (!local_linear_predict(side, first, last, xc[i], &pred)) {
      ++eval.skipped;
      continue;
    }
    const double err = v[i] - pred;
    total += err * err;
    ++eval.evaluated;
  }
  if (eval.evaluated == 0) {
    fail(ErrorCode::estimation,
         "cv criterion at h=" + std::to_string(h) +
             ": no unit had enough one-sided neighbours");
  }
  eval.criterion = total / static_cast<double>(eval.evaluated);
  return eval;
}

namespace {

// Evaluates the criterion over the grid and returns the curve plus the
// argmin index (ties toward the smaller h; the grid is already ascending).
std::pair<std::vector<CvPoint>, std::size_t> cv_curve_argmin(
    std::span<const double> xc, std::span<const double> v,
    std::span<const std::uint8_t> z, const std::vector<double>& grid,
    double delta) {
  std::vector<CvPoint> curve;
  curve.reserve(grid.size());
  std::size_t best = 0;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const CvEval e = cv_criterion(xc, v, z, grid[g], delta);
    curve.push_back({grid[g], e.criterion, e.evaluated, e.skipped});
    if (e.criterion < curve[best].criterion) best = g;
  }
  return {std::move(curve), best};
}

bool treatment_degenerate(std::span<const std::uint8_t> t,
                          std::span<const std::uint8_t> z) {
  for (int side = 0; side < 2; ++side) {
    bool seen = false;
    std::uint8_t ref = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      if ((z[i] != 0) != (side == 1)) continue;
      if (!seen) {
        ref = t[i];
        seen = true;
      } else if (t[i] != ref) {
        return false;
      }
    }
  }
  return true;
}

}  // namespace

BandwidthResult cv_select(std::span<const double> xc,
                          std::span<const double> y,
                          std::span<const std::uint8_t> t,
                          std::span<const std::uint8_t> z,
                          std::span<const double> h_grid, double delta) {
  if (h_grid.empty()) fail(ErrorCode::config, "bandwidth grid is empty");
  std::vector<double> grid(h_grid.begin(), h_grid.end());
  std::sort(grid.begin(), grid.end());
  for (double h : grid) {
    if (!(h > 0.0) || !std::isfinite(h)) {
      fail(ErrorCode::config, "bandwidth grid values must be positive");
    }
  }

  BandwidthResult result;
  result.method = BandwidthMethod::cv;
  auto [curve_y, best_y] = cv_curve_argmin(xc, y, z, grid, delta);
  result.cv_curve = std::move(curve_y);
  double h = grid[best_y];

  if (!t.empty()) {
    if (t.size() != xc.size()) {
      fail(ErrorCode::validation,
           "treatment vector length does not match the cohort");
    }
    if (treatment_degenerate(t, z)) {
      result.fallback = true;  // outcome-only choice
    } else {
      std::vector<double> t_real(t.size());
      for (std::size_t i = 0; i < t.size(); ++i) {
        t_real[i] = t[i] ? 1.0 : 0.0;
      }
      auto [curve_t, best_t] = cv_curve_argmin(xc, t_real, z, grid, delta);
      result.cv_curve_t = std::move(curve_t);
      h = std::min(h, grid[best_t]);
    }
  }

  result.h = h;
  result.unit_indices = subset_by_bandwidth(xc, h);
  return result;
}

namespace {

double simpson(double (*f)(double), double lo, double hi, int panels) {
  const double step = (hi - lo) / (2.0 * panels);
  double sum = f(lo) + f(hi);
  for (int i = 1; i < 2 * panels; ++i) {
    sum += f(lo + step * i) * (i % 2 == 1 ? 4.0 : 2.0);
  }
  return sum * step / 3.0;
}

double kernel_rect(double) { return 1.0; }
double kernel_tri(double u) { return 1.0 - u; }

}  // namespace

double ck_constant(IkKernel kernel) {
  double (*k)(double) = kernel == IkKernel::rectangular ? kernel_rect
                                                        : kernel_tri;
  // Moments of the one-sided kernel and of the boundary local-linear
  // equivalent kernel K*(u) = K(u) (nu2 - nu1 u) / (nu0 nu2 - nu1^2):
  // bias factor B = int u^2 K*(u) du, variance factor V = int K*(u)^2 du,
  // and the AMSE-minimizing constant is (V / B^2)^{1/5}.
  static thread_local double (*current)(double) = nullptr;
  current = k;
  const auto m0 = [](double u) { return current(u); };
  const auto m1 = [](double u) { return u * current(u); };
  const auto m2 = [](double u) { return u * u * current(u); };
  const auto m3 = [](double u) { return u * u * u * current(u); };
  const int panels = 2000;
  const double nu0 = simpson(m0, 0.0, 1.0, panels);
  const double nu1 = simpson(m1, 0.0, 1.0, panels);
  const double nu2 = simpson(m2, 0.0, 1.0, panels);
  const double nu3 = simpson(m3, 0.0, 1.0, panels);
  const double denom = nu0 * nu2 - nu1 * nu1;
  static thread_local double s_nu1 = 0.0;
  static thread_local double s_nu2 = 0.0;
  s_nu1 = nu1;
  s_nu2 = nu2;
  const auto sq = [](double u) {
    const double w = (s_nu2 - s_nu1 * u) * current(u);
    return w * w;
  };
  const double mu = simpson(sq, 0.0, 1.0, panels);
  const double b = (nu2 * nu2 - nu1 * nu3) / denom;
  const double v = mu / (denom * denom);
  return std::pow(v / (b * b), 0.2);
}

double ik_plugin_h(const IkComponents& c, std::size_t n, double fallback_h,
                   bool* fallback) {
  if (!(c.f_x0 > 0.0)) {
    fail(ErrorCode::estimation,
         "forcing-variable density at the threshold is not positive");
  }
  if (c.sigma2_below < 0.0 || c.sigma2_above < 0.0) {
    fail(ErrorCode::estimation, "negative variance plug-in component");
  }
  const double curvature = c.m2_below + c.m2_above;
  if (std::abs(curvature) < kCurvatureFloor) {
    if (fallback != nullptr) *fallback = true;
    return fallback_h;
  }
  if (fallback != nullptr) *fallback = false;
  const double ratio = (c.sigma2_below + c.sigma2_above) /
                       (c.f_x0 * curvature * curvature);
  return c.ck * std::pow(ratio, 0.2) *
         std::pow(static_cast<double>(n), -0.2);
}

namespace {

// Residual variance of a local linear fit over side units within the pilot
// window (widened to the 5 nearest units when the window is too sparse).
double side_residual_variance(const SidePoints& side, double pilot_h) {
  std::vector<double> dist;
  dist.reserve(side.x.size());
  for (double x : side.x) dist.push_back(std::abs(x));
  std::vector<double> sorted_dist = dist;
  std::sort(sorted_dist.begin(), sorted_dist.end());
  double window = pilot_h;
  if (sorted_dist.size() >= 5) window = std::max(window, sorted_dist[4]);

  std::vector<std::size_t> in;
  for (std::size_t i = 0; i < side.x.size(); ++i) {
    if (dist[i] <= window) in.push_back(i);
  }
  const std::size_t m = in.size();
  double sx = 0.0, sv = 0.0;
  for (std::size_t i : in) {
    sx += side.x[i];
    sv += side.v[i];
  }
  const double xbar = sx / static_cast<double>(m);
  const double vbar = sv / static_cast<double>(m);
  double sxx = 0.0, sxv = 0.0, svv = 0.0;
  for (std::size_t i : in) {
    const double dx = side.x[i] - xbar;
    const double dv = side.v[i] - vbar;
    sxx += dx * dx;
    sxv += dx * dv;
    svv += dv * dv;
  }
  if (m >= 3 && sxx > 1e-300) {
    const double rss = svv - sxv * sxv / sxx;
    return std::max(rss, 0.0) / static_cast<double>(m - 2);
  }
  if (m >= 2) return svv / static_cast<double>(m - 1);
  return 0.0;
}

// Second derivative at the threshold from a one-sided quartic fit.
double side_curvature(const SidePoints& side) {
  const auto m = static_cast<Eigen::Index>(side.x.size());
  Eigen::MatrixXd design(m, 5);
  Eigen::VectorXd rhs(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double x = side.x[static_cast<std::size_t>(i)];
    double p = 1.0;
    for (int j = 0; j < 5; ++j) {
      design(i, j) = p;
      p *= x;
    }
    rhs(i) = side.v[static_cast<std::size_t>(i)];
  }
  const Eigen::VectorXd coef = design.colPivHouseholderQr().solve(rhs);
  return 2.0 * coef(2);
}

}  // namespace

BandwidthResult ik_bandwidth(std::span<const double> xc,
                             std::span<const double> y,
                             std::span<const std::uint8_t> z,
                             IkKernel kernel) {
  const std::size_t n = xc.size();
  if (y.size() != n || z.size() != n) {
    fail(ErrorCode::validation,
         "ik_bandwidth inputs must have matching lengths");
  }
  const SidePoints below = collect_side(xc, y, z, false);
  const SidePoints above = collect_side(xc, y, z, true);
  if (below.x.size() < 20 || above.x.size() < 20) {
    fail(ErrorCode::validation,
         "plug-in bandwidth needs at least 20 units on each side (got " +
             std::to_string(below.x.size()) + " below, " +
             std::to_string(above.x.size()) + " above)");
  }

  // Silverman's rule for the pilot bandwidth over all centred x.
  std::vector<double> all_x(xc.begin(), xc.end());
  double mean = std::accumulate(all_x.begin(), all_x.end(), 0.0) /
                static_cast<double>(n);
  double ss = 0.0;
  for (double x : all_x) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  const double iqr =
      quantile_type7(all_x, 0.75) - quantile_type7(all_x, 0.25);
  double spread = sd;
  if (iqr > 0.0) spread = std::min(sd, iqr / 1.34);
  if (!(spread > 0.0)) {
    fail(ErrorCode::estimation, "forcing variable has zero spread");
  }
  const double pilot_h =
      0.9 * spread * std::pow(static_cast<double>(n), -0.2);

  // Gaussian kernel density of xc at the threshold (xc = 0).
  double density = 0.0;
  for (double x : all_x) {
    const double u = x / pilot_h;
    density += std::exp(-0.5 * u * u);
  }
  density /= static_cast<double>(n) * pilot_h * std::sqrt(2.0 * M_PI);

  IkComponents comp;
  comp.f_x0 = density;
  comp.sigma2_below = side_residual_variance(below, pilot_h);
  comp.sigma2_above = side_residual_variance(above, pilot_h);
  comp.m2_below = side_curvature(below);
  comp.m2_above = side_curvature(above);
  comp.ck = ck_constant(kernel);

  const auto [min_it, max_it] = std::minmax_element(all_x.begin(), all_x.end());
  const double fallback_h = (*max_it - *min_it) / 2.0;

  BandwidthResult result;
  result.method = BandwidthMethod::ik;
  result.ik = comp;
  result.h = ik_plugin_h(comp, n, fallback_h, &result.fallback);
  result.unit_indices = subset_by_bandwidth(xc, result.h);
  return result;
}

double rank_sum_pvalue(std::span<const double> group0,
                       std::span<const double> group1) {
  const std::size_t n0 = group0.size();
  const std::size_t n1 = group1.size();
  if (n0 == 0 || n1 == 0) return 1.0;

  struct Tagged {
    double value;
    bool in_group1;
  };
  std::vector<Tagged> all;
  all.reserve(n0 + n1);
  for (double v : group0) all.push_back({v, false});
  for (double v : group1) all.push_back({v, true});
  std::sort(all.begin(), all.end(),
            [](const Tagged& a, const Tagged& b) { return a.value < b.value; });

  const std::size_t total = n0 + n1;
  double rank_sum1 = 0.0;
  double tie_term = 0.0;
  std::size_t i = 0;
  while (i < total) {
    std::size_t j = i;
    while (j < total && all[j].value == all[i].value) ++j;
    // Midrank for the tie run [i, j).
    const double rank =
        (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (all[k].in_group1) rank_sum1 += rank;
    }
    const auto run = static_cast<double>(j - i);
    tie_term += run * run * run - run;
    i = j;
  }

  const double dn0 = static_cast<double>(n0);
  const double dn1 = static_cast<double>(n1);
  const double dn = static_cast<double>(total);
  const double mean = dn1 * (dn + 1.0) / 2.0;
  const double variance =
      dn0 * dn1 / 12.0 * ((dn + 1.0) - tie_term / (dn * (dn - 1.0)));
  if (!(variance > 0.0)) return 1.0;  // every value tied
  const double zstat =
      std::max(std::abs(rank_sum1 - mean) - 0.5, 0.0) / std::sqrt(variance);
  return std::min(std::erfc(zstat / std::sqrt(2.0)), 1.0);
}

BandwidthResult lr_window(std::span<const double> xc,
                          std::span<const std::uint8_t> z,
                          const std::vector<std::vector<double>>& covariates,
                          double alpha_level, std::span<const double> h_grid) {
  const std::size_t n = xc.size();
  if (z.size() != n) {
    fail(ErrorCode::validation, "lr_window inputs must have matching lengths");
  }
  if (covariates.empty()) {
    fail(ErrorCode::validation, "lr_window needs at least one covariate");
  }
  for (const auto& col : covariates) {
    if (col.size() != n) {
      fail(ErrorCode::validation,
           "covariate column length does not match the cohort");
    }
  }
  if (!(alpha_level >= 0.0) || !(alpha_level <= 1.0)) {
    fail(ErrorCode::config, "alpha_level must lie in [0, 1]");
  }
  if (h_grid.empty()) fail(ErrorCode::config, "window grid is empty");
  std::vector<double> grid(h_grid.begin(), h_grid.end());
  std::sort(grid.begin(), grid.end());
  for (double h : grid) {
    if (!(h > 0.0) || !std::isfinite(h)) {
      fail(ErrorCode::config, "window grid values must be positive");
    }
  }

  BandwidthResult result;
  result.method = BandwidthMethod::lr;
  result.lr_trace.reserve(grid.size());

  bool have_pass = false;
  double best_h = 0.0;
  bool stopped = false;
  bool first_feasible_seen = false;
  double first_feasible_h = 0.0;
  for (double h : grid) {
    std::vector<std::size_t> in;
    std::size_t n_above = 0;
    for (std::size_t u = 0; u < n; ++u) {
      if (std::abs(xc[u]) <= h) {
        in.push_back(u);
        n_above += z[u] ? 1u : 0u;
      }
    }
    const std::size_t n_below = in.size() - n_above;
    if (n_above < 2 || n_below < 2) {
      result.lr_trace.push_back(
          {h, std::numeric_limits<double>::quiet_NaN(), true});
      continue;
    }
    double min_p = 1.0;
    for (const auto& col : covariates) {
      std::vector<double> g0, g1;
      g0.reserve(n_below);
      g1.reserve(n_above);
      for (std::size_t u : in) {
        (z[u] ? g1 : g0).push_back(col[u]);
      }
      min_p = std::min(min_p, rank_sum_pvalue(g0, g1));
    }
    result.lr_trace.push_back({h, min_p, false});

    if (stopped) continue;  // keep the trace complete past the stop point
    if (!first_feasible_seen) {
      first_feasible_seen = true;
      first_feasible_h = h;
    }
    if (min_p > alpha_level) {
      have_pass = true;
      best_h = h;
    } else {
      stopped = true;
    }
  }

  if (!first_feasible_seen) {
    fail(ErrorCode::estimation,
         "every candidate window left fewer than 2 units on a side");
  }
  if (have_pass) {
    result.h = best_h;
    result.fallback = false;
  } else {
    result.h = first_feasible_h;
    result.fallback = true;  // even the smallest feasible window imbalanced
  }
  result.unit_indices = subset_by_bandwidth(xc, result.h);
  return result;
}

std::vector<std::size_t> subset_by_bandwidth(std::span<const double> xc,
                                             double h) {
  if (!(h > 0.0)) fail(ErrorCode::config, "bandwidth must be positive");
  std::vector<std::size_t> indices;
  std::size_t n_above = 0;
  for (std::size_t i = 0; i < xc.size(); ++i) {
    if (std::abs(xc[i]) <= h) {
      indices.push_back(i);
      n_above += xc[i] >= 0.0 ? 1u : 0u;
    }
  }
  if (indices.empty() || n_above == 0 || n_above == indices.size()) {
    fail(ErrorCode::estimation,
         "window h=" + std::to_string(h) +
             " leaves no units on one side of the threshold");
  }
  return indices;
}

BandwidthResult fixed_bandwidth(std::span<const double> xc, double h) {
  BandwidthResult result;
  result.method = BandwidthMethod::fixed;
  result.h = h;
  result.unit_indices = subset_by_bandwidth(xc, h);
  return result;
}

std::vector<double> geometric_grid(double lo, double hi, std::size_t count) {
  if (!(lo > 0.0) || !(hi > lo)) {
    fail(ErrorCode::config, "grid endpoints must satisfy 0 < lo < hi");
  }
  if (count < 2) fail(ErrorCode::config, "grid needs at least 2 points");
  std::vector<double> grid(count);
  const double ratio =
      std::pow(hi / lo, 1.0 / static_cast<double>(count - 1));
  double value = lo;
  for (std::size_t i = 0; i < count; ++i) {
    grid[i] = value;
    value *= ratio;
  }
  grid.back() = hi;
  return grid;
}

std::vector<double> default_cv_grid() { return geometric_grid(0.01, 0.30, 30); }

std::vector<double> default_lr_grid() { return geometric_grid(0.01, 0.25, 12); }

}  // namespace rddclust
