#pragma once

// Shared helpers for the test binaries: summary statistics, an independent
// type-7 quantile, a Kolmogorov-Smirnov test, the adjusted Rand index, and
// closed-form Beta moments. Everything here is deliberately written from
// the textbook definitions, independent of the library implementations it
// is used to check.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <utility>
#include <vector>

namespace testsupport {

inline double mean(const std::vector<double>& v) {
  double total = 0.0;
  for (double x : v) total += x;
  return total / static_cast<double>(v.size());
}

inline double sample_variance(const std::vector<double>& v) {
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return ss / static_cast<double>(v.size() - 1);
}

inline double central_moment(const std::vector<double>& v, int order) {
  const double m = mean(v);
  double total = 0.0;
  for (double x : v) total += std::pow(x - m, order);
  return total / static_cast<double>(v.size());
}

// Standard error of the sample mean.
inline double se_mean(const std::vector<double>& v) {
  return std::sqrt(sample_variance(v) / static_cast<double>(v.size()));
}

// Approximate standard error of the sample variance given the population
// central moments mu4 and sigma2 (delta method).
inline double se_variance(double mu4, double sigma2, std::size_t n) {
  return std::sqrt((mu4 - sigma2 * sigma2) / static_cast<double>(n));
}

inline double quantile7(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n == 1) return v[0];
  const double h = q * static_cast<double>(n - 1);
  const auto lo = static_cast<std::size_t>(h);
  if (lo + 1 >= n) return v[n - 1];
  return v[lo] + (h - static_cast<double>(lo)) * (v[lo + 1] - v[lo]);
}

// Kolmogorov-Smirnov statistic of a sample against a continuous CDF.
inline double ks_statistic(std::vector<double> sample,
                           const std::function<double(double)>& cdf) {
  std::sort(sample.begin(), sample.end());
  const auto n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max(d, std::abs(f - static_cast<double>(i) / n));
    d = std::max(d, std::abs(static_cast<double>(i + 1) / n - f));
  }
  return d;
}

// Asymptotic KS p-value (Marsaglia-Tsang-Wang style series).
inline double ks_pvalue(double d, std::size_t n) {
  const double sn = std::sqrt(static_cast<double>(n));
  const double lambda = (sn + 0.12 + 0.11 / sn) * d;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term =
        std::exp(-2.0 * k * k * lambda * lambda) * (k % 2 == 1 ? 1.0 : -1.0);
    sum += term;
    if (std::abs(term) < 1e-12) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

// Adjusted Rand index between two hard labelings.
inline double adjusted_rand_index(const std::vector<int>& a,
                                  const std::vector<int>& b) {
  const std::size_t n = a.size();
  std::map<int, std::map<int, double>> table;
  std::map<int, double> row_sum, col_sum;
  for (std::size_t i = 0; i < n; ++i) {
    table[a[i]][b[i]] += 1.0;
    row_sum[a[i]] += 1.0;
    col_sum[b[i]] += 1.0;
  }
  const auto choose2 = [](double m) { return m * (m - 1.0) / 2.0; };
  double index = 0.0;
  for (const auto& [ra, row] : table) {
    for (const auto& [cb, count] : row) index += choose2(count);
  }
  double rows = 0.0, cols = 0.0;
  for (const auto& [k, v] : row_sum) rows += choose2(v);
  for (const auto& [k, v] : col_sum) cols += choose2(v);
  const double total = choose2(static_cast<double>(n));
  const double expected = rows * cols / total;
  const double max_index = (rows + cols) / 2.0;
  if (max_index == expected) return 1.0;  // both labelings trivial
  return (index - expected) / (max_index - expected);
}

// Raw and central moments of Beta(a, b).
inline double beta_raw_moment(double a, double b, int k) {
  double value = 1.0;
  for (int i = 0; i < k; ++i) value *= (a + i) / (a + b + i);
  return value;
}

inline double beta_mean(double a, double b) { return a / (a + b); }

inline double beta_variance(double a, double b) {
  return a * b / ((a + b) * (a + b) * (a + b + 1.0));
}

// Central fourth moment from raw moments.
inline double beta_mu4(double a, double b) {
  const double m1 = beta_raw_moment(a, b, 1);
  const double m2 = beta_raw_moment(a, b, 2);
  const double m3 = beta_raw_moment(a, b, 3);
  const double m4 = beta_raw_moment(a, b, 4);
  return m4 - 4.0 * m3 * m1 + 6.0 * m2 * m1 * m1 - 3.0 * m1 * m1 * m1 * m1;
}

}  // namespace testsupport
