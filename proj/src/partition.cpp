#include "rddclust/partition.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rddclust/error.hpp"
#include "rddclust/kernels.hpp"

namespace rddclust {

PosteriorSimilarityMatrix compute_psm(const PartitionChain& chain) {
  const std::size_t n = chain.n;
  if (n == 0 || chain.draws.empty())
    fail(ErrorCode::validation, "similarity matrix needs a non-empty chain");
  for (const auto& draw : chain.draws)
    if (draw.size() != n)
      fail(ErrorCode::validation, "chain draw has wrong length");

  std::vector<std::uint32_t> counts(n * n, 0);
  const auto& ops = kernels::ops();
  for (const auto& draw : chain.draws)
    ops.coclust_accumulate(draw.data(), n, counts.data());

  PosteriorSimilarityMatrix psm;
  psm.n = n;
  psm.p.assign(n * n, 0.0);
  const double denom = static_cast<double>(chain.draws.size());
  for (std::size_t l = 0; l < n; ++l) {
    psm.p[l * n + l] = 1.0;
    for (std::size_t v = l + 1; v < n; ++v) {
      const double p = static_cast<double>(counts[l * n + v]) / denom;
      psm.p[l * n + v] = p;
      psm.p[v * n + l] = p;
    }
  }
  return psm;
}

std::vector<std::vector<std::int32_t>> Partition::members() const {
  std::vector<std::vector<std::int32_t>> out(
      static_cast<std::size_t>(n_clusters));
  for (std::size_t i = 0; i < labels.size(); ++i)
    out[static_cast<std::size_t>(labels[i] - 1)].push_back(
        static_cast<std::int32_t>(i));
  return out;
}

namespace {

struct NearestInfo {
  std::vector<std::int32_t> nearest_pos;  // position within the medoid list
  std::vector<double> d1;
  std::vector<double> d2;
};

NearestInfo nearest_medoids(const std::vector<double>& d, std::size_t n,
                            const std::vector<std::size_t>& medoids) {
  NearestInfo info;
  info.nearest_pos.assign(n, 0);
  info.d1.assign(n, std::numeric_limits<double>::infinity());
  info.d2.assign(n, std::numeric_limits<double>::infinity());
  for (std::size_t mp = 0; mp < medoids.size(); ++mp) {
    const double* row = d.data() + medoids[mp] * n;
    for (std::size_t i = 0; i < n; ++i) {
      const double dist = row[i];
      if (dist < info.d1[i]) {
        info.d2[i] = info.d1[i];
        info.d1[i] = dist;
        info.nearest_pos[i] = static_cast<std::int32_t>(mp);
      } else if (dist < info.d2[i]) {
        info.d2[i] = dist;
      }
    }
  }
  return info;
}

}  // namespace

PamResult pam(const std::vector<double>& d, std::size_t n, std::size_t k) {
  if (n == 0) fail(ErrorCode::validation, "pam: empty dissimilarity matrix");
  if (d.size() != n * n)
    fail(ErrorCode::validation, "pam: dissimilarity matrix must be n x n");
  if (k < 1 || k > n)
    fail(ErrorCode::validation, "pam: k must lie in [1, n]");
  for (std::size_t i = 0; i < n; ++i) {
    if (d[i * n + i] != 0.0)
      fail(ErrorCode::validation, "pam: dissimilarity diagonal must be zero");
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = d[i * n + j];
      if (!(v >= 0.0) || v != d[j * n + i])
        fail(ErrorCode::validation,
             "pam: dissimilarities must be symmetric and non-negative");
    }
  }

  std::vector<std::size_t> medoids;
  medoids.reserve(k);
  std::vector<char> is_medoid(n, 0);

  // BUILD: first medoid minimizes total dissimilarity, the rest greedily
  // maximize the decrease; ties resolve to the lowest index.
  {
    std::size_t best = 0;
    double best_td = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      double td = 0.0;
      const double* row = d.data() + j * n;
      for (std::size_t i = 0; i < n; ++i) td += row[i];
      if (td < best_td) {
        best_td = td;
        best = j;
      }
    }
    medoids.push_back(best);
    is_medoid[best] = 1;
  }
  std::vector<double> d1(n);
  for (std::size_t i = 0; i < n; ++i) d1[i] = d[medoids[0] * n + i];
  while (medoids.size() < k) {
    std::size_t best = n;
    double best_gain = -1.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (is_medoid[j]) continue;
      double gain = 0.0;
      const double* row = d.data() + j * n;
      for (std::size_t i = 0; i < n; ++i)
        gain += std::max(0.0, d1[i] - row[i]);
      if (gain > best_gain) {
        best_gain = gain;
        best = j;
      }
    }
    medoids.push_back(best);
    is_medoid[best] = 1;
    const double* row = d.data() + best * n;
    for (std::size_t i = 0; i < n; ++i) d1[i] = std::min(d1[i], row[i]);
    std::sort(medoids.begin(), medoids.end());
  }

  // SWAP: apply the steepest-improvement swap until no swap lowers the
  // total dissimilarity. Per candidate j the change for removing each
  // medoid is accumulated in one pass over the data.
  std::vector<double> corr(k);
  for (int iter = 0; iter < 500 && k < n; ++iter) {
    const auto info = nearest_medoids(d, n, medoids);
    double best_delta = -1e-12;
    std::size_t best_j = n, best_mp = k;
    for (std::size_t j = 0; j < n; ++j) {
      if (is_medoid[j]) continue;
      const double* row = d.data() + j * n;
      double g0 = 0.0;
      std::fill(corr.begin(), corr.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const double dij = row[i];
        const double share = std::min(0.0, dij - info.d1[i]);
        g0 += share;
        corr[static_cast<std::size_t>(info.nearest_pos[i])] +=
            std::min(dij, info.d2[i]) - info.d1[i] - share;
      }
      for (std::size_t mp = 0; mp < k; ++mp) {
        const double delta = g0 + corr[mp];
        if (delta < best_delta) {
          best_delta = delta;
          best_j = j;
          best_mp = mp;
        }
      }
    }
    if (best_j == n) break;
    is_medoid[medoids[best_mp]] = 0;
    is_medoid[best_j] = 1;
    medoids[best_mp] = best_j;
    std::sort(medoids.begin(), medoids.end());
  }

  PamResult result;
  result.medoids = medoids;
  result.partition.n_clusters = static_cast<std::int32_t>(k);
  result.partition.labels.resize(n);
  const auto info = nearest_medoids(d, n, medoids);
  for (std::size_t i = 0; i < n; ++i) {
    result.partition.labels[i] = info.nearest_pos[i] + 1;
    result.total_dissimilarity += info.d1[i];
  }
  return result;
}

double partition_score(const PosteriorSimilarityMatrix& psm,
                       const std::vector<std::int32_t>& labels) {
  if (labels.size() != psm.n)
    fail(ErrorCode::validation, "partition_score: label length mismatch");
  const auto& ops = kernels::ops();
  double score = 0.0;
  for (std::size_t l = 0; l + 1 < psm.n; ++l)
    score += ops.agreement_row(labels[l], labels.data(), psm.row(l), l + 1,
                               psm.n);
  return score;
}

std::vector<std::size_t> default_k_range(std::size_t n) {
  std::vector<std::size_t> ks;
  if (n <= 50) ks.push_back(1);
  for (std::size_t k = 2; k <= std::min<std::size_t>(20, n - 1); ++k)
    ks.push_back(k);
  return ks;
}

BestPartition best_partition(const PosteriorSimilarityMatrix& psm,
                             std::vector<std::size_t> k_range) {
  if (psm.n < 2)
    fail(ErrorCode::validation, "best_partition needs at least 2 units");
  if (k_range.empty()) k_range = default_k_range(psm.n);
  if (k_range.empty())
    fail(ErrorCode::validation, "best_partition: empty k range");
  std::sort(k_range.begin(), k_range.end());
  k_range.erase(std::unique(k_range.begin(), k_range.end()), k_range.end());
  if (k_range.back() > psm.n)
    fail(ErrorCode::validation, "best_partition: k exceeds cohort size");

  const std::size_t n = psm.n;
  std::vector<double> d(n * n);
  for (std::size_t i = 0; i < n * n; ++i) d[i] = 1.0 - psm.p[i];
  for (std::size_t i = 0; i < n; ++i) d[i * n + i] = 0.0;

  BestPartition best;
  best.score = -std::numeric_limits<double>::infinity();
  for (std::size_t k : k_range) {
    auto result = pam(d, n, k);
    const double score = partition_score(psm, result.partition.labels);
    best.score_by_k.emplace_back(k, score);
    if (score > best.score) {  // strict: ties keep the smaller k
      best.score = score;
      best.k = k;
      best.partition = std::move(result.partition);
    }
  }
  return best;
}

}  // namespace rddclust
