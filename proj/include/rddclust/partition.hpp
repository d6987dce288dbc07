#pragma once

#include <cstdint>
#include <vector>

#include "rddclust/dpmm.hpp"

namespace rddclust {

// Symmetric co-clustering frequency matrix with unit diagonal; entry (l, v)
// is the fraction of retained draws in which l and v share a cluster.
struct PosteriorSimilarityMatrix {
  std::size_t n = 0;
  std::vector<double> p;  // row-major n x n

  double at(std::size_t l, std::size_t v) const { return p[l * n + v]; }
  const double* row(std::size_t l) const { return p.data() + l * n; }
};

PosteriorSimilarityMatrix compute_psm(const PartitionChain& chain);

// Hard partition with labels in 1..n_clusters.
struct Partition {
  std::vector<std::int32_t> labels;
  std::int32_t n_clusters = 0;

  std::vector<std::vector<std::int32_t>> members() const;
};

struct PamResult {
  Partition partition;
  std::vector<std::size_t> medoids;  // ascending data indices
  double total_dissimilarity = 0.0;
};

//! k-medoids (BUILD + steepest-descent SWAP) on a dissimilarity matrix,
//! deterministic with lowest-index tie-breaking.
PamResult pam(const std::vector<double>& d, std::size_t n, std::size_t k);

//! Pairwise agreement between a hard partition and the similarity matrix:
//! sum over pairs l < v of p (same cluster) or 1-p (different cluster).
double partition_score(const PosteriorSimilarityMatrix& psm,
                       const std::vector<std::int32_t>& labels);

struct BestPartition {
  Partition partition;
  std::size_t k = 0;
  double score = 0.0;
  std::vector<std::pair<std::size_t, double>> score_by_k;
};

//! Default candidate cluster counts: 2..min(20, n-1), plus 1 when n <= 50.
std::vector<std::size_t> default_k_range(std::size_t n);

//! Representative partition: PAM on 1-p for each candidate k, scored by
//! pairwise agreement; ties prefer the smaller k.
BestPartition best_partition(const PosteriorSimilarityMatrix& psm,
                             std::vector<std::size_t> k_range = {});

}  // namespace rddclust
