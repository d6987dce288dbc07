#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rddclust/partition.hpp"

namespace rddclust {

// Assignment-balance window: a cluster is usable when its fraction of
// above-threshold units lies in [lower, upper].
struct BalanceBounds {
  double lower = 0.1;
  double upper = 0.9;

  //! Bounds [1/zeta, (zeta-1)/zeta]; requires zeta > 2.
  static BalanceBounds from_zeta(double zeta);
  void validate() const;
};

struct ClusterSummary {
  std::int32_t cluster_id = 0;  // 1-based
  std::size_t n = 0;
  double pi_z = 0.0;        // share of units with x >= x0
  double homogeneity = 0.0;  // mean pairwise (1 - p); 0 = perfectly tight
  bool singleton = false;
  bool balanced = false;
  std::int32_t rank = 0;  // 1..C' among balanced clusters, 0 otherwise
};

//! Mean posterior co-clustering dissimilarity over member pairs; 0 for
//! singletons (flagged via ClusterSummary::singleton).
double homogeneity_index(const PosteriorSimilarityMatrix& psm,
                         const std::vector<std::int32_t>& members);

//! Per-cluster sizes, balance, homogeneity, and homogeneity ranks
//! (ascending; ties prefer the larger cluster, then the smaller id).
std::vector<ClusterSummary> summarize_clusters(
    const Partition& partition, const PosteriorSimilarityMatrix& psm,
    const std::vector<std::uint8_t>& z, const BalanceBounds& bounds);

enum class Strategy { inc10, c25, n50, n25 };

const char* strategy_name(Strategy s);
Strategy parse_strategy(const std::string& name);

struct Selection {
  Strategy strategy = Strategy::inc10;
  std::vector<std::int32_t> cluster_ids;   // rank order
  std::vector<std::int32_t> unit_indices;  // ascending
  bool shortfall = false;  // coverage target unreachable with balanced mass
};

// Rank-prefix selection rules over the balanced clusters:
//  inc10  extend while the relative homogeneity gap stays below 10%
//  c25    best quarter of the balanced clusters (ceil(C'/4))
//  n50    smallest prefix holding at least half the cohort
//  n25    smallest prefix holding at least a quarter of the cohort
// Throws Error(estimation) when no balanced cluster exists.
Selection select_units(const std::vector<ClusterSummary>& summaries,
                       const Partition& partition, Strategy strategy,
                       std::size_t cohort_size);

}  // namespace rddclust
