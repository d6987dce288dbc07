#include "rddclust/selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rddclust/error.hpp"

namespace rddclust {

BalanceBounds BalanceBounds::from_zeta(double zeta) {
  if (!(zeta > 2.0))
    fail(ErrorCode::config, "balance zeta must exceed 2");
  return BalanceBounds{1.0 / zeta, (zeta - 1.0) / zeta};
}

void BalanceBounds::validate() const {
  if (!(lower > 0.0 && lower <= upper && upper < 1.0))
    fail(ErrorCode::config,
         "balance bounds must satisfy 0 < lower <= upper < 1");
}

double homogeneity_index(const PosteriorSimilarityMatrix& psm,
                         const std::vector<std::int32_t>& members) {
  const std::size_t m = members.size();
  if (m == 0)
    fail(ErrorCode::validation, "homogeneity_index: empty cluster");
  for (auto i : members)
    if (i < 0 || static_cast<std::size_t>(i) >= psm.n)
      fail(ErrorCode::validation, "homogeneity_index: member out of range");
  if (m == 1) return 0.0;
  double total = 0.0;
  for (std::size_t a = 0; a + 1 < m; ++a) {
    const double* row = psm.row(static_cast<std::size_t>(members[a]));
    for (std::size_t b = a + 1; b < m; ++b)
      total += 1.0 - row[members[b]];
  }
  return 2.0 * total / (static_cast<double>(m) * static_cast<double>(m - 1));
}

std::vector<ClusterSummary> summarize_clusters(
    const Partition& partition, const PosteriorSimilarityMatrix& psm,
    const std::vector<std::uint8_t>& z, const BalanceBounds& bounds) {
  bounds.validate();
  if (partition.labels.size() != psm.n || z.size() != psm.n)
    fail(ErrorCode::validation, "summarize_clusters: size mismatch");

  const auto members = partition.members();
  std::vector<ClusterSummary> summaries;
  summaries.reserve(members.size());
  for (std::size_t c = 0; c < members.size(); ++c) {
    ClusterSummary s;
    s.cluster_id = static_cast<std::int32_t>(c + 1);
    s.n = members[c].size();
    if (s.n == 0)
      fail(ErrorCode::validation, "summarize_clusters: empty cluster id " +
                                      std::to_string(c + 1));
    std::size_t above = 0;
    for (auto i : members[c]) above += z[static_cast<std::size_t>(i)];
    s.pi_z = static_cast<double>(above) / static_cast<double>(s.n);
    s.singleton = s.n == 1;
    s.homogeneity = homogeneity_index(psm, members[c]);
    s.balanced = s.pi_z >= bounds.lower && s.pi_z <= bounds.upper;
    summaries.push_back(s);
  }

  // Homogeneity ranks over the balanced clusters.
  std::vector<std::size_t> order;
  for (std::size_t c = 0; c < summaries.size(); ++c)
    if (summaries[c].balanced) order.push_back(c);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& sa = summaries[a];
    const auto& sb = summaries[b];
    if (sa.homogeneity != sb.homogeneity)
      return sa.homogeneity < sb.homogeneity;
    if (sa.n != sb.n) return sa.n > sb.n;
    return sa.cluster_id < sb.cluster_id;
  });
  for (std::size_t r = 0; r < order.size(); ++r)
    summaries[order[r]].rank = static_cast<std::int32_t>(r + 1);
  return summaries;
}

const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::inc10: return "inc10";
    case Strategy::c25: return "c25";
    case Strategy::n50: return "n50";
    case Strategy::n25: return "n25";
  }
  return "?";
}

Strategy parse_strategy(const std::string& name) {
  if (name == "inc10") return Strategy::inc10;
  if (name == "c25") return Strategy::c25;
  if (name == "n50") return Strategy::n50;
  if (name == "n25") return Strategy::n25;
  fail(ErrorCode::config, "unknown selection strategy '" + name + "'");
}

Selection select_units(const std::vector<ClusterSummary>& summaries,
                       const Partition& partition, Strategy strategy,
                       std::size_t cohort_size) {
  std::vector<const ClusterSummary*> ranked;
  for (const auto& s : summaries)
    if (s.rank > 0) ranked.push_back(&s);
  std::sort(ranked.begin(), ranked.end(),
            [](const ClusterSummary* a, const ClusterSummary* b) {
              return a->rank < b->rank;
            });
  if (ranked.empty())
    fail(ErrorCode::estimation, "no balanced cluster available for selection");

  Selection sel;
  sel.strategy = strategy;
  std::size_t take = 0;
  switch (strategy) {
    case Strategy::inc10: {
      take = 1;
      while (take < ranked.size()) {
        const double prev = ranked[take - 1]->homogeneity;
        const double next = ranked[take]->homogeneity;
        double gap;
        if (prev == 0.0)
          gap = next == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
        else
          gap = (next - prev) / prev;
        if (!(gap < 0.10)) break;
        ++take;
      }
      break;
    }
    case Strategy::c25:
      take = (ranked.size() + 3) / 4;
      break;
    case Strategy::n50:
    case Strategy::n25: {
      const std::size_t mult = strategy == Strategy::n50 ? 2 : 4;
      std::size_t cum = 0;
      while (take < ranked.size() && cum * mult < cohort_size) {
        cum += ranked[take]->n;
        ++take;
      }
      if (cum * mult < cohort_size) sel.shortfall = true;
      break;
    }
  }

  const auto members = partition.members();
  for (std::size_t r = 0; r < take; ++r) {
    sel.cluster_ids.push_back(ranked[r]->cluster_id);
    const auto& m =
        members[static_cast<std::size_t>(ranked[r]->cluster_id - 1)];
    sel.unit_indices.insert(sel.unit_indices.end(), m.begin(), m.end());
  }
  std::sort(sel.unit_indices.begin(), sel.unit_indices.end());
  return sel;
}

}  // namespace rddclust
