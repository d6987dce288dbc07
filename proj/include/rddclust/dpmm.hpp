#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "rddclust/cohort.hpp"
#include "rddclust/rng.hpp"

namespace rddclust {

// Input for the mixture sampler: standardized continuous columns plus
// 0-based categorical codes, both column-oriented.
struct DpmmData {
  std::size_t n = 0;
  std::size_t cont_dim = 0;
  std::vector<double> cont;  // column-major, column stride n
  std::vector<std::vector<std::int32_t>> cat;
  std::vector<int> cat_levels;

  static DpmmData from(const StandardizedMatrix& cont,
                       const std::vector<std::vector<std::int32_t>>& cat_1based,
                       const std::vector<int>& cat_levels);
};

// Prior for the Dirichlet process mixture: cluster means are Normal(mu0,
// sigma0), covariances inverse-Wishart(r0, kappa0), categorical level
// probabilities Dirichlet(dirichlet_a[j]), and the concentration is
// Gamma(alpha_shape, alpha_rate) unless fixed_alpha > 0 pins it.
struct DpmmPriors {
  Eigen::VectorXd mu0;
  Eigen::MatrixXd sigma0;
  Eigen::MatrixXd r0;
  double kappa0 = 0.0;
  std::vector<std::vector<double>> dirichlet_a;
  double alpha_shape = 2.0;
  double alpha_rate = 1.0;
  double fixed_alpha = 0.0;

  static DpmmPriors defaults(std::size_t cont_dim,
                             const std::vector<int>& cat_levels);
  void validate(const DpmmData& data) const;
};

struct McmcConfig {
  int n_iter = 5000;
  int burn_in = 2000;
  int thin = 1;
  std::uint64_t seed = 0;
  int label_moves_per_sweep = 3;

  void validate() const;
};

struct ClusterParams {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;
  // Cached likelihood pieces: precision (row-major) and the constant
  // -0.5*logdet(sigma) - dim/2*log(2*pi); per-covariate log level probs.
  std::vector<double> prec;
  double loglik_const = 0.0;
  std::vector<std::vector<double>> logphi;
};

// Full sampler state under the stick-breaking representation. Cluster c has
// stick v_c and weight w_c = v_c * prod_{d<c} (1 - v_d); labels hold stick
// indices and u the per-unit slice variables.
struct AllocationState {
  std::vector<std::int32_t> labels;
  std::vector<double> sticks;
  std::vector<double> weights;
  std::vector<ClusterParams> clusters;
  std::vector<double> u;
  double alpha = 1.0;
};

struct PartitionChain {
  std::size_t n = 0;
  std::vector<std::vector<std::int32_t>> draws;
  std::vector<int> n_clusters_trace;
};

// Slice sampler with the dependent slice u_i ~ U(0, w_{label_i}): sticks are
// instantiated until the residual mass drops below min(u), reassignment is
// proportional to the data likelihood among clusters with w_c > u_i, cluster
// parameters are conditionally conjugate draws, the concentration follows the
// usual Beta-augmented Gamma update, and Metropolis swaps of adjacent sticks
// restore label mixing.
class DpmmSampler {
 public:
  DpmmSampler(DpmmData data, DpmmPriors priors, McmcConfig cfg);

  void slice_update_allocations();
  void update_gaussian_params();
  void update_categorical_params();
  void update_stick_weights();
  void update_concentration();
  void label_switch_move();
  void sweep();

  PartitionChain run();

  AllocationState& state() { return state_; }
  const DpmmData& data() const { return data_; }
  Rng& rng() { return rng_; }

  //! Gaussian + categorical log-likelihood of one unit under params.
  double unit_loglik(std::size_t unit, const ClusterParams& params) const;
  //! Normalized reassignment probabilities for one unit given current slice.
  std::vector<double> allocation_probabilities(std::size_t unit) const;
  //! Number of occupied (non-empty) clusters.
  int occupied_clusters() const;
  //! Swaps clusters c and c+1 wholesale (params, allocations, sticks);
  //! applying it twice restores the original state.
  void swap_adjacent(std::size_t c, bool swap_sticks);

  //! Enables/disables the label-switching moves (mixing experiments).
  void set_label_moves_enabled(bool on) { label_moves_enabled_ = on; }

 private:
  void init_state();
  void recompute_weights();
  ClusterParams draw_prior_cluster();
  void refresh_cluster(ClusterParams& params,
                       const std::vector<std::int32_t>& members);
  void cache_likelihood_terms(ClusterParams& params) const;
  std::vector<std::int32_t> cluster_counts() const;

  DpmmData data_;
  DpmmPriors priors_;
  McmcConfig cfg_;
  Rng rng_;
  AllocationState state_;
  bool label_moves_enabled_ = true;

  // Prior terms reused every sweep.
  Eigen::MatrixXd sigma0_inv_;
  Eigen::VectorXd sigma0_inv_mu0_;
  Eigen::LLT<Eigen::MatrixXd> sigma0_llt_;

  std::vector<double> loglik_buf_;
};

PartitionChain run_dpmm(const DpmmData& data, const DpmmPriors& priors,
                        const McmcConfig& cfg);

}  // namespace rddclust
