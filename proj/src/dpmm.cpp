#include "rddclust/dpmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "rddclust/error.hpp"
#include "rddclust/kernels.hpp"

namespace rddclust {

namespace {

constexpr double kJitter = 1e-10;
constexpr std::size_t kMaxSticks = 100000;

Eigen::LLT<Eigen::MatrixXd> chol_with_jitter(Eigen::MatrixXd m,
                                             const char* what) {
  double jitter = kJitter;
  for (int attempt = 0; attempt < 6; ++attempt) {
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() == Eigen::Success) return llt;
    m += jitter * Eigen::MatrixXd::Identity(m.rows(), m.cols());
    jitter *= 10.0;
  }
  fail(ErrorCode::estimation,
       std::string("Cholesky factorization failed for ") + what);
}

Eigen::VectorXd draw_mvn(Rng& rng, const Eigen::VectorXd& mean,
                         const Eigen::LLT<Eigen::MatrixXd>& llt) {
  Eigen::VectorXd z(mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
  return mean + llt.matrixL() * z;
}

// Bartlett decomposition draw of Wishart(df, scale).
Eigen::MatrixXd draw_wishart(Rng& rng, double df,
                             const Eigen::MatrixXd& scale) {
  const Eigen::Index d = scale.rows();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    a(i, i) = std::sqrt(rng.chi_squared(df - static_cast<double>(i)));
    for (Eigen::Index j = 0; j < i; ++j) a(i, j) = rng.normal();
  }
  const Eigen::MatrixXd l = chol_with_jitter(scale, "Wishart scale").matrixL();
  const Eigen::MatrixXd la = l * a;
  return la * la.transpose();
}

// Sigma ~ InvWishart(r, df): draw W ~ Wishart(df, r^{-1}) and invert.
Eigen::MatrixXd draw_inv_wishart(Rng& rng, double df,
                                 const Eigen::MatrixXd& r) {
  const Eigen::Index d = r.rows();
  const Eigen::MatrixXd r_inv =
      chol_with_jitter(r, "inverse-Wishart scale")
          .solve(Eigen::MatrixXd::Identity(d, d));
  const Eigen::MatrixXd w = draw_wishart(rng, df, 0.5 * (r_inv + r_inv.transpose()));
  Eigen::MatrixXd sigma = chol_with_jitter(w, "Wishart draw")
                              .solve(Eigen::MatrixXd::Identity(d, d));
  return 0.5 * (sigma + sigma.transpose());
}

}  // namespace

DpmmData DpmmData::from(const StandardizedMatrix& cont,
                        const std::vector<std::vector<std::int32_t>>& cat_1based,
                        const std::vector<int>& cat_levels) {
  DpmmData data;
  data.n = cont.n;
  data.cont_dim = cont.dim;
  data.cont = cont.data;
  data.cat_levels = cat_levels;
  data.cat.reserve(cat_1based.size());
  for (const auto& col : cat_1based) {
    if (col.size() != cont.n)
      fail(ErrorCode::validation, "categorical column length mismatch");
    std::vector<std::int32_t> zero_based(col.size());
    for (std::size_t i = 0; i < col.size(); ++i) zero_based[i] = col[i] - 1;
    data.cat.push_back(std::move(zero_based));
  }
  if (data.cat.size() != cat_levels.size())
    fail(ErrorCode::validation, "categorical levels do not match columns");
  return data;
}

DpmmPriors DpmmPriors::defaults(std::size_t cont_dim,
                                const std::vector<int>& cat_levels) {
  DpmmPriors priors;
  const auto d = static_cast<Eigen::Index>(cont_dim);
  priors.mu0 = Eigen::VectorXd::Zero(d);
  priors.sigma0 = Eigen::MatrixXd::Identity(d, d);
  priors.r0 = Eigen::MatrixXd::Identity(d, d);
  priors.kappa0 = static_cast<double>(cont_dim) + 2.0;
  for (int levels : cat_levels)
    priors.dirichlet_a.emplace_back(static_cast<std::size_t>(levels), 0.5);
  return priors;
}

void DpmmPriors::validate(const DpmmData& data) const {
  const auto d = static_cast<Eigen::Index>(data.cont_dim);
  if (mu0.size() != d || sigma0.rows() != d || sigma0.cols() != d ||
      r0.rows() != d || r0.cols() != d)
    fail(ErrorCode::config, "dpmm prior dimensions do not match the data");
  if (!(kappa0 > static_cast<double>(data.cont_dim) - 1.0))
    fail(ErrorCode::config, "dpmm.kappa0 must exceed cont_dim - 1");
  if (d > 0) {
    if (Eigen::LLT<Eigen::MatrixXd>(sigma0).info() != Eigen::Success)
      fail(ErrorCode::config, "dpmm prior sigma0 must be positive definite");
    if (Eigen::LLT<Eigen::MatrixXd>(r0).info() != Eigen::Success)
      fail(ErrorCode::config, "dpmm prior r0 must be positive definite");
  }
  if (dirichlet_a.size() != data.cat.size())
    fail(ErrorCode::config, "dpmm Dirichlet priors do not match the data");
  for (std::size_t j = 0; j < dirichlet_a.size(); ++j) {
    if (dirichlet_a[j].size() != static_cast<std::size_t>(data.cat_levels[j]))
      fail(ErrorCode::config, "dpmm Dirichlet prior has wrong level count");
    for (double a : dirichlet_a[j])
      if (!(a > 0.0))
        fail(ErrorCode::config, "dpmm Dirichlet prior must be positive");
  }
  if (!(alpha_shape > 0.0) || !(alpha_rate > 0.0))
    fail(ErrorCode::config, "dpmm concentration prior must be positive");
  if (fixed_alpha < 0.0)
    fail(ErrorCode::config, "dpmm.fixed_alpha must be non-negative");
}

void McmcConfig::validate() const {
  if (n_iter < 1) fail(ErrorCode::config, "mcmc.n_iter must be positive");
  if (burn_in < 0) fail(ErrorCode::config, "mcmc.burn_in must be >= 0");
  if (thin < 1 || thin > n_iter)
    fail(ErrorCode::config, "mcmc.thin must lie in [1, n_iter]");
  if (label_moves_per_sweep < 0)
    fail(ErrorCode::config, "mcmc.label_moves_per_sweep must be >= 0");
}

DpmmSampler::DpmmSampler(DpmmData data, DpmmPriors priors, McmcConfig cfg)
    : data_(std::move(data)),
      priors_(std::move(priors)),
      cfg_(cfg),
      rng_(cfg.seed) {
  if (data_.n == 0) fail(ErrorCode::validation, "dpmm data is empty");
  if (data_.cont_dim == 0 && data_.cat.empty())
    fail(ErrorCode::validation, "dpmm data has no covariates");
  if (data_.cont_dim > 64)
    fail(ErrorCode::validation, "dpmm supports at most 64 continuous columns");
  cfg_.validate();
  priors_.validate(data_);
  if (data_.cont_dim > 0) {
    sigma0_llt_ = chol_with_jitter(priors_.sigma0, "prior sigma0");
    sigma0_inv_ = sigma0_llt_.solve(
        Eigen::MatrixXd::Identity(priors_.sigma0.rows(), priors_.sigma0.cols()));
    sigma0_inv_mu0_ = sigma0_inv_ * priors_.mu0;
  }
  init_state();
}

void DpmmSampler::init_state() {
  state_.alpha = priors_.fixed_alpha > 0.0
                     ? priors_.fixed_alpha
                     : priors_.alpha_shape / priors_.alpha_rate;
  state_.labels.assign(data_.n, 0);
  state_.sticks = {rng_.beta(1.0 + static_cast<double>(data_.n), state_.alpha)};
  // Seed the single starting cluster from the prior so the first Gibbs
  // refresh has a valid mean to center the scatter on.
  state_.clusters.assign(1, draw_prior_cluster());
  recompute_weights();
  update_gaussian_params();
  update_categorical_params();
  state_.u.assign(data_.n, 0.0);
}

void DpmmSampler::recompute_weights() {
  state_.weights.resize(state_.sticks.size());
  double remaining = 1.0;
  for (std::size_t c = 0; c < state_.sticks.size(); ++c) {
    state_.weights[c] = state_.sticks[c] * remaining;
    remaining *= 1.0 - state_.sticks[c];
  }
}

std::vector<std::int32_t> DpmmSampler::cluster_counts() const {
  std::vector<std::int32_t> counts(state_.clusters.size(), 0);
  for (auto label : state_.labels) ++counts[label];
  return counts;
}

int DpmmSampler::occupied_clusters() const {
  int occupied = 0;
  for (auto c : cluster_counts()) occupied += c > 0 ? 1 : 0;
  return occupied;
}

void DpmmSampler::cache_likelihood_terms(ClusterParams& params) const {
  const auto d = static_cast<Eigen::Index>(data_.cont_dim);
  if (d > 0) {
    const auto llt = chol_with_jitter(params.sigma, "cluster covariance");
    const Eigen::MatrixXd prec =
        llt.solve(Eigen::MatrixXd::Identity(d, d));
    params.prec.resize(static_cast<std::size_t>(d * d));
    for (Eigen::Index j = 0; j < d; ++j)
      for (Eigen::Index k = 0; k < d; ++k)
        params.prec[static_cast<std::size_t>(j * d + k)] =
            0.5 * (prec(j, k) + prec(k, j));
    double logdet = 0.0;
    const Eigen::MatrixXd l = llt.matrixL();
    for (Eigen::Index j = 0; j < d; ++j) logdet += 2.0 * std::log(l(j, j));
    params.loglik_const = -0.5 * logdet -
                          0.5 * static_cast<double>(d) *
                              std::log(2.0 * std::numbers::pi);
  } else {
    params.loglik_const = 0.0;
  }
  params.logphi.resize(data_.cat.size());
}

ClusterParams DpmmSampler::draw_prior_cluster() {
  ClusterParams params;
  if (data_.cont_dim > 0) {
    params.mu = draw_mvn(rng_, priors_.mu0, sigma0_llt_);
    params.sigma = draw_inv_wishart(rng_, priors_.kappa0, priors_.r0);
  } else {
    params.mu.resize(0);
    params.sigma.resize(0, 0);
  }
  cache_likelihood_terms(params);
  params.logphi.resize(data_.cat.size());
  for (std::size_t j = 0; j < data_.cat.size(); ++j) {
    const auto& a = priors_.dirichlet_a[j];
    std::vector<double> phi(a.size());
    rng_.dirichlet(a, phi);
    auto& logphi = params.logphi[j];
    logphi.resize(phi.size());
    for (std::size_t r = 0; r < phi.size(); ++r) logphi[r] = std::log(phi[r]);
  }
  return params;
}

void DpmmSampler::refresh_cluster(ClusterParams& params,
                                  const std::vector<std::int32_t>& members) {
  const auto d = static_cast<Eigen::Index>(data_.cont_dim);
  const double n_c = static_cast<double>(members.size());
  if (d == 0) {
    params.loglik_const = 0.0;
    return;
  }
  if (members.empty()) {
    params.mu = draw_mvn(rng_, priors_.mu0, sigma0_llt_);
    params.sigma = draw_inv_wishart(rng_, priors_.kappa0, priors_.r0);
    cache_likelihood_terms(params);
    return;
  }
  // Sigma | mu: inverse-Wishart with the scatter around the current mean.
  Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd dx(d);
  for (auto i : members) {
    for (Eigen::Index j = 0; j < d; ++j) {
      const double v = data_.cont[static_cast<std::size_t>(j) * data_.n + i];
      dx[j] = v - params.mu[j];
      sum[j] += v;
    }
    scatter.noalias() += dx * dx.transpose();
  }
  params.sigma =
      draw_inv_wishart(rng_, priors_.kappa0 + n_c, priors_.r0 + scatter);

  // mu | Sigma: Gaussian with precision sigma0^{-1} + n_c * sigma^{-1}.
  const auto sigma_llt = chol_with_jitter(params.sigma, "cluster covariance");
  const Eigen::MatrixXd sigma_inv =
      sigma_llt.solve(Eigen::MatrixXd::Identity(d, d));
  const Eigen::MatrixXd post_prec = sigma0_inv_ + n_c * sigma_inv;
  const auto post_llt = chol_with_jitter(post_prec, "posterior precision");
  const Eigen::VectorXd post_mean =
      post_llt.solve(sigma0_inv_mu0_ + sigma_inv * sum);
  // Draw via the precision factor: mu = mean + L^{-T} z.
  Eigen::VectorXd z(d);
  for (Eigen::Index j = 0; j < d; ++j) z[j] = rng_.normal();
  const Eigen::MatrixXd lt = post_llt.matrixU();
  params.mu = post_mean + lt.triangularView<Eigen::Upper>().solve(z);
  cache_likelihood_terms(params);
}

void DpmmSampler::update_gaussian_params() {
  std::vector<std::vector<std::int32_t>> members(state_.clusters.size());
  for (std::size_t i = 0; i < data_.n; ++i)
    members[state_.labels[i]].push_back(static_cast<std::int32_t>(i));
  for (std::size_t c = 0; c < state_.clusters.size(); ++c)
    refresh_cluster(state_.clusters[c], members[c]);
}

void DpmmSampler::update_categorical_params() {
  if (data_.cat.empty()) return;
  std::vector<std::vector<std::int32_t>> members(state_.clusters.size());
  for (std::size_t i = 0; i < data_.n; ++i)
    members[state_.labels[i]].push_back(static_cast<std::int32_t>(i));
  std::vector<double> post;
  std::vector<double> phi;
  for (std::size_t c = 0; c < state_.clusters.size(); ++c) {
    auto& params = state_.clusters[c];
    params.logphi.resize(data_.cat.size());
    for (std::size_t j = 0; j < data_.cat.size(); ++j) {
      const auto& a = priors_.dirichlet_a[j];
      post.assign(a.begin(), a.end());
      for (auto i : members[c]) post[data_.cat[j][i]] += 1.0;
      phi.resize(post.size());
      rng_.dirichlet(post, phi);
      auto& logphi = params.logphi[j];
      logphi.resize(phi.size());
      for (std::size_t r = 0; r < phi.size(); ++r)
        logphi[r] = std::log(phi[r]);
    }
  }
}

void DpmmSampler::update_stick_weights() {
  const auto counts = cluster_counts();
  std::vector<double> tail(counts.size() + 1, 0.0);
  for (std::size_t c = counts.size(); c-- > 0;)
    tail[c] = tail[c + 1] + static_cast<double>(counts[c]);
  for (std::size_t c = 0; c < state_.sticks.size(); ++c)
    state_.sticks[c] = rng_.beta(1.0 + static_cast<double>(counts[c]),
                                 state_.alpha + tail[c + 1]);
  recompute_weights();
}

void DpmmSampler::update_concentration() {
  if (priors_.fixed_alpha > 0.0) {
    state_.alpha = priors_.fixed_alpha;
    return;
  }
  const double n = static_cast<double>(data_.n);
  const double k = static_cast<double>(occupied_clusters());
  const double eta = rng_.beta(state_.alpha + 1.0, n);
  const double rate = priors_.alpha_rate - std::log(eta);
  const double shape = priors_.alpha_shape;
  double odds = (shape + k - 1.0) / (n * rate);
  if (!(odds > 0.0)) odds = 0.0;
  const double pick_first = odds / (1.0 + odds);
  state_.alpha = rng_.bernoulli(pick_first)
                     ? rng_.gamma(shape + k, rate)
                     : rng_.gamma(shape + k - 1.0, rate);
}

double DpmmSampler::unit_loglik(std::size_t unit,
                                const ClusterParams& params) const {
  double ll = params.loglik_const;
  const auto d = data_.cont_dim;
  if (d > 0) {
    double dx[64];
    for (std::size_t j = 0; j < d; ++j)
      dx[j] = data_.cont[j * data_.n + unit] - params.mu[static_cast<Eigen::Index>(j)];
    double quad = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += params.prec[j * d + k] * dx[k];
      quad += dx[j] * s;
    }
    ll -= 0.5 * quad;
  }
  for (std::size_t j = 0; j < data_.cat.size(); ++j)
    ll += params.logphi[j][data_.cat[j][unit]];
  return ll;
}

std::vector<double> DpmmSampler::allocation_probabilities(
    std::size_t unit) const {
  std::vector<double> probs(state_.clusters.size(), 0.0);
  double max_ll = -std::numeric_limits<double>::infinity();
  std::vector<double> ll(state_.clusters.size());
  for (std::size_t c = 0; c < state_.clusters.size(); ++c) {
    if (state_.weights[c] > state_.u[unit]) {
      ll[c] = unit_loglik(unit, state_.clusters[c]);
      max_ll = std::max(max_ll, ll[c]);
    } else {
      ll[c] = -std::numeric_limits<double>::infinity();
    }
  }
  double total = 0.0;
  for (std::size_t c = 0; c < state_.clusters.size(); ++c) {
    probs[c] = std::exp(ll[c] - max_ll);
    total += probs[c];
  }
  for (auto& p : probs) p /= total;
  return probs;
}

void DpmmSampler::slice_update_allocations() {
  const std::size_t n = data_.n;
  auto& st = state_;

  // Slice variables under the current weights.
  double u_min = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    st.u[i] = rng_.uniform() * st.weights[st.labels[i]];
    u_min = std::min(u_min, st.u[i]);
  }

  // Instantiate sticks until the undrawn tail mass cannot host a weight
  // above the smallest slice.
  double remaining = 1.0;
  for (double v : st.sticks) remaining *= 1.0 - v;
  while (remaining >= u_min) {
    if (st.sticks.size() >= kMaxSticks)
      fail(ErrorCode::estimation, "dpmm stick instantiation runaway");
    const double v = rng_.beta(1.0, st.alpha);
    st.sticks.push_back(v);
    st.clusters.push_back(draw_prior_cluster());
    remaining *= 1.0 - v;
  }
  recompute_weights();

  // Likelihood table for every cluster that could admit at least one unit.
  std::vector<std::int32_t> candidates;
  for (std::size_t c = 0; c < st.clusters.size(); ++c)
    if (st.weights[c] > u_min) candidates.push_back(static_cast<std::int32_t>(c));
  const std::size_t n_cand = candidates.size();
  loglik_buf_.assign(n_cand * n, 0.0);
  const auto& ops = kernels::ops();
  std::vector<double> quad(data_.cont_dim > 0 ? n : 0);
  for (std::size_t ci = 0; ci < n_cand; ++ci) {
    const auto& params = st.clusters[candidates[ci]];
    double* row = loglik_buf_.data() + ci * n;
    if (data_.cont_dim > 0) {
      ops.quadform_batch(data_.cont.data(), n, data_.cont_dim,
                         params.mu.data(), params.prec.data(), quad.data());
      for (std::size_t i = 0; i < n; ++i)
        row[i] = params.loglik_const - 0.5 * quad[i];
    } else {
      std::fill(row, row + n, 0.0);
    }
    for (std::size_t j = 0; j < data_.cat.size(); ++j)
      ops.gather_add(data_.cat[j].data(), n, params.logphi[j].data(), row);
  }

  // Reassign each unit among admissible clusters, likelihood-weighted.
  std::vector<double> lw(n_cand);
  for (std::size_t i = 0; i < n; ++i) {
    double max_ll = -std::numeric_limits<double>::infinity();
    for (std::size_t ci = 0; ci < n_cand; ++ci) {
      if (st.weights[candidates[ci]] > st.u[i]) {
        lw[ci] = loglik_buf_[ci * n + i];
        max_ll = std::max(max_ll, lw[ci]);
      } else {
        lw[ci] = -std::numeric_limits<double>::infinity();
      }
    }
    double total = 0.0;
    for (std::size_t ci = 0; ci < n_cand; ++ci) {
      lw[ci] = std::exp(lw[ci] - max_ll);
      total += lw[ci];
    }
    const double r = rng_.uniform() * total;
    double cum = 0.0;
    std::size_t pick = n_cand - 1;
    for (std::size_t ci = 0; ci < n_cand; ++ci) {
      cum += lw[ci];
      if (r < cum) {
        pick = ci;
        break;
      }
    }
    st.labels[i] = candidates[pick];
  }

  // Drop unoccupied tail sticks; they are regenerated on demand.
  std::int32_t max_label = 0;
  for (auto label : st.labels) max_label = std::max(max_label, label);
  const auto live = static_cast<std::size_t>(max_label) + 1;
  if (live < st.clusters.size()) {
    st.clusters.resize(live);
    st.sticks.resize(live);
    recompute_weights();
  }
}

void DpmmSampler::swap_adjacent(std::size_t c, bool swap_sticks) {
  std::swap(state_.clusters[c], state_.clusters[c + 1]);
  if (swap_sticks) {
    std::swap(state_.sticks[c], state_.sticks[c + 1]);
    recompute_weights();
  }
  const auto a = static_cast<std::int32_t>(c);
  for (auto& label : state_.labels) {
    if (label == a)
      label = a + 1;
    else if (label == a + 1)
      label = a;
  }
}

void DpmmSampler::label_switch_move() {
  if (state_.clusters.size() < 2) return;
  const auto counts = cluster_counts();
  const std::size_t c = rng_.below(state_.clusters.size() - 1);
  const bool with_sticks = rng_.bernoulli(0.5);
  const double n_c = static_cast<double>(counts[c]);
  const double n_d = static_cast<double>(counts[c + 1]);
  double log_ratio;
  if (with_sticks) {
    // Swap sticks along with clusters: weights change through the shared
    // stick product, likelihood and stick priors cancel.
    const double v_c = state_.sticks[c], v_d = state_.sticks[c + 1];
    log_ratio = n_c * std::log1p(-v_d) - n_d * std::log1p(-v_c);
  } else {
    // Swap parameters and allocations only: occupancy counts move across
    // the fixed weights.
    const double w_c = state_.weights[c], w_d = state_.weights[c + 1];
    if (w_c <= 0.0 || w_d <= 0.0) return;
    log_ratio = (n_c - n_d) * (std::log(w_d) - std::log(w_c));
  }
  if (std::log(rng_.uniform_pos()) < log_ratio) swap_adjacent(c, with_sticks);
}

void DpmmSampler::sweep() {
  slice_update_allocations();
  update_gaussian_params();
  update_categorical_params();
  update_stick_weights();
  update_concentration();
  if (label_moves_enabled_)
    for (int m = 0; m < cfg_.label_moves_per_sweep; ++m) label_switch_move();
}

PartitionChain DpmmSampler::run() {
  PartitionChain chain;
  chain.n = data_.n;
  const int kept = cfg_.n_iter / cfg_.thin;
  chain.draws.reserve(static_cast<std::size_t>(kept));
  chain.n_clusters_trace.reserve(static_cast<std::size_t>(kept));
  for (int it = 0; it < cfg_.burn_in; ++it) sweep();
  for (int it = 1; it <= cfg_.n_iter; ++it) {
    sweep();
    if (it % cfg_.thin == 0) {
      chain.draws.push_back(state_.labels);
      chain.n_clusters_trace.push_back(occupied_clusters());
    }
  }
  return chain;
}

PartitionChain run_dpmm(const DpmmData& data, const DpmmPriors& priors,
                        const McmcConfig& cfg) {
  DpmmSampler sampler(data, priors, cfg);
  return sampler.run();
}

}  // namespace rddclust
