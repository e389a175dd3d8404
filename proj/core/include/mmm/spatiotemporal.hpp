#ifndef MMM_SPATIOTEMPORAL_HPP
#define MMM_SPATIOTEMPORAL_HPP

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "mmm/dataset.hpp"
#include "mmm/gibbs.hpp"
#include "mmm/rng.hpp"

namespace mmm {

/// Priors and tuning for the space-time variant.
struct StConfig {
  Eigen::VectorXd beta0;        // grand-mean prior mean (default 0)
  Eigen::MatrixXd sigma0_beta;  // grand-mean prior covariance (default I)
  double nu_beta = 0.0;         // default G + 1
  Eigen::MatrixXd psi_beta;     // default I
  double log_gamma_prior_sd = 2.0;
  double nugget = 1e-6;
  double proposal_sd = 0.3;
  bool adapt_proposals = true;   // Robbins-Monro toward 0.44 during burn-in
  double target_accept = 0.44;
  /// Freeze beta = beta0 and Sigma_beta = sigma0_beta (no hyper updates).
  bool fix_hyper = false;
  /// Force zeta = 0 and skip the spatial and length-scale updates.
  bool disable_spatial = false;

  static StConfig defaults(int num_groups);
  void validate(int num_groups) const;
};

/// Space-time block of the chain state: epoch effects, their hyperparameters,
/// whitened spatial effects, per-epoch covariances and length scales.
struct StBlock {
  Eigen::MatrixXd beta_t;                // T x G
  Eigen::VectorXd beta;                  // G
  Eigen::MatrixXd sigma_beta;            // G x G
  std::vector<Eigen::MatrixXd> sigma_t;  // per epoch G x G
  Eigen::MatrixXd zeta_tilde;            // n x G, whitened effects
  Eigen::MatrixXd zeta;                  // n x G, zeta = L_t zeta_tilde per subject
  std::vector<Eigen::MatrixXd> gammas;   // per epoch G x 2 length scales
  double nugget = 1e-6;

  // Metropolis bookkeeping for the length scales.
  std::vector<Eigen::MatrixXd> log_proposal_sd;  // per epoch G x 2
  std::vector<Eigen::MatrixXd> accept_count;     // per epoch G x 2
  std::vector<Eigen::MatrixXd> attempt_count;    // per epoch G x 2
};

struct StState {
  ChainState base;
  StBlock st;
};

/// Normalized squared-exponential correlation with nugget:
/// exp(-1/2 sum_d gamma_d d^2) + tau 1(same point). The noiseless kernel has
/// unit diagonal; tau is added afterwards.
double se_correlation(const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                      const Eigen::Vector2d& gammas, double tau, bool same_point);

Eigen::MatrixXd se_kernel_matrix(const Eigen::MatrixXd& coords, const Eigen::Vector2d& gammas,
                                 double tau);

struct GpPrediction {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
};

/// Standard GP conditional of the (nuggeted) field at query points given
/// exact field values at the training points.
GpPrediction gp_conditional(const Eigen::MatrixXd& train_coords,
                            const Eigen::VectorXd& train_values,
                            const Eigen::MatrixXd& query_coords,
                            const Eigen::Vector2d& gammas, double tau);

/// Log target of one epoch/group length-scale pair: GP marginal log-likelihood
/// of the whitened effects plus the Gaussian prior on log gamma. Exposed for
/// the detailed-balance checks.
double length_scale_log_target(const Eigen::VectorXd& zeta_tilde,
                               const Eigen::MatrixXd& coords, const Eigen::Vector2d& gammas,
                               double tau, double log_prior_sd);

/// log density of IW(df, scale) at x.
double inverse_wishart_logpdf(const Eigen::MatrixXd& x, double df, const Eigen::MatrixXd& scale);

/// Conjugate draws for each epoch effect beta_t given its epoch's
/// PG-augmented pseudo-observations (membership scores integrated out),
/// followed by conjugate grand-mean and inverse-Wishart hyper updates
/// unless the hierarchy is frozen.
void update_beta_hierarchy(StState& state, const SpaceTimeCovariates& cov, const StConfig& config,
                           std::uint64_t seed, std::uint64_t sweep);

/// Whitened spatial effects via their Gaussian conditional, independently per
/// (epoch, group); recomposes zeta = L_t zeta_tilde.
void update_zeta(StState& state, const SpaceTimeCovariates& cov, const StConfig& config,
                 std::uint64_t seed, std::uint64_t sweep);

/// Random-walk Metropolis on log gamma against the GP marginal likelihood,
/// one axis at a time; adapts the proposal scale during burn-in when enabled.
void update_length_scales(StState& state, const SpaceTimeCovariates& cov, const StConfig& config,
                          bool adapting, std::uint64_t seed, std::uint64_t sweep);

/// Per-epoch covariance update. The whitened spatial effects enter the
/// likelihood mean through the Cholesky factor of Sigma_t, so the conjugate
/// inverse-Wishart is used as an independence proposal with an exact
/// Metropolis-Hastings correction; with zeta = 0 it reduces to the plain
/// conjugate step.
void update_sigma_t(StState& state, const SpaceTimeCovariates& cov, const Hyperparams& hyper,
                    std::uint64_t seed, std::uint64_t sweep);

StState init_state_st(const CategoricalDataset& dataset, const GroupPartition& partition,
                      const Hyperparams& hyper, const SpaceTimeCovariates& cov,
                      const StConfig& config, std::uint64_t seed);

/// One full sweep of the space-time sampler.
void gibbs_sweep_st(const CategoricalDataset& dataset, const GroupPartition& partition,
                    const Hyperparams& hyper, const SpaceTimeCovariates& cov,
                    const StConfig& config, StState& state, bool adapting, std::uint64_t seed,
                    std::uint64_t sweep);

/// Runs the space-time variant; retained draws carry the StBlock fields.
ChainSamples run_chain_st(const CategoricalDataset& dataset, const GroupPartition& partition,
                          const Hyperparams& hyper, const SpaceTimeCovariates& cov,
                          const StConfig& st_config, const ChainConfig& config);

/// Posterior predictive summaries of the spatial effects over a grid:
/// per (epoch, group, point) mean, sd, and the logistic-scale mean of
/// beta_t + zeta.
struct ZetaGridRow {
  int epoch_label = 0;
  int group = 0;  // 1-based for reporting
  double x = 0.0;
  double y = 0.0;
  double mean = 0.0;
  double sd = 0.0;
  double prob_scale_mean = 0.0;
};

std::vector<ZetaGridRow> predict_zeta(const Eigen::MatrixXd& grid, const ChainSamples& samples,
                                      const SpaceTimeCovariates& cov, double nugget);

}  // namespace mmm

#endif  // MMM_SPATIOTEMPORAL_HPP
