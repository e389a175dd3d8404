#ifndef MMM_GIBBS_HPP
#define MMM_GIBBS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mmm/dataset.hpp"
#include "mmm/kernels.hpp"
#include "mmm/rng.hpp"

namespace mmm {

/// Logits are clamped to this magnitude before the PG and Gaussian steps to
/// prevent overflow without statistically meaningful distortion.
inline constexpr double kMaxLogit = 35.0;

double sigmoid(double y);
double logit(double p);
double clamped_logit(double p);

/// Latent block of one sweep: profile indicators, membership scores (stored
/// as the probability of profile 2 per group), PG auxiliaries and the
/// centered profile counts k = #(z = 2 in group) - p_g/2.
struct LatentState {
  Eigen::MatrixXi z;       // n x p, entries 0 (profile 1) or 1 (profile 2)
  Eigen::MatrixXd lambda;  // n x G in (0,1)
  Eigen::MatrixXd omega;   // n x G, positive
  Eigen::MatrixXd k;       // n x G
};

struct ChainState {
  KernelSet kernels;
  LatentState latent;
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;

  void validate(const CategoricalDataset& dataset, const GroupPartition& partition) const;
};

/// Which per-draw fields to keep in memory / on disk.
struct RetainSet {
  bool lambda = true;
  bool kernels = true;
  bool mu = true;
  bool sigma = true;
  bool spatial = true;  // spatio-temporal fields when applicable
};

struct ChainConfig {
  int iterations = 5000;
  int burn_in = 1000;
  int thin = 1;
  std::uint64_t seed = 0;
  RetainSet retain;
  bool check_invariants = false;
  /// The mu step integrates the membership scores out of its conditional, so
  /// lambda must be refreshed right after it for the sweep to leave the
  /// posterior invariant. When false, the printed 1..6 order is used instead.
  bool collapsed_mu_first = true;

  void validate() const;
  int retained_count() const { return (iterations - burn_in) / thin; }
};

struct ChainMeta {
  std::uint64_t seed = 0;
  int iterations = 0;
  int burn_in = 0;
  int thin = 0;
  std::string dataset_digest;
  std::vector<int> retained_iterations;
};

/// Thinned post-burn-in draws. Spatio-temporal fields are empty for the
/// plain model.
struct ChainSamples {
  ChainMeta meta;
  std::vector<Eigen::MatrixXd> lambda;
  std::vector<KernelSet> kernels;
  std::vector<Eigen::VectorXd> mu;
  std::vector<Eigen::MatrixXd> sigma;

  std::vector<Eigen::MatrixXd> beta_t;                 // T x G
  std::vector<Eigen::VectorXd> beta;                   // G
  std::vector<Eigen::MatrixXd> sigma_beta;             // G x G
  std::vector<std::vector<Eigen::MatrixXd>> sigma_t;   // per epoch G x G
  std::vector<Eigen::MatrixXd> zeta;                   // n x G
  std::vector<std::vector<Eigen::MatrixXd>> gammas;    // per epoch G x 2

  int num_draws() const { return int(meta.retained_iterations.size()); }
  bool has_spatial() const { return !beta_t.empty(); }
};

/// Step 1: conjugate Dirichlet update of the kernel probabilities.
KernelSet update_kernels(const CategoricalDataset& dataset, const Eigen::MatrixXi& z,
                         const Hyperparams& hyper, std::uint64_t seed, std::uint64_t sweep);

/// Step 2: per-cell Bernoulli draw of the profile indicators.
Eigen::MatrixXi update_indicators(const CategoricalDataset& dataset,
                                  const GroupPartition& partition, const KernelSet& kernels,
                                  const Eigen::MatrixXd& lambda, std::uint64_t seed,
                                  std::uint64_t sweep);

/// k^{(g)}_i = sum_{j in g} 1(z_ij = 2) - p_g / 2, computed from the current z.
Eigen::MatrixXd compute_group_counts(const Eigen::MatrixXi& z, const GroupPartition& partition);

/// Step 3: omega_i^{(g)} ~ PG(p_g, logit lambda_i^{(g)}).
Eigen::MatrixXd update_omega(const Eigen::MatrixXd& lambda, const GroupPartition& partition,
                             std::uint64_t seed, std::uint64_t sweep);

/// Step 4: per subject, logit(lambda_i) ~ N(mu*, Sigma*) with
/// Sigma* = (diag(omega_i) + Sigma^{-1})^{-1}, mu* = Sigma*(Sigma^{-1} mu + k_i).
Eigen::MatrixXd update_lambda(const Eigen::MatrixXd& omega, const Eigen::MatrixXd& k,
                              const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma,
                              std::uint64_t seed, std::uint64_t sweep);

/// Step 5: mu ~ N(mu*, Sigma*) with the membership scores integrated out;
/// Upsilon_i = (diag(1/omega_i) + Sigma)^{-1}.
Eigen::VectorXd update_mu(const Eigen::MatrixXd& omega, const Eigen::MatrixXd& k,
                          const Eigen::MatrixXd& sigma, const Hyperparams& hyper,
                          std::uint64_t seed, std::uint64_t sweep);

/// Step 6: Sigma ~ IW(nu0 + n, Psi0 + sum_i (logit lambda_i - mu)(...)^T).
Eigen::MatrixXd update_sigma(const Eigen::MatrixXd& lambda, const Eigen::VectorXd& mu,
                             const Hyperparams& hyper, std::uint64_t seed, std::uint64_t sweep);

/// Inverse-Wishart draw via Bartlett decomposition on the inverse scale.
Eigen::MatrixXd sample_inverse_wishart(double df, const Eigen::MatrixXd& scale, RngStream& rng);

/// Prior kernels, lambda = 0.5 everywhere, indicators from the step-2
/// conditional, mu = mu0, Sigma = Psi0, omega from one step-3 pass.
ChainState init_state(const CategoricalDataset& dataset, const GroupPartition& partition,
                      const Hyperparams& hyper, std::uint64_t seed);

/// Runs Algorithm steps 1..6 in order for the configured number of sweeps and
/// retains thinned post-burn-in states. Fully reproducible given the seed.
ChainSamples run_chain(const CategoricalDataset& dataset, const GroupPartition& partition,
                       const Hyperparams& hyper, const ChainConfig& config);

/// Single full sweep advancing `state` in place; exposed for resumption and
/// the successive-conditional tests.
void gibbs_sweep(const CategoricalDataset& dataset, const GroupPartition& partition,
                 const Hyperparams& hyper, ChainState& state, std::uint64_t seed,
                 std::uint64_t sweep, bool collapsed_mu_first = true);

}  // namespace mmm

#endif  // MMM_GIBBS_HPP
