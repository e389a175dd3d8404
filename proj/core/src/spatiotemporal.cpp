#include "mmm/spatiotemporal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Cholesky>

#include "mmm/errors.hpp"
#include "mmm/polya_gamma.hpp"

namespace mmm {

namespace {

enum StStep : std::uint64_t {
  kStepLambda = 4,  // shares the plain sampler's step id
  kStepBetaT = 7,
  kStepBeta = 8,
  kStepSigmaBeta = 9,
  kStepZeta = 10,
  kStepGamma = 11,
  kStepSigmaT = 12,
  kStepInit = 15,
};

std::uint64_t domain(std::uint64_t sweep, std::uint64_t step) { return sweep * 16 + step; }

Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& m, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) {
    throw NumericError(std::string(what) + ": matrix is not positive definite");
  }
  return llt.solve(Eigen::MatrixXd::Identity(m.rows(), m.cols()));
}

Eigen::MatrixXd chol_lower(const Eigen::MatrixXd& m, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) {
    throw NumericError(std::string(what) + ": matrix is not positive definite");
  }
  return llt.matrixL();
}

double log_multivariate_gamma(int dim, double a) {
  double out = 0.25 * dim * (dim - 1) * std::log(std::numbers::pi);
  for (int j = 1; j <= dim; ++j) out += std::lgamma(a + 0.5 * (1 - j));
  return out;
}

double gaussian_logpdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                       const Eigen::MatrixXd& cov) {
  const int d = int(x.size());
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw NumericError("gaussian_logpdf: covariance is not positive definite");
  }
  const Eigen::VectorXd half = llt.matrixL().solve(x - mean);
  double log_det = 0.0;
  for (int i = 0; i < d; ++i) log_det += std::log(llt.matrixL()(i, i));
  return -0.5 * half.squaredNorm() - log_det - 0.5 * d * std::log(2.0 * std::numbers::pi);
}

Eigen::VectorXd clamped_logit_row(const Eigen::MatrixXd& lambda, int i) {
  Eigen::VectorXd y(lambda.cols());
  for (int g = 0; g < lambda.cols(); ++g) y[g] = clamped_logit(lambda(i, g));
  return y;
}

}  // namespace

StConfig StConfig::defaults(int num_groups) {
  StConfig config;
  config.beta0 = Eigen::VectorXd::Zero(num_groups);
  config.sigma0_beta = Eigen::MatrixXd::Identity(num_groups, num_groups);
  config.nu_beta = num_groups + 1;
  config.psi_beta = Eigen::MatrixXd::Identity(num_groups, num_groups);
  return config;
}

void StConfig::validate(int num_groups) const {
  if (beta0.size() != num_groups || sigma0_beta.rows() != num_groups ||
      psi_beta.rows() != num_groups) {
    throw ValidationError("space-time priors must have dimension G");
  }
  if (!(nu_beta > num_groups - 1)) throw ValidationError("nu_beta must exceed G - 1");
  if (!(nugget > 0.0)) throw ValidationError("nugget must be positive");
  if (!(proposal_sd >= 0.0)) throw ValidationError("proposal sd must be non-negative");
  if (!(log_gamma_prior_sd > 0.0)) throw ValidationError("log-gamma prior sd must be positive");
}

double se_correlation(const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                      const Eigen::Vector2d& gammas, double tau, bool same_point) {
  double quad = 0.0;
  for (int d = 0; d < 2; ++d) {
    const double diff = a[d] - b[d];
    quad += gammas[d] * diff * diff;
  }
  return std::exp(-0.5 * quad) + (same_point ? tau : 0.0);
}

Eigen::MatrixXd se_kernel_matrix(const Eigen::MatrixXd& coords, const Eigen::Vector2d& gammas,
                                 double tau) {
  const int m = int(coords.rows());
  Eigen::MatrixXd kernel(m, m);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j <= i; ++j) {
      const double value = se_correlation(coords.row(i).transpose(), coords.row(j).transpose(),
                                          gammas, tau, i == j);
      kernel(i, j) = value;
      kernel(j, i) = value;
    }
  }
  return kernel;
}

GpPrediction gp_conditional(const Eigen::MatrixXd& train_coords,
                            const Eigen::VectorXd& train_values,
                            const Eigen::MatrixXd& query_coords,
                            const Eigen::Vector2d& gammas, double tau) {
  if (!query_coords.allFinite() || !train_coords.allFinite()) {
    throw ValidationError("grid and training coordinates must be finite");
  }
  const int m = int(train_coords.rows());
  const int q = int(query_coords.rows());
  const Eigen::MatrixXd kernel = se_kernel_matrix(train_coords, gammas, tau);
  Eigen::LLT<Eigen::MatrixXd> llt(kernel);
  if (llt.info() != Eigen::Success) {
    throw NumericError("gp_conditional: kernel matrix is not positive definite");
  }
  Eigen::MatrixXd cross(m, q);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < q; ++j) {
      cross(i, j) = se_correlation(train_coords.row(i).transpose(),
                                   query_coords.row(j).transpose(), gammas, tau, false);
    }
  }
  const Eigen::MatrixXd solved = llt.solve(cross);  // K^{-1} K_*
  GpPrediction pred;
  pred.mean = solved.transpose() * train_values;
  pred.variance.resize(q);
  for (int j = 0; j < q; ++j) {
    pred.variance[j] = std::max(0.0, 1.0 + tau - cross.col(j).dot(solved.col(j)));
  }
  return pred;
}

double length_scale_log_target(const Eigen::VectorXd& zeta_tilde,
                               const Eigen::MatrixXd& coords, const Eigen::Vector2d& gammas,
                               double tau, double log_prior_sd) {
  const Eigen::MatrixXd kernel = se_kernel_matrix(coords, gammas, tau);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(zeta_tilde.size());
  double target = gaussian_logpdf(zeta_tilde, zero, kernel);
  for (int d = 0; d < 2; ++d) {
    const double lg = std::log(gammas[d]);
    target += -0.5 * lg * lg / (log_prior_sd * log_prior_sd) -
              std::log(log_prior_sd) - 0.5 * std::log(2.0 * std::numbers::pi);
  }
  return target;
}

double inverse_wishart_logpdf(const Eigen::MatrixXd& x, double df, const Eigen::MatrixXd& scale) {
  const int dim = int(x.rows());
  Eigen::LLT<Eigen::MatrixXd> llt_x(x);
  Eigen::LLT<Eigen::MatrixXd> llt_s(scale);
  if (llt_x.info() != Eigen::Success || llt_s.info() != Eigen::Success) {
    throw NumericError("inverse_wishart_logpdf: non-PD argument");
  }
  double log_det_x = 0.0, log_det_s = 0.0;
  for (int i = 0; i < dim; ++i) {
    log_det_x += 2.0 * std::log(llt_x.matrixL()(i, i));
    log_det_s += 2.0 * std::log(llt_s.matrixL()(i, i));
  }
  const double trace_term = llt_x.solve(scale).trace();
  return 0.5 * df * log_det_s - 0.5 * df * dim * std::log(2.0) -
         log_multivariate_gamma(dim, 0.5 * df) - 0.5 * (df + dim + 1) * log_det_x -
         0.5 * trace_term;
}

void update_beta_hierarchy(StState& state, const SpaceTimeCovariates& cov, const StConfig& config,
                           std::uint64_t seed, std::uint64_t sweep) {
  const int G = int(state.st.beta.size());
  const int T = cov.num_epochs();
  const Eigen::MatrixXd sigma_beta_inv = spd_inverse(state.st.sigma_beta, "beta_t update");

  for (int t = 0; t < T; ++t) {
    Eigen::MatrixXd precision = sigma_beta_inv;
    Eigen::VectorXd shift = sigma_beta_inv * state.st.beta;
    for (int i : cov.subjects_in_epoch(t)) {
      Eigen::MatrixXd upsilon_inv = state.st.sigma_t[std::size_t(t)];
      Eigen::VectorXd pseudo(G);
      for (int g = 0; g < G; ++g) {
        upsilon_inv(g, g) += 1.0 / state.base.latent.omega(i, g);
        pseudo[g] = state.base.latent.k(i, g) / state.base.latent.omega(i, g) -
                    state.st.zeta(i, g);
      }
      const Eigen::MatrixXd upsilon = spd_inverse(upsilon_inv, "beta_t update");
      precision += upsilon;
      shift += upsilon * pseudo;
    }
    const Eigen::MatrixXd cond_cov = spd_inverse(precision, "beta_t update");
    RngStream rng(seed, domain(sweep, kStepBetaT), std::uint64_t(t));
    state.st.beta_t.row(t) =
        rng.normal_vector(cond_cov * shift, chol_lower(cond_cov, "beta_t update")).transpose();
  }

  if (config.fix_hyper) return;

  // Grand mean given the epoch effects.
  {
    const Eigen::MatrixXd prior_inv = spd_inverse(config.sigma0_beta, "beta update");
    Eigen::MatrixXd precision = prior_inv + T * sigma_beta_inv;
    Eigen::VectorXd shift = prior_inv * config.beta0;
    for (int t = 0; t < T; ++t) shift += sigma_beta_inv * state.st.beta_t.row(t).transpose();
    const Eigen::MatrixXd cond_cov = spd_inverse(precision, "beta update");
    RngStream rng(seed, domain(sweep, kStepBeta), 0);
    state.st.beta = rng.normal_vector(cond_cov * shift, chol_lower(cond_cov, "beta update"));
  }

  // Covariance of the epoch effects.
  {
    Eigen::MatrixXd scale = config.psi_beta;
    for (int t = 0; t < T; ++t) {
      const Eigen::VectorXd centered = state.st.beta_t.row(t).transpose() - state.st.beta;
      scale += centered * centered.transpose();
    }
    RngStream rng(seed, domain(sweep, kStepSigmaBeta), 0);
    state.st.sigma_beta = sample_inverse_wishart(config.nu_beta + T, scale, rng);
  }
}

void update_zeta(StState& state, const SpaceTimeCovariates& cov, const StConfig& config,
                 std::uint64_t seed, std::uint64_t sweep) {
  const int G = int(state.st.beta.size());
  for (int t = 0; t < cov.num_epochs(); ++t) {
    const std::vector<int> subjects = cov.subjects_in_epoch(t);
    const int m = int(subjects.size());
    Eigen::MatrixXd coords(m, 2);
    for (int r = 0; r < m; ++r) coords.row(r) = cov.coords.row(subjects[std::size_t(r)]);

    const Eigen::MatrixXd l_t = chol_lower(state.st.sigma_t[std::size_t(t)], "zeta update");
    // Whitened residuals v_i = L^{-1}(logit lambda_i - beta_t); unit noise.
    Eigen::MatrixXd v(m, G);
    for (int r = 0; r < m; ++r) {
      const int i = subjects[std::size_t(r)];
      const Eigen::VectorXd resid =
          clamped_logit_row(state.base.latent.lambda, i) - state.st.beta_t.row(t).transpose();
      v.row(r) = l_t.triangularView<Eigen::Lower>().solve(resid).transpose();
    }

    Eigen::MatrixXd ztilde(m, G);
    for (int g = 0; g < G; ++g) {
      const Eigen::MatrixXd kernel =
          se_kernel_matrix(coords, state.st.gammas[std::size_t(t)].row(g).transpose(),
                           state.st.nugget);
      Eigen::MatrixXd noisy = kernel;
      noisy.diagonal().array() += 1.0;
      Eigen::LLT<Eigen::MatrixXd> llt(noisy);
      if (llt.info() != Eigen::Success) {
        throw NumericError("zeta update: kernel matrix is not positive definite");
      }
      const Eigen::MatrixXd gain = llt.solve(kernel);            // (K+I)^{-1} K
      const Eigen::VectorXd mean = gain.transpose() * v.col(g);  // K (K+I)^{-1} v
      Eigen::MatrixXd cond_cov = kernel - kernel * gain;
      cond_cov = 0.5 * (cond_cov + cond_cov.transpose()).eval();
      cond_cov.diagonal().array() += 1e-12;
      RngStream rng(seed, domain(sweep, kStepZeta), std::uint64_t(t) * 64 + std::uint64_t(g));
      ztilde.col(g) = rng.normal_vector(mean, chol_lower(cond_cov, "zeta update"));
    }

    for (int r = 0; r < m; ++r) {
      const int i = subjects[std::size_t(r)];
      state.st.zeta_tilde.row(i) = ztilde.row(r);
      state.st.zeta.row(i) = (l_t * ztilde.row(r).transpose()).transpose();
    }
  }
  (void)config;
}

void update_length_scales(StState& state, const SpaceTimeCovariates& cov, const StConfig& config,
                          bool adapting, std::uint64_t seed, std::uint64_t sweep) {
  const int G = int(state.st.beta.size());
  for (int t = 0; t < cov.num_epochs(); ++t) {
    const std::vector<int> subjects = cov.subjects_in_epoch(t);
    const int m = int(subjects.size());
    Eigen::MatrixXd coords(m, 2);
    Eigen::MatrixXd ztilde(m, G);
    for (int r = 0; r < m; ++r) {
      coords.row(r) = cov.coords.row(subjects[std::size_t(r)]);
      ztilde.row(r) = state.st.zeta_tilde.row(subjects[std::size_t(r)]);
    }
    for (int g = 0; g < G; ++g) {
      RngStream rng(seed, domain(sweep, kStepGamma), std::uint64_t(t) * 64 + std::uint64_t(g));
      Eigen::Vector2d gammas = state.st.gammas[std::size_t(t)].row(g).transpose();
      double current_target = length_scale_log_target(ztilde.col(g), coords, gammas,
                                                      state.st.nugget, config.log_gamma_prior_sd);
      for (int d = 0; d < 2; ++d) {
        const double step_sd = std::exp(state.st.log_proposal_sd[std::size_t(t)](g, d));
        const double increment = step_sd * rng.normal();
        const double accept_uniform = rng.uniform();
        Eigen::Vector2d proposal = gammas;
        proposal[d] = std::exp(std::log(gammas[d]) + increment);
        double log_ratio;
        bool accepted = false;
        if (increment == 0.0) {
          accepted = true;  // degenerate proposal: chain stays put
          log_ratio = 0.0;
        } else {
          try {
            const double proposal_target = length_scale_log_target(
                ztilde.col(g), coords, proposal, state.st.nugget, config.log_gamma_prior_sd);
            log_ratio = proposal_target - current_target;
            accepted = std::log(accept_uniform) < log_ratio;
            if (accepted) {
              gammas = proposal;
              current_target = proposal_target;
            }
          } catch (const NumericError&) {
            accepted = false;  // numeric failure counts as rejection
            log_ratio = -std::numeric_limits<double>::infinity();
          }
        }
        state.st.attempt_count[std::size_t(t)](g, d) += 1.0;
        if (accepted) state.st.accept_count[std::size_t(t)](g, d) += 1.0;
        if (adapting && config.adapt_proposals && config.proposal_sd > 0.0) {
          const double alpha =
              std::isfinite(log_ratio) ? std::min(1.0, std::exp(std::min(log_ratio, 0.0))) : 0.0;
          const double gain =
              std::min(0.25, 1.0 / std::sqrt(state.st.attempt_count[std::size_t(t)](g, d)));
          state.st.log_proposal_sd[std::size_t(t)](g, d) +=
              gain * (alpha - config.target_accept);
        }
      }
      state.st.gammas[std::size_t(t)].row(g) = gammas.transpose();
    }
  }
}

void update_sigma_t(StState& state, const SpaceTimeCovariates& cov, const Hyperparams& hyper,
                    std::uint64_t seed, std::uint64_t sweep) {
  for (int t = 0; t < cov.num_epochs(); ++t) {
    const std::vector<int> subjects = cov.subjects_in_epoch(t);
    const int m = int(subjects.size());

    auto residual_scale = [&](const Eigen::MatrixXd& sigma) {
      const Eigen::MatrixXd l = chol_lower(sigma, "sigma_t update");
      Eigen::MatrixXd scale = hyper.psi0;
      for (int i : subjects) {
        const Eigen::VectorXd resid = clamped_logit_row(state.base.latent.lambda, i) -
                                      state.st.beta_t.row(t).transpose() -
                                      l * state.st.zeta_tilde.row(i).transpose();
        scale += resid * resid.transpose();
      }
      return scale;
    };
    auto log_likelihood = [&](const Eigen::MatrixXd& sigma) {
      const Eigen::MatrixXd l = chol_lower(sigma, "sigma_t update");
      double total = 0.0;
      for (int i : subjects) {
        const Eigen::VectorXd mean =
            state.st.beta_t.row(t).transpose() + l * state.st.zeta_tilde.row(i).transpose();
        total += gaussian_logpdf(clamped_logit_row(state.base.latent.lambda, i), mean, sigma);
      }
      return total;
    };

    const Eigen::MatrixXd& current = state.st.sigma_t[std::size_t(t)];
    const Eigen::MatrixXd scale_current = residual_scale(current);
    RngStream rng(seed, domain(sweep, kStepSigmaT), std::uint64_t(t));
    const Eigen::MatrixXd proposal =
        sample_inverse_wishart(hyper.nu0 + m, scale_current, rng);
    const double accept_uniform = rng.uniform();

    const bool spatial_active = state.st.zeta_tilde.cwiseAbs().maxCoeff() > 0.0;
    if (!spatial_active) {
      // The conjugate proposal coincides with the conditional; always accept.
      state.st.sigma_t[std::size_t(t)] = proposal;
      continue;
    }

    const Eigen::MatrixXd scale_proposal = residual_scale(proposal);
    double log_ratio = inverse_wishart_logpdf(proposal, hyper.nu0, hyper.psi0) -
                       inverse_wishart_logpdf(current, hyper.nu0, hyper.psi0);
    log_ratio += log_likelihood(proposal) - log_likelihood(current);
    log_ratio += inverse_wishart_logpdf(current, hyper.nu0 + m, scale_proposal) -
                 inverse_wishart_logpdf(proposal, hyper.nu0 + m, scale_current);
    if (std::log(accept_uniform) < log_ratio) {
      state.st.sigma_t[std::size_t(t)] = proposal;
    }
  }
}

namespace {

// Step 4 with per-subject means beta_t + zeta and per-epoch covariances.
void update_lambda_st(StState& state, const SpaceTimeCovariates& cov, std::uint64_t seed,
                      std::uint64_t sweep) {
  const int n = int(state.base.latent.lambda.rows());
  const int G = int(state.base.latent.lambda.cols());
  std::vector<Eigen::MatrixXd> sigma_inv;
  sigma_inv.reserve(std::size_t(cov.num_epochs()));
  for (int t = 0; t < cov.num_epochs(); ++t) {
    sigma_inv.push_back(spd_inverse(state.st.sigma_t[std::size_t(t)], "lambda update"));
  }
  for (int i = 0; i < n; ++i) {
    const int t = cov.time_id[std::size_t(i)];
    const Eigen::VectorXd prior_mean =
        state.st.beta_t.row(t).transpose() + state.st.zeta.row(i).transpose();
    Eigen::MatrixXd precision = sigma_inv[std::size_t(t)];
    precision.diagonal() += state.base.latent.omega.row(i).transpose();
    const Eigen::MatrixXd cond_cov = spd_inverse(precision, "lambda update");
    const Eigen::VectorXd cond_mean =
        cond_cov * (sigma_inv[std::size_t(t)] * prior_mean +
                    state.base.latent.k.row(i).transpose());
    RngStream rng(seed, domain(sweep, kStepLambda), std::uint64_t(i));
    const Eigen::VectorXd y = rng.normal_vector(cond_mean, chol_lower(cond_cov, "lambda update"));
    for (int g = 0; g < G; ++g) {
      state.base.latent.lambda(i, g) = sigmoid(std::clamp(y[g], -kMaxLogit, kMaxLogit));
    }
  }
}

}  // namespace

StState init_state_st(const CategoricalDataset& dataset, const GroupPartition& partition,
                      const Hyperparams& hyper, const SpaceTimeCovariates& cov,
                      const StConfig& config, std::uint64_t seed) {
  const int n = dataset.n();
  const int G = partition.num_groups;
  const int T = cov.num_epochs();
  StState state;
  state.base = init_state(dataset, partition, hyper, seed);
  state.st.beta = config.beta0;
  state.st.sigma_beta = config.fix_hyper ? config.sigma0_beta : config.psi_beta;
  state.st.beta_t = config.beta0.transpose().replicate(T, 1);
  state.st.sigma_t.assign(std::size_t(T), hyper.psi0);
  state.st.zeta_tilde = Eigen::MatrixXd::Zero(n, G);
  state.st.zeta = Eigen::MatrixXd::Zero(n, G);
  state.st.gammas.assign(std::size_t(T), Eigen::MatrixXd::Ones(G, 2));
  state.st.nugget = config.nugget;
  const double log_sd = config.proposal_sd > 0.0 ? std::log(config.proposal_sd)
                                                 : -std::numeric_limits<double>::infinity();
  state.st.log_proposal_sd.assign(std::size_t(T), Eigen::MatrixXd::Constant(G, 2, log_sd));
  state.st.accept_count.assign(std::size_t(T), Eigen::MatrixXd::Zero(G, 2));
  state.st.attempt_count.assign(std::size_t(T), Eigen::MatrixXd::Zero(G, 2));
  return state;
}

void gibbs_sweep_st(const CategoricalDataset& dataset, const GroupPartition& partition,
                    const Hyperparams& hyper, const SpaceTimeCovariates& cov,
                    const StConfig& config, StState& state, bool adapting, std::uint64_t seed,
                    std::uint64_t sweep) {
  state.base.kernels = update_kernels(dataset, state.base.latent.z, hyper, seed, sweep);
  state.base.latent.z = update_indicators(dataset, partition, state.base.kernels,
                                          state.base.latent.lambda, seed, sweep);
  state.base.latent.k = compute_group_counts(state.base.latent.z, partition);
  state.base.latent.omega = update_omega(state.base.latent.lambda, partition, seed, sweep);
  // The epoch-effect conditional integrates the scores out, so it runs before
  // the lambda refresh.
  update_beta_hierarchy(state, cov, config, seed, sweep);
  update_lambda_st(state, cov, seed, sweep);
  if (!config.disable_spatial) {
    update_zeta(state, cov, config, seed, sweep);
    update_length_scales(state, cov, config, adapting, seed, sweep);
  }
  update_sigma_t(state, cov, hyper, seed, sweep);
}

ChainSamples run_chain_st(const CategoricalDataset& dataset, const GroupPartition& partition,
                          const Hyperparams& hyper, const SpaceTimeCovariates& cov,
                          const StConfig& st_config, const ChainConfig& config) {
  dataset.validate();
  validate_partition(dataset, partition);
  hyper.validate(dataset, partition);
  cov.validate(dataset.n());
  st_config.validate(partition.num_groups);
  config.validate();

  StState state = init_state_st(dataset, partition, hyper, cov, st_config, config.seed);

  ChainSamples samples;
  samples.meta.seed = config.seed;
  samples.meta.iterations = config.iterations;
  samples.meta.burn_in = config.burn_in;
  samples.meta.thin = config.thin;
  samples.meta.dataset_digest = dataset_digest(dataset);

  for (int sweep = 1; sweep <= config.iterations; ++sweep) {
    const bool adapting = sweep <= config.burn_in;
    try {
      gibbs_sweep_st(dataset, partition, hyper, cov, st_config, state, adapting, config.seed,
                     std::uint64_t(sweep));
    } catch (const NumericError& e) {
      throw NumericError("sweep " + std::to_string(sweep) + ": " + e.what());
    }
    if (config.check_invariants) state.base.validate(dataset, partition);
    if (sweep > config.burn_in && (sweep - config.burn_in) % config.thin == 0) {
      samples.meta.retained_iterations.push_back(sweep);
      if (config.retain.lambda) samples.lambda.push_back(state.base.latent.lambda);
      if (config.retain.kernels) samples.kernels.push_back(state.base.kernels);
      if (config.retain.mu) samples.mu.push_back(state.st.beta);
      if (config.retain.sigma) samples.sigma.push_back(state.st.sigma_beta);
      if (config.retain.spatial) {
        samples.beta_t.push_back(state.st.beta_t);
        samples.beta.push_back(state.st.beta);
        samples.sigma_beta.push_back(state.st.sigma_beta);
        samples.sigma_t.push_back(state.st.sigma_t);
        samples.zeta.push_back(state.st.zeta);
        samples.gammas.push_back(state.st.gammas);
      }
    }
  }
  return samples;
}

std::vector<ZetaGridRow> predict_zeta(const Eigen::MatrixXd& grid, const ChainSamples& samples,
                                      const SpaceTimeCovariates& cov, double nugget) {
  if (!samples.has_spatial()) {
    throw ValidationError("chain samples carry no spatial fields");
  }
  if (grid.cols() != 2 || !grid.allFinite()) {
    throw ValidationError("grid must be a finite Q x 2 coordinate list");
  }
  const int T = cov.num_epochs();
  const int G = int(samples.beta_t.front().cols());
  const int q = int(grid.rows());
  const int draws = int(samples.zeta.size());

  std::vector<ZetaGridRow> rows;
  rows.reserve(std::size_t(T) * std::size_t(G) * std::size_t(q));
  for (int t = 0; t < T; ++t) {
    const std::vector<int> subjects = cov.subjects_in_epoch(t);
    const int m = int(subjects.size());
    Eigen::MatrixXd coords(m, 2);
    for (int r = 0; r < m; ++r) coords.row(r) = cov.coords.row(subjects[std::size_t(r)]);

    Eigen::MatrixXd sum_mean = Eigen::MatrixXd::Zero(G, q);
    Eigen::MatrixXd sum_sq_mean = Eigen::MatrixXd::Zero(G, q);
    Eigen::MatrixXd sum_var = Eigen::MatrixXd::Zero(G, q);
    Eigen::MatrixXd sum_prob = Eigen::MatrixXd::Zero(G, q);

    for (int d = 0; d < draws; ++d) {
      const Eigen::MatrixXd l =
          chol_lower(samples.sigma_t[std::size_t(d)][std::size_t(t)], "predict_zeta");
      // Recover the whitened effects stored in this draw.
      Eigen::MatrixXd ztilde(m, G);
      for (int r = 0; r < m; ++r) {
        ztilde.row(r) =
            l.triangularView<Eigen::Lower>()
                .solve(samples.zeta[std::size_t(d)].row(subjects[std::size_t(r)]).transpose())
                .transpose();
      }
      Eigen::MatrixXd cond_mean(G, q);
      Eigen::MatrixXd cond_var(G, q);
      for (int g = 0; g < G; ++g) {
        const GpPrediction pred = gp_conditional(
            coords, ztilde.col(g), grid,
            samples.gammas[std::size_t(d)][std::size_t(t)].row(g).transpose(), nugget);
        cond_mean.row(g) = pred.mean.transpose();
        cond_var.row(g) = pred.variance.transpose();
      }
      for (int g = 0; g < G; ++g) {
        for (int point = 0; point < q; ++point) {
          double mean = 0.0, var = 0.0;
          for (int g2 = 0; g2 < G; ++g2) {
            mean += l(g, g2) * cond_mean(g2, point);
            var += l(g, g2) * l(g, g2) * cond_var(g2, point);
          }
          sum_mean(g, point) += mean;
          sum_sq_mean(g, point) += mean * mean;
          sum_var(g, point) += var;
          sum_prob(g, point) +=
              sigmoid(samples.beta_t[std::size_t(d)](t, g) + mean);
        }
      }
    }

    for (int g = 0; g < G; ++g) {
      for (int point = 0; point < q; ++point) {
        ZetaGridRow row;
        row.epoch_label = cov.epoch_labels[std::size_t(t)];
        row.group = g + 1;
        row.x = grid(point, 0);
        row.y = grid(point, 1);
        row.mean = sum_mean(g, point) / draws;
        const double mean_var = sum_sq_mean(g, point) / draws - row.mean * row.mean;
        row.sd = std::sqrt(std::max(0.0, sum_var(g, point) / draws + mean_var));
        row.prob_scale_mean = sum_prob(g, point) / draws;
        rows.push_back(row);
      }
    }
  }
  return rows;
}

}  // namespace mmm
