#include "mmm/gibbs.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>

#include "mmm/errors.hpp"
#include "mmm/polya_gamma.hpp"

namespace mmm {

namespace {

// Stream domain ids; one sweep owns domains sweep*16 + step.
enum Step : std::uint64_t {
  kStepKernels = 1,
  kStepIndicators = 2,
  kStepOmega = 3,
  kStepLambda = 4,
  kStepMu = 5,
  kStepSigma = 6,
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

}  // namespace

double sigmoid(double y) { return 1.0 / (1.0 + std::exp(-y)); }

double logit(double p) { return std::log(p / (1.0 - p)); }

double clamped_logit(double p) {
  const double y = logit(p);
  if (y > kMaxLogit) return kMaxLogit;
  if (y < -kMaxLogit) return -kMaxLogit;
  return y;
}

void ChainState::validate(const CategoricalDataset& dataset,
                          const GroupPartition& partition) const {
  const int n = dataset.n();
  const int G = partition.num_groups;
  kernels.validate();
  if (kernels.num_variables() != dataset.p() || kernels.num_profiles() != 2) {
    throw ValidationError("chain state kernels must be 2 x d_j per variable");
  }
  if (latent.z.rows() != n || latent.z.cols() != dataset.p()) {
    throw ValidationError("indicator matrix has wrong shape");
  }
  if ((latent.z.array() < 0).any() || (latent.z.array() > 1).any()) {
    throw ValidationError("indicators must be 0/1");
  }
  auto check_ng = [&](const Eigen::MatrixXd& m, const char* what) {
    if (m.rows() != n || m.cols() != G) {
      throw ValidationError(std::string(what) + " must be n x G");
    }
  };
  check_ng(latent.lambda, "lambda");
  check_ng(latent.omega, "omega");
  check_ng(latent.k, "k");
  if (!((latent.lambda.array() > 0.0) && (latent.lambda.array() < 1.0)).all()) {
    throw ValidationError("lambda entries must lie strictly in (0,1)");
  }
  if (!(latent.omega.array() > 0.0).all()) {
    throw ValidationError("omega entries must be positive");
  }
  for (int g = 0; g < G; ++g) {
    const double half = 0.5 * partition.group_sizes[std::size_t(g)];
    if ((latent.k.col(g).array().abs() > half + 1e-9).any()) {
      throw ValidationError("k entries outside [-p_g/2, p_g/2]");
    }
  }
  if (mu.size() != G) throw ValidationError("mu must have length G");
  if (sigma.rows() != G || sigma.cols() != G) throw ValidationError("sigma must be G x G");
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) throw ValidationError("sigma must be positive definite");
}

void ChainConfig::validate() const {
  if (burn_in < 0 || iterations <= burn_in) {
    throw ValidationError("iterations must exceed burn_in >= 0");
  }
  if (thin < 1) throw ValidationError("thin must be >= 1");
}

KernelSet update_kernels(const CategoricalDataset& dataset, const Eigen::MatrixXi& z,
                         const Hyperparams& hyper, std::uint64_t seed, std::uint64_t sweep) {
  KernelSet kernels;
  kernels.theta.resize(std::size_t(dataset.p()));
  for (int j = 0; j < dataset.p(); ++j) {
    const int d = dataset.levels[std::size_t(j)];
    Eigen::MatrixXd theta(2, d);
    for (int h = 0; h < 2; ++h) {
      Eigen::VectorXd posterior = hyper.alpha[std::size_t(j)];
      for (int i = 0; i < dataset.n(); ++i) {
        if (z(i, j) == h) posterior[dataset.codes(i, j)] += 1.0;
      }
      RngStream rng(seed, domain(sweep, kStepKernels), std::uint64_t(j) * 2 + std::uint64_t(h));
      theta.row(h) = rng.dirichlet(posterior).transpose();
    }
    kernels.theta[std::size_t(j)] = theta;
  }
  return kernels;
}

Eigen::MatrixXi update_indicators(const CategoricalDataset& dataset,
                                  const GroupPartition& partition, const KernelSet& kernels,
                                  const Eigen::MatrixXd& lambda, std::uint64_t seed,
                                  std::uint64_t sweep) {
  const int n = dataset.n();
  const int p = dataset.p();
  Eigen::MatrixXi z(n, p);
  for (int i = 0; i < n; ++i) {
    RngStream rng(seed, domain(sweep, kStepIndicators), std::uint64_t(i));
    for (int j = 0; j < p; ++j) {
      const int g = partition.assignment[std::size_t(j)];
      const int x = dataset.codes(i, j);
      const double lam = lambda(i, g);
      const double w1 = (1.0 - lam) * kernels.theta[std::size_t(j)](0, x);
      const double w2 = lam * kernels.theta[std::size_t(j)](1, x);
      const double denom = w1 + w2;
      if (!(denom > 0.0)) {
        throw NumericError("profile indicator denominator vanished at subject " +
                           std::to_string(i + 1) + ", variable " + dataset.names[std::size_t(j)]);
      }
      z(i, j) = rng.uniform() < w2 / denom ? 1 : 0;
    }
  }
  return z;
}

Eigen::MatrixXd compute_group_counts(const Eigen::MatrixXi& z, const GroupPartition& partition) {
  const int n = int(z.rows());
  const int G = partition.num_groups;
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, G);
  for (int j = 0; j < int(z.cols()); ++j) {
    const int g = partition.assignment[std::size_t(j)];
    for (int i = 0; i < n; ++i) k(i, g) += z(i, j);
  }
  for (int g = 0; g < G; ++g) {
    k.col(g).array() -= 0.5 * partition.group_sizes[std::size_t(g)];
  }
  return k;
}

Eigen::MatrixXd update_omega(const Eigen::MatrixXd& lambda, const GroupPartition& partition,
                             std::uint64_t seed, std::uint64_t sweep) {
  const int n = int(lambda.rows());
  const int G = partition.num_groups;
  Eigen::MatrixXd omega(n, G);
  for (int i = 0; i < n; ++i) {
    RngStream rng(seed, domain(sweep, kStepOmega), std::uint64_t(i));
    for (int g = 0; g < G; ++g) {
      omega(i, g) =
          pg_sample(partition.group_sizes[std::size_t(g)], clamped_logit(lambda(i, g)), rng);
    }
  }
  return omega;
}

Eigen::MatrixXd update_lambda(const Eigen::MatrixXd& omega, const Eigen::MatrixXd& k,
                              const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma,
                              std::uint64_t seed, std::uint64_t sweep) {
  const int n = int(omega.rows());
  const int G = int(omega.cols());
  const Eigen::MatrixXd sigma_inv = spd_inverse(sigma, "lambda update");
  const Eigen::VectorXd prior_term = sigma_inv * mu;
  Eigen::MatrixXd lambda(n, G);
  for (int i = 0; i < n; ++i) {
    Eigen::MatrixXd precision = sigma_inv;
    precision.diagonal() += omega.row(i).transpose();
    const Eigen::MatrixXd cond_cov = spd_inverse(precision, "lambda update");
    const Eigen::VectorXd cond_mean = cond_cov * (prior_term + k.row(i).transpose());
    RngStream rng(seed, domain(sweep, kStepLambda), std::uint64_t(i));
    const Eigen::VectorXd y = rng.normal_vector(cond_mean, chol_lower(cond_cov, "lambda update"));
    for (int g = 0; g < G; ++g) {
      lambda(i, g) = sigmoid(std::clamp(y[g], -kMaxLogit, kMaxLogit));
    }
  }
  return lambda;
}

Eigen::VectorXd update_mu(const Eigen::MatrixXd& omega, const Eigen::MatrixXd& k,
                          const Eigen::MatrixXd& sigma, const Hyperparams& hyper,
                          std::uint64_t seed, std::uint64_t sweep) {
  const int n = int(omega.rows());
  const int G = int(omega.cols());
  const Eigen::MatrixXd sigma0_inv = spd_inverse(hyper.sigma0, "mu update");
  Eigen::MatrixXd precision = sigma0_inv;
  Eigen::VectorXd shift = sigma0_inv * hyper.mu0;
  for (int i = 0; i < n; ++i) {
    Eigen::MatrixXd upsilon_inv = sigma;
    Eigen::VectorXd pseudo(G);
    for (int g = 0; g < G; ++g) {
      upsilon_inv(g, g) += 1.0 / omega(i, g);
      pseudo[g] = k(i, g) / omega(i, g);
    }
    const Eigen::MatrixXd upsilon = spd_inverse(upsilon_inv, "mu update");
    precision += upsilon;
    shift += upsilon * pseudo;
  }
  const Eigen::MatrixXd cond_cov = spd_inverse(precision, "mu update");
  const Eigen::VectorXd cond_mean = cond_cov * shift;
  RngStream rng(seed, domain(sweep, kStepMu), 0);
  return rng.normal_vector(cond_mean, chol_lower(cond_cov, "mu update"));
}

Eigen::MatrixXd sample_inverse_wishart(double df, const Eigen::MatrixXd& scale, RngStream& rng) {
  const int G = int(scale.rows());
  if (!(df > G - 1)) throw ValidationError("inverse-Wishart requires df > G - 1");
  const Eigen::MatrixXd scale_inv = spd_inverse(scale, "inverse-Wishart scale");
  const Eigen::MatrixXd l = chol_lower(0.5 * (scale_inv + scale_inv.transpose()),
                                       "inverse-Wishart scale");
  // Bartlett factor of Wishart(df, scale^{-1}).
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(G, G);
  for (int i = 0; i < G; ++i) {
    a(i, i) = std::sqrt(rng.chi_squared(df - i));
    for (int j = 0; j < i; ++j) a(i, j) = rng.normal();
  }
  const Eigen::MatrixXd factor = l * a;
  const Eigen::MatrixXd wishart = factor * factor.transpose();
  Eigen::MatrixXd sigma = spd_inverse(wishart, "inverse-Wishart draw");
  return 0.5 * (sigma + sigma.transpose());
}

Eigen::MatrixXd update_sigma(const Eigen::MatrixXd& lambda, const Eigen::VectorXd& mu,
                             const Hyperparams& hyper, std::uint64_t seed, std::uint64_t sweep) {
  const int n = int(lambda.rows());
  const int G = int(lambda.cols());
  Eigen::MatrixXd scale = hyper.psi0;
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd centered(G);
    for (int g = 0; g < G; ++g) centered[g] = clamped_logit(lambda(i, g)) - mu[g];
    scale += centered * centered.transpose();
  }
  RngStream rng(seed, domain(sweep, kStepSigma), 0);
  return sample_inverse_wishart(hyper.nu0 + n, scale, rng);
}

ChainState init_state(const CategoricalDataset& dataset, const GroupPartition& partition,
                      const Hyperparams& hyper, std::uint64_t seed) {
  const int n = dataset.n();
  const int G = partition.num_groups;
  ChainState state;
  state.kernels.theta.resize(std::size_t(dataset.p()));
  for (int j = 0; j < dataset.p(); ++j) {
    const int d = dataset.levels[std::size_t(j)];
    Eigen::MatrixXd theta(2, d);
    for (int h = 0; h < 2; ++h) {
      RngStream rng(seed, domain(0, kStepInit), std::uint64_t(j) * 2 + std::uint64_t(h));
      theta.row(h) = rng.dirichlet(hyper.alpha[std::size_t(j)]).transpose();
    }
    state.kernels.theta[std::size_t(j)] = theta;
  }
  state.latent.lambda = Eigen::MatrixXd::Constant(n, G, 0.5);
  state.latent.z = update_indicators(dataset, partition, state.kernels, state.latent.lambda,
                                     seed, 0);
  state.latent.k = compute_group_counts(state.latent.z, partition);
  state.latent.omega = update_omega(state.latent.lambda, partition, seed, 0);
  state.mu = hyper.mu0;
  state.sigma = hyper.psi0;
  return state;
}

void gibbs_sweep(const CategoricalDataset& dataset, const GroupPartition& partition,
                 const Hyperparams& hyper, ChainState& state, std::uint64_t seed,
                 std::uint64_t sweep, bool collapsed_mu_first) {
  state.kernels = update_kernels(dataset, state.latent.z, hyper, seed, sweep);
  state.latent.z =
      update_indicators(dataset, partition, state.kernels, state.latent.lambda, seed, sweep);
  state.latent.k = compute_group_counts(state.latent.z, partition);
  state.latent.omega = update_omega(state.latent.lambda, partition, seed, sweep);
  if (collapsed_mu_first) {
    state.mu = update_mu(state.latent.omega, state.latent.k, state.sigma, hyper, seed, sweep);
    state.latent.lambda =
        update_lambda(state.latent.omega, state.latent.k, state.mu, state.sigma, seed, sweep);
  } else {
    state.latent.lambda =
        update_lambda(state.latent.omega, state.latent.k, state.mu, state.sigma, seed, sweep);
    state.mu = update_mu(state.latent.omega, state.latent.k, state.sigma, hyper, seed, sweep);
  }
  state.sigma = update_sigma(state.latent.lambda, state.mu, hyper, seed, sweep);
}

ChainSamples run_chain(const CategoricalDataset& dataset, const GroupPartition& partition,
                       const Hyperparams& hyper, const ChainConfig& config) {
  dataset.validate();
  validate_partition(dataset, partition);
  hyper.validate(dataset, partition);
  config.validate();

  ChainState state = init_state(dataset, partition, hyper, config.seed);

  ChainSamples samples;
  samples.meta.seed = config.seed;
  samples.meta.iterations = config.iterations;
  samples.meta.burn_in = config.burn_in;
  samples.meta.thin = config.thin;
  samples.meta.dataset_digest = dataset_digest(dataset);

  for (int sweep = 1; sweep <= config.iterations; ++sweep) {
    try {
      gibbs_sweep(dataset, partition, hyper, state, config.seed, std::uint64_t(sweep),
                  config.collapsed_mu_first);
    } catch (const NumericError& e) {
      throw NumericError("sweep " + std::to_string(sweep) + ": " + e.what());
    }
    if (config.check_invariants) state.validate(dataset, partition);
    if (sweep > config.burn_in && (sweep - config.burn_in) % config.thin == 0) {
      samples.meta.retained_iterations.push_back(sweep);
      if (config.retain.lambda) samples.lambda.push_back(state.latent.lambda);
      if (config.retain.kernels) samples.kernels.push_back(state.kernels);
      if (config.retain.mu) samples.mu.push_back(state.mu);
      if (config.retain.sigma) samples.sigma.push_back(state.sigma);
    }
  }
  return samples;
}

}  // namespace mmm
