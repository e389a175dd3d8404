#ifndef MMM_TESTS_SUPPORT_TOY_MODELS_HPP
#define MMM_TESTS_SUPPORT_TOY_MODELS_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <vector>

#include <Eigen/Cholesky>

#include "mmm/dataset.hpp"
#include "mmm/gibbs.hpp"
#include "mmm/mlnd.hpp"
#include "mmm/polya_gamma.hpp"
#include "mmm/rng.hpp"
#include "mmm/spatiotemporal.hpp"

namespace mmm::test {

// Small grouped datasets used across the suites.

inline CategoricalDataset make_dataset(int n, const std::vector<int>& levels,
                                       const Eigen::MatrixXi& codes) {
  CategoricalDataset dataset;
  dataset.codes = codes;
  dataset.levels = levels;
  for (std::size_t j = 0; j < levels.size(); ++j) {
    dataset.names.push_back("v" + std::to_string(j + 1));
  }
  dataset.validate();
  (void)n;
  return dataset;
}

// Draws a complete forward replicate of the plain model; the dataset codes
// are filled in place. Used as the fixed-distribution side of the Geweke
// comparisons and as the initial state of the successive-conditional chain.
struct ForwardDraw {
  ChainState state;
  Eigen::MatrixXi codes;
};

inline ForwardDraw forward_draw(const std::vector<int>& levels, const GroupPartition& partition,
                                const Hyperparams& hyper, int n, RngStream& rng) {
  const int p = int(levels.size());
  const int G = partition.num_groups;
  ForwardDraw draw;
  draw.state.kernels.theta.resize(std::size_t(p));
  for (int j = 0; j < p; ++j) {
    Eigen::MatrixXd theta(2, levels[std::size_t(j)]);
    for (int h = 0; h < 2; ++h) {
      theta.row(h) = rng.dirichlet(hyper.alpha[std::size_t(j)]).transpose();
    }
    draw.state.kernels.theta[std::size_t(j)] = theta;
  }
  const Eigen::MatrixXd sigma0_l =
      Eigen::LLT<Eigen::MatrixXd>(hyper.sigma0).matrixL();
  draw.state.mu = rng.normal_vector(hyper.mu0, sigma0_l);
  draw.state.sigma = sample_inverse_wishart(hyper.nu0, hyper.psi0, rng);
  const Eigen::MatrixXd sigma_l = Eigen::LLT<Eigen::MatrixXd>(draw.state.sigma).matrixL();

  draw.state.latent.lambda.resize(n, G);
  draw.state.latent.z.resize(n, p);
  draw.codes.resize(n, p);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd y = rng.normal_vector(draw.state.mu, sigma_l);
    for (int g = 0; g < G; ++g) {
      draw.state.latent.lambda(i, g) = sigmoid(std::clamp(y[g], -kMaxLogit, kMaxLogit));
    }
    for (int j = 0; j < p; ++j) {
      const int g = partition.assignment[std::size_t(j)];
      const int z = rng.uniform() < draw.state.latent.lambda(i, g) ? 1 : 0;
      draw.state.latent.z(i, j) = z;
      const Eigen::VectorXd probs =
          draw.state.kernels.theta[std::size_t(j)].row(z).transpose();
      draw.codes(i, j) =
          rng.categorical(std::span<const double>(probs.data(), std::size_t(probs.size())));
    }
  }
  draw.state.latent.k = compute_group_counts(draw.state.latent.z, partition);
  // Omega is auxiliary: completed from its conditional.
  draw.state.latent.omega = Eigen::MatrixXd::Zero(n, G);
  for (int i = 0; i < n; ++i) {
    for (int g = 0; g < G; ++g) {
      draw.state.latent.omega(i, g) = pg_sample(
          partition.group_sizes[std::size_t(g)],
          clamped_logit(draw.state.latent.lambda(i, g)), rng);
    }
  }
  return draw;
}

// Forward replicate of the space-time variant.
struct ForwardDrawSt {
  StState state;
  Eigen::MatrixXi codes;
};

inline ForwardDrawSt forward_draw_st(const std::vector<int>& levels,
                                     const GroupPartition& partition, const Hyperparams& hyper,
                                     const SpaceTimeCovariates& cov, const StConfig& config,
                                     int n, RngStream& rng) {
  const int p = int(levels.size());
  const int G = partition.num_groups;
  const int T = cov.num_epochs();
  ForwardDrawSt draw;
  StState& state = draw.state;

  state.base.kernels.theta.resize(std::size_t(p));
  for (int j = 0; j < p; ++j) {
    Eigen::MatrixXd theta(2, levels[std::size_t(j)]);
    for (int h = 0; h < 2; ++h) {
      theta.row(h) = rng.dirichlet(hyper.alpha[std::size_t(j)]).transpose();
    }
    state.base.kernels.theta[std::size_t(j)] = theta;
  }

  if (config.fix_hyper) {
    state.st.beta = config.beta0;
    state.st.sigma_beta = config.sigma0_beta;
  } else {
    state.st.beta = rng.normal_vector(
        config.beta0, Eigen::LLT<Eigen::MatrixXd>(config.sigma0_beta).matrixL());
    state.st.sigma_beta = sample_inverse_wishart(config.nu_beta, config.psi_beta, rng);
  }
  const Eigen::MatrixXd sigma_beta_l =
      Eigen::LLT<Eigen::MatrixXd>(state.st.sigma_beta).matrixL();
  state.st.beta_t.resize(T, G);
  state.st.sigma_t.clear();
  state.st.gammas.clear();
  for (int t = 0; t < T; ++t) {
    state.st.beta_t.row(t) = rng.normal_vector(state.st.beta, sigma_beta_l).transpose();
    state.st.sigma_t.push_back(sample_inverse_wishart(hyper.nu0, hyper.psi0, rng));
    Eigen::MatrixXd gamma(G, 2);
    for (int g = 0; g < G; ++g) {
      for (int d = 0; d < 2; ++d) {
        gamma(g, d) = config.disable_spatial
                          ? 1.0
                          : std::exp(config.log_gamma_prior_sd * rng.normal());
      }
    }
    state.st.gammas.push_back(gamma);
  }

  state.st.nugget = config.nugget;
  state.st.zeta_tilde = Eigen::MatrixXd::Zero(n, G);
  state.st.zeta = Eigen::MatrixXd::Zero(n, G);
  if (!config.disable_spatial) {
    for (int t = 0; t < T; ++t) {
      const std::vector<int> subjects = cov.subjects_in_epoch(t);
      const int m = int(subjects.size());
      Eigen::MatrixXd coords(m, 2);
      for (int r = 0; r < m; ++r) coords.row(r) = cov.coords.row(subjects[std::size_t(r)]);
      const Eigen::MatrixXd l_t =
          Eigen::LLT<Eigen::MatrixXd>(state.st.sigma_t[std::size_t(t)]).matrixL();
      for (int g = 0; g < G; ++g) {
        const Eigen::MatrixXd kernel = se_kernel_matrix(
            coords, state.st.gammas[std::size_t(t)].row(g).transpose(), config.nugget);
        const Eigen::VectorXd field = rng.normal_vector(
            Eigen::VectorXd::Zero(m), Eigen::LLT<Eigen::MatrixXd>(kernel).matrixL());
        for (int r = 0; r < m; ++r) {
          state.st.zeta_tilde(subjects[std::size_t(r)], g) = field[r];
        }
      }
      for (int r = 0; r < m; ++r) {
        const int i = subjects[std::size_t(r)];
        state.st.zeta.row(i) = (l_t * state.st.zeta_tilde.row(i).transpose()).transpose();
      }
    }
  }

  state.base.latent.lambda.resize(n, G);
  state.base.latent.z.resize(n, p);
  draw.codes.resize(n, p);
  for (int i = 0; i < n; ++i) {
    const int t = cov.time_id[std::size_t(i)];
    const Eigen::VectorXd mean =
        state.st.beta_t.row(t).transpose() + state.st.zeta.row(i).transpose();
    const Eigen::MatrixXd sigma_l =
        Eigen::LLT<Eigen::MatrixXd>(state.st.sigma_t[std::size_t(t)]).matrixL();
    const Eigen::VectorXd y = rng.normal_vector(mean, sigma_l);
    for (int g = 0; g < G; ++g) {
      state.base.latent.lambda(i, g) = sigmoid(std::clamp(y[g], -kMaxLogit, kMaxLogit));
    }
    for (int j = 0; j < p; ++j) {
      const int g = partition.assignment[std::size_t(j)];
      const int z = rng.uniform() < state.base.latent.lambda(i, g) ? 1 : 0;
      state.base.latent.z(i, j) = z;
      const Eigen::VectorXd probs =
          state.base.kernels.theta[std::size_t(j)].row(z).transpose();
      draw.codes(i, j) =
          rng.categorical(std::span<const double>(probs.data(), std::size_t(probs.size())));
    }
  }
  state.base.latent.k = compute_group_counts(state.base.latent.z, partition);
  state.base.latent.omega = Eigen::MatrixXd::Zero(n, G);
  for (int i = 0; i < n; ++i) {
    for (int g = 0; g < G; ++g) {
      state.base.latent.omega(i, g) = pg_sample(
          partition.group_sizes[std::size_t(g)],
          clamped_logit(state.base.latent.lambda(i, g)), rng);
    }
  }
  // Metropolis bookkeeping.
  const double log_sd = config.proposal_sd > 0.0
                            ? std::log(config.proposal_sd)
                            : -std::numeric_limits<double>::infinity();
  state.st.log_proposal_sd.assign(std::size_t(T), Eigen::MatrixXd::Constant(G, 2, log_sd));
  state.st.accept_count.assign(std::size_t(T), Eigen::MatrixXd::Zero(G, 2));
  state.st.attempt_count.assign(std::size_t(T), Eigen::MatrixXd::Zero(G, 2));
  return draw;
}

// Regenerates the observations from their conditional X_ij ~ Cat(theta_{z_ij}).
inline void regenerate_codes(Eigen::MatrixXi& codes, const KernelSet& kernels,
                             const Eigen::MatrixXi& z, RngStream& rng) {
  for (int i = 0; i < codes.rows(); ++i) {
    for (int j = 0; j < codes.cols(); ++j) {
      const Eigen::VectorXd probs =
          kernels.theta[std::size_t(j)].row(z(i, j)).transpose();
      codes(i, j) =
          rng.categorical(std::span<const double>(probs.data(), std::size_t(probs.size())));
    }
  }
}

// Running mean/variance accumulator with batch-means standard errors for
// autocorrelated sequences.
class MomentTracker {
 public:
  explicit MomentTracker(int num_stats, int num_batches = 50)
      : num_batches_(num_batches),
        sums_(Eigen::VectorXd::Zero(num_stats)),
        batch_sums_(Eigen::MatrixXd::Zero(num_batches, num_stats)) {}

  void add(const Eigen::VectorXd& stats, int index, int total) {
    sums_ += stats;
    const int batch = std::min(num_batches_ - 1, index * num_batches_ / total);
    batch_sums_.row(batch) += stats.transpose();
    ++count_;
    ++batch_counts_[std::size_t(batch)];
  }

  Eigen::VectorXd mean() const { return sums_ / double(count_); }

  // Standard error of the mean from batch means.
  Eigen::VectorXd standard_error() const {
    const Eigen::VectorXd overall = mean();
    Eigen::VectorXd out = Eigen::VectorXd::Zero(sums_.size());
    int used = 0;
    std::vector<Eigen::VectorXd> batch_means;
    for (int b = 0; b < num_batches_; ++b) {
      const auto it = batch_counts_.find(std::size_t(b));
      if (it == batch_counts_.end() || it->second == 0) continue;
      batch_means.push_back(batch_sums_.row(b).transpose() / double(it->second));
      ++used;
    }
    for (const auto& bm : batch_means) {
      out += (bm - overall).cwiseProduct(bm - overall);
    }
    out /= double(std::max(1, used - 1));
    return (out / double(used)).cwiseSqrt();
  }

 private:
  int num_batches_;
  int count_ = 0;
  Eigen::VectorXd sums_;
  Eigen::MatrixXd batch_sums_;
  std::map<std::size_t, int> batch_counts_;
};

}  // namespace mmm::test

#endif  // MMM_TESTS_SUPPORT_TOY_MODELS_HPP
