#ifndef MMM_MLND_HPP
#define MMM_MLND_HPP

#include <vector>

#include <Eigen/Core>

#include "mmm/rng.hpp"

namespace mmm {

/// Sizes of the per-group simplices making up the product space.
/// The latent (logit) dimension is sum_g (H_g - 1); the reference category
/// of each block is its last index.
struct GroupShape {
  std::vector<int> sizes;

  int num_groups() const { return int(sizes.size()); }
  int latent_dim() const;
  int point_dim() const;
  int latent_offset(int g) const;
  int point_offset(int g) const;
  void validate() const;
};

/// Gaussian on the stacked logit scale pushed onto the product of simplices.
struct MlndParams {
  GroupShape shape;
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;

  void validate() const;
};

/// A point on the product of simplices; concatenated per-group blocks, each
/// summing to 1 with entries strictly inside (0,1).
struct SimplexPoint {
  GroupShape shape;
  Eigen::VectorXd values;

  void validate() const;
};

/// Blockwise softmax with implicit last reference category.
SimplexPoint to_simplex(const Eigen::VectorXd& y, const GroupShape& shape);

/// Inverse of to_simplex: log(x_h / x_ref) per block. Throws on boundary
/// points (a coordinate exactly 0 or 1).
Eigen::VectorXd to_logits(const SimplexPoint& x);

/// Clips coordinates into [eps, 1-eps] and renormalizes each block; used by
/// diagnostics on user-supplied points, never by the sampler.
SimplexPoint clip_to_interior(const SimplexPoint& x, double eps = 1e-12);

/// Log density: Gaussian at the logits minus the log-Jacobian
/// sum_g sum_h log x_h.
double logpdf(const SimplexPoint& x, const MlndParams& params);

/// Draw Y ~ N(mu, sigma) via Cholesky, return to_simplex(Y).
SimplexPoint sample(const MlndParams& params, RngStream& rng);

/// Compound construction: independent per-group logistic normals with a
/// Gaussian mean vector collapse to a single MLND with covariance
/// Sigma0 + blockdiag(group_sigmas).
MlndParams compound_params(const Eigen::VectorXd& mu0, const Eigen::MatrixXd& sigma0,
                           const std::vector<Eigen::MatrixXd>& group_sigmas,
                           const GroupShape& shape);

/// Group-preserving linear transform: blocks[g] has size q_g x (H_g - 1);
/// the result is MLND(B mu, B sigma B^T) over blocks of size q_g + 1.
/// Within-group label permutations are the square special case.
MlndParams linear_transform(const MlndParams& params,
                            const std::vector<Eigen::MatrixXd>& blocks);

/// Applies the deterministic point transform matching linear_transform, so
/// transformed samples can be compared against the transformed distribution.
SimplexPoint transform_point(const SimplexPoint& x,
                             const std::vector<Eigen::MatrixXd>& blocks);

/// Expected log odds between category h of group g and category h2 of group
/// g2 (0-based; h < H_g - 1). Depends on the means only.
double log_odds_mean(const MlndParams& params, int g, int h, int g2, int h2);

/// Expected odds ratio: exp of the log-odds mean plus half the variance of
/// the log-odds difference.
double odds_ratio_mean(const MlndParams& params, int g, int h, int g2, int h2);

}  // namespace mmm

#endif  // MMM_MLND_HPP
