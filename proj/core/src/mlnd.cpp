#include "mmm/mlnd.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Cholesky>

#include "mmm/errors.hpp"

namespace mmm {

namespace {

Eigen::LLT<Eigen::MatrixXd> cholesky_or_throw(const Eigen::MatrixXd& m, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) {
    throw NumericError(std::string(what) + ": matrix is not positive definite");
  }
  return llt;
}

}  // namespace

int GroupShape::latent_dim() const {
  int dim = 0;
  for (int h : sizes) dim += h - 1;
  return dim;
}

int GroupShape::point_dim() const {
  int dim = 0;
  for (int h : sizes) dim += h;
  return dim;
}

int GroupShape::latent_offset(int g) const {
  int off = 0;
  for (int k = 0; k < g; ++k) off += sizes[std::size_t(k)] - 1;
  return off;
}

int GroupShape::point_offset(int g) const {
  int off = 0;
  for (int k = 0; k < g; ++k) off += sizes[std::size_t(k)];
  return off;
}

void GroupShape::validate() const {
  if (sizes.empty()) throw ValidationError("group shape must have at least one block");
  for (int h : sizes) {
    if (h < 2) throw ValidationError("each simplex block needs H_g >= 2");
  }
}

void MlndParams::validate() const {
  shape.validate();
  const int d = shape.latent_dim();
  if (mu.size() != d || sigma.rows() != d || sigma.cols() != d) {
    throw ValidationError("MLND parameter dimensions do not match the shape");
  }
  if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-10) {
    throw ValidationError("MLND sigma must be symmetric");
  }
  cholesky_or_throw(sigma, "MLND sigma");
}

void SimplexPoint::validate() const {
  shape.validate();
  if (values.size() != shape.point_dim()) {
    throw ValidationError("simplex point length does not match the shape");
  }
  for (int g = 0; g < shape.num_groups(); ++g) {
    const int off = shape.point_offset(g);
    const int len = shape.sizes[std::size_t(g)];
    double total = 0.0;
    for (int h = 0; h < len; ++h) {
      const double v = values[off + h];
      if (!(v > 0.0 && v < 1.0)) {
        throw ValidationError("simplex coordinates must lie strictly in (0,1)");
      }
      total += v;
    }
    if (std::fabs(total - 1.0) > 1e-12 * len) {
      throw ValidationError("simplex block does not sum to 1");
    }
  }
}

SimplexPoint to_simplex(const Eigen::VectorXd& y, const GroupShape& shape) {
  shape.validate();
  if (y.size() != shape.latent_dim()) {
    throw ValidationError("latent vector length does not match the shape");
  }
  SimplexPoint x;
  x.shape = shape;
  x.values.resize(shape.point_dim());
  for (int g = 0; g < shape.num_groups(); ++g) {
    const int h_g = shape.sizes[std::size_t(g)];
    const int yoff = shape.latent_offset(g);
    const int xoff = shape.point_offset(g);
    // Shift by the max exponent so the softmax never overflows.
    double peak = 0.0;
    for (int h = 0; h < h_g - 1; ++h) peak = std::max(peak, y[yoff + h]);
    double denom = std::exp(-peak);
    for (int h = 0; h < h_g - 1; ++h) denom += std::exp(y[yoff + h] - peak);
    for (int h = 0; h < h_g - 1; ++h) {
      x.values[xoff + h] = std::exp(y[yoff + h] - peak) / denom;
    }
    x.values[xoff + h_g - 1] = std::exp(-peak) / denom;
  }
  return x;
}

Eigen::VectorXd to_logits(const SimplexPoint& x) {
  Eigen::VectorXd y(x.shape.latent_dim());
  for (int g = 0; g < x.shape.num_groups(); ++g) {
    const int h_g = x.shape.sizes[std::size_t(g)];
    const int yoff = x.shape.latent_offset(g);
    const int xoff = x.shape.point_offset(g);
    const double ref = x.values[xoff + h_g - 1];
    for (int h = 0; h < h_g; ++h) {
      const double v = x.values[xoff + h];
      if (v <= 0.0 || v >= 1.0) {
        throw ValidationError("to_logits is undefined on boundary points");
      }
    }
    for (int h = 0; h < h_g - 1; ++h) {
      y[yoff + h] = std::log(x.values[xoff + h] / ref);
    }
  }
  return y;
}

SimplexPoint clip_to_interior(const SimplexPoint& x, double eps) {
  SimplexPoint out = x;
  for (int g = 0; g < x.shape.num_groups(); ++g) {
    const int off = x.shape.point_offset(g);
    const int len = x.shape.sizes[std::size_t(g)];
    double total = 0.0;
    for (int h = 0; h < len; ++h) {
      double v = std::min(std::max(x.values[off + h], eps), 1.0 - eps);
      out.values[off + h] = v;
      total += v;
    }
    for (int h = 0; h < len; ++h) out.values[off + h] /= total;
  }
  return out;
}

double logpdf(const SimplexPoint& x, const MlndParams& params) {
  if (x.shape.sizes != params.shape.sizes) {
    throw ValidationError("point and parameter shapes differ");
  }
  const Eigen::VectorXd xstar = to_logits(x);
  const int d = params.shape.latent_dim();
  const auto llt = cholesky_or_throw(params.sigma, "MLND logpdf");
  const Eigen::VectorXd centered = xstar - params.mu;
  const Eigen::VectorXd half = llt.matrixL().solve(centered);
  double log_det = 0.0;
  for (int i = 0; i < d; ++i) log_det += std::log(llt.matrixL()(i, i));
  double log_jacobian = 0.0;
  for (int i = 0; i < x.values.size(); ++i) log_jacobian -= std::log(x.values[i]);
  return -0.5 * half.squaredNorm() - 0.5 * d * std::log(2.0 * std::numbers::pi) - log_det +
         log_jacobian;
}

SimplexPoint sample(const MlndParams& params, RngStream& rng) {
  const auto llt = cholesky_or_throw(params.sigma, "MLND sample");
  const Eigen::VectorXd y = rng.normal_vector(params.mu, llt.matrixL());
  return to_simplex(y, params.shape);
}

MlndParams compound_params(const Eigen::VectorXd& mu0, const Eigen::MatrixXd& sigma0,
                           const std::vector<Eigen::MatrixXd>& group_sigmas,
                           const GroupShape& shape) {
  shape.validate();
  const int d = shape.latent_dim();
  if (mu0.size() != d || sigma0.rows() != d || sigma0.cols() != d) {
    throw ValidationError("compound base dimensions do not match the shape");
  }
  if (int(group_sigmas.size()) != shape.num_groups()) {
    throw ValidationError("one covariance block per group required");
  }
  MlndParams params;
  params.shape = shape;
  params.mu = mu0;
  params.sigma = sigma0;
  for (int g = 0; g < shape.num_groups(); ++g) {
    const int len = shape.sizes[std::size_t(g)] - 1;
    const Eigen::MatrixXd& block = group_sigmas[std::size_t(g)];
    if (block.rows() != len || block.cols() != len) {
      throw ValidationError("group covariance block has wrong size");
    }
    const int off = shape.latent_offset(g);
    params.sigma.block(off, off, len, len) += block;
  }
  params.validate();
  return params;
}

MlndParams linear_transform(const MlndParams& params,
                            const std::vector<Eigen::MatrixXd>& blocks) {
  if (int(blocks.size()) != params.shape.num_groups()) {
    throw ValidationError("one transform block per group required");
  }
  GroupShape out_shape;
  int q_total = 0;
  for (int g = 0; g < params.shape.num_groups(); ++g) {
    const Eigen::MatrixXd& b = blocks[std::size_t(g)];
    if (b.cols() != params.shape.sizes[std::size_t(g)] - 1) {
      throw ValidationError("transform block columns must equal H_g - 1");
    }
    if (b.rows() < 1) throw ValidationError("transform block must have at least one row");
    out_shape.sizes.push_back(int(b.rows()) + 1);
    q_total += int(b.rows());
  }
  Eigen::MatrixXd full = Eigen::MatrixXd::Zero(q_total, params.shape.latent_dim());
  int row = 0;
  for (int g = 0; g < params.shape.num_groups(); ++g) {
    const Eigen::MatrixXd& b = blocks[std::size_t(g)];
    full.block(row, params.shape.latent_offset(g), b.rows(), b.cols()) = b;
    row += int(b.rows());
  }
  MlndParams out;
  out.shape = out_shape;
  out.mu = full * params.mu;
  out.sigma = full * params.sigma * full.transpose();
  // Symmetrize away round-off before downstream Cholesky factorizations.
  out.sigma = 0.5 * (out.sigma + out.sigma.transpose()).eval();
  return out;
}

SimplexPoint transform_point(const SimplexPoint& x,
                             const std::vector<Eigen::MatrixXd>& blocks) {
  const Eigen::VectorXd y = to_logits(x);
  if (int(blocks.size()) != x.shape.num_groups()) {
    throw ValidationError("one transform block per group required");
  }
  GroupShape out_shape;
  std::vector<double> out_latent;
  for (int g = 0; g < x.shape.num_groups(); ++g) {
    const Eigen::MatrixXd& b = blocks[std::size_t(g)];
    const int len = x.shape.sizes[std::size_t(g)] - 1;
    if (b.cols() != len) throw ValidationError("transform block columns must equal H_g - 1");
    const Eigen::VectorXd yg = y.segment(x.shape.latent_offset(g), len);
    const Eigen::VectorXd out = b * yg;
    for (int q = 0; q < out.size(); ++q) out_latent.push_back(out[q]);
    out_shape.sizes.push_back(int(b.rows()) + 1);
  }
  Eigen::VectorXd stacked =
      Eigen::Map<Eigen::VectorXd>(out_latent.data(), Eigen::Index(out_latent.size()));
  return to_simplex(stacked, out_shape);
}

namespace {

void check_moment_indices(const MlndParams& params, int g, int h, int g2, int h2) {
  const int num_groups = params.shape.num_groups();
  if (g < 0 || g >= num_groups || g2 < 0 || g2 >= num_groups) {
    throw ValidationError("group index out of range");
  }
  if (h < 0 || h >= params.shape.sizes[std::size_t(g)] - 1 || h2 < 0 ||
      h2 >= params.shape.sizes[std::size_t(g2)] - 1) {
    throw ValidationError("category index out of range (reference category excluded)");
  }
}

}  // namespace

double log_odds_mean(const MlndParams& params, int g, int h, int g2, int h2) {
  check_moment_indices(params, g, h, g2, h2);
  const int i = params.shape.latent_offset(g) + h;
  const int j = params.shape.latent_offset(g2) + h2;
  return params.mu[i] - params.mu[j];
}

double odds_ratio_mean(const MlndParams& params, int g, int h, int g2, int h2) {
  check_moment_indices(params, g, h, g2, h2);
  const int i = params.shape.latent_offset(g) + h;
  const int j = params.shape.latent_offset(g2) + h2;
  const double var_term = params.sigma(i, i) + params.sigma(j, j) - 2.0 * params.sigma(i, j);
  return std::exp(params.mu[i] - params.mu[j] + 0.5 * var_term);
}

}  // namespace mmm
