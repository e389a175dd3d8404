#ifndef MMM_KERNELS_HPP
#define MMM_KERNELS_HPP

#include <vector>

#include <Eigen/Core>

#include "mmm/errors.hpp"

namespace mmm {

/// Per-variable profile kernels: theta[j] is an H x d_j matrix whose rows are
/// the category distributions of each pure type.
struct KernelSet {
  std::vector<Eigen::MatrixXd> theta;

  int num_variables() const { return int(theta.size()); }
  int num_profiles() const { return theta.empty() ? 0 : int(theta.front().rows()); }

  void validate() const {
    for (const auto& t : theta) {
      if (t.rows() != num_profiles()) {
        throw ValidationError("all kernel matrices must share the profile count");
      }
      for (int h = 0; h < t.rows(); ++h) {
        if ((t.row(h).array() < 0.0).any() || std::fabs(t.row(h).sum() - 1.0) > 1e-12 * t.cols()) {
          throw ValidationError("kernel rows must be probability vectors");
        }
      }
    }
  }
};

}  // namespace mmm

#endif  // MMM_KERNELS_HPP
