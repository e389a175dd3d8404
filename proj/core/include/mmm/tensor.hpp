#ifndef MMM_TENSOR_HPP
#define MMM_TENSOR_HPP

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "mmm/kernels.hpp"
#include "mmm/rng.hpp"

namespace mmm {

/// Dense tensors only, guarded by a desk-scale cell cap.
inline constexpr std::uint64_t kMaxTensorCells = 1u << 20;
/// The constrained-fit oracle is restricted to tiny instances.
inline constexpr std::uint64_t kMaxFitCells = 4096;

/// Mixing-weight tensor a_{h1..hp}: p modes of size H, non-negative entries
/// summing to 1, stored row-major (h1 slowest).
struct CoreTensor {
  int num_profiles = 0;  // H
  int order = 0;         // p
  Eigen::VectorXd weights;

  std::uint64_t cells() const;
  void validate() const;
};

/// Dense joint pmf over d_1 x ... x d_p categories, row-major.
struct ProbabilityTensor {
  std::vector<int> dims;
  Eigen::VectorXd values;

  std::uint64_t cells() const;
  void validate() const;
};

/// Number of distinct entries of a symmetric H^p core tensor,
/// H(H+1)...(H+p-1)/p! (multisets of size p over H symbols).
std::uint64_t count_distinct_symmetric(int H, int p);

/// Product of per-group symmetric counts for a group-symmetric tensor.
std::uint64_t count_distinct_group_symmetric(int H, std::span<const int> group_sizes);

/// Equivalence classes of H^p index vectors under group-preserving
/// permutations. Pass an empty var_groups (or all-equal labels) with
/// `symmetric = true` semantics by grouping every variable together.
struct SymmetryClasses {
  int num_profiles = 0;
  int order = 0;
  std::vector<int> class_of_cell;        // size H^p
  std::vector<std::uint64_t> multiplicity;  // per class
  int count() const { return int(multiplicity.size()); }
};

SymmetryClasses enumerate_classes(int H, const std::vector<int>& var_groups);

/// Monte Carlo core tensor from draws of the stacked membership scores.
/// `samples` has one row per draw and G*H columns (group-major blocks of H).
CoreTensor core_tensor_from_scores(const Eigen::MatrixXd& samples, int H,
                                   const std::vector<int>& var_groups);

/// Tucker contraction sum_h a_h prod_j theta^{(j)}_{h_j x_j}.
ProbabilityTensor joint_pmf(const CoreTensor& core, const KernelSet& kernels);

double frobenius_distance(const ProbabilityTensor& a, const ProbabilityTensor& b);

enum class CoreConstraint { kSymmetric, kGroupSymmetric };

struct FitSolution {
  CoreTensor core;
  KernelSet kernels;
};

struct FitOptions {
  int starts = 32;
  int sweeps_per_start = 80;      // alternation budget per start
  std::uint64_t seed = 1;
  std::vector<FitSolution> warm_starts;  // consume start slots before random inits
};

struct FitResult {
  CoreTensor core;
  KernelSet kernels;
  double distance = 0.0;
  bool budget_exhausted = false;  // best start stopped on budget, not convergence
};

/// Numerically minimizes the Frobenius distance to `target` over rank-H
/// Tucker representations whose core obeys the requested symmetry class.
/// Multi-start alternating minimization (exact simplex-QP blocks for the
/// kernels, projected gradient for the core classes); deterministic given
/// seed and budget. var_groups is ignored for the symmetric constraint.
FitResult best_constrained_fit(const ProbabilityTensor& target, int H,
                               CoreConstraint constraint,
                               const std::vector<int>& var_groups,
                               const FitOptions& options = {});

}  // namespace mmm

#endif  // MMM_TENSOR_HPP
