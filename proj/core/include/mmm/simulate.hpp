#ifndef MMM_SIMULATE_HPP
#define MMM_SIMULATE_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mmm/dataset.hpp"
#include "mmm/kernels.hpp"
#include "mmm/rng.hpp"

namespace mmm {

/// Scenario identifiers for the synthetic studies. Scenarios 1-4 share two
/// groups of five 4-level variables with H = 2 truth; kMisspecified uses four
/// pure types in group 1 against an H = 2 fit.
enum class ScenarioId { kScenario1 = 1, kScenario2, kScenario3, kScenario4, kMisspecified };

ScenarioId scenario_from_string(const std::string& name);
std::string scenario_to_string(ScenarioId id);

struct ScenarioSpec {
  ScenarioId id = ScenarioId::kScenario1;
  int subjects = 1000;
  std::uint64_t seed = 0;
  /// Per-group, per-profile Dirichlet parameters for the kernel draws.
  /// Defaults reproduce the published scenario values; entries may include
  /// zeros, which receive exactly zero probability mass.
  std::vector<std::vector<Eigen::VectorXd>> kernel_dirichlet;
  int vars_per_group = 5;
  int levels = 4;

  static ScenarioSpec defaults(ScenarioId id, int subjects, std::uint64_t seed);
  void validate() const;
};

struct SimulatedData {
  CategoricalDataset dataset;
  GroupPartition partition;
  /// True membership scores. For H = 2 groups this is the probability of
  /// profile 2; the misspecified scenario additionally records the full
  /// 4-vector for group 1 in `scores_full`.
  Eigen::MatrixXd scores;                    // n x G
  std::vector<Eigen::MatrixXd> scores_full;  // per group, n x H0_g
  std::vector<Eigen::MatrixXd> true_kernels; // per variable, H0_{g_j} x d_j
};

/// One draw from N(mu, sigma) truncated to the unit square, by rejection.
/// Raises a ValidationError when the acceptance rate is implausibly low.
Eigen::Vector2d sample_truncated_bvn(const Eigen::Vector2d& mu, const Eigen::Matrix2d& sigma,
                                     RngStream& rng);

/// A Dirichlet draw where zero-parameter coordinates carry exactly zero mass.
Eigen::VectorXd dirichlet_with_zeros(const Eigen::VectorXd& alpha, RngStream& rng);

/// Generates a dataset from the scenario's score law and kernel draws via the
/// hierarchical model, together with the ground truth sidecar values.
SimulatedData generate(const ScenarioSpec& spec);

/// Writes dataset.csv, schema.json and truth.json under `directory`.
void write_simulation(const SimulatedData& data, const ScenarioSpec& spec,
                      const std::filesystem::path& directory);

/// Reads the truth sidecar back (scores and kernels) for scoring fits.
struct TruthSidecar {
  Eigen::MatrixXd scores;
  std::vector<Eigen::MatrixXd> true_kernels;
  std::string scenario;
  std::uint64_t seed = 0;
};

TruthSidecar load_truth(const std::filesystem::path& path);

}  // namespace mmm

#endif  // MMM_SIMULATE_HPP
