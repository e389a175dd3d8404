#ifndef MMM_DATASET_HPP
#define MMM_DATASET_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace mmm {

/// Grouped categorical survey data. Codes are stored 0-based internally;
/// files use 1-based codes. A variable's missing category, when enabled,
/// is its last level.
struct CategoricalDataset {
  Eigen::MatrixXi codes;             // n x p, entries in [0, levels[j])
  std::vector<int> levels;           // d_j >= 2
  std::vector<std::string> names;    // column names, size p
  std::vector<int> var_epoch;        // per-variable epoch label, -1 when absent

  int n() const { return int(codes.rows()); }
  int p() const { return int(codes.cols()); }

  /// Throws ValidationError when any invariant fails.
  void validate() const;
};

struct GroupPartition {
  std::vector<int> assignment;  // g_j in [0, num_groups)
  int num_groups = 0;
  std::vector<int> group_sizes;

  static GroupPartition from_assignment(const std::vector<int>& assignment_zero_based,
                                        int num_groups);
  std::vector<int> variables_in_group(int g) const;
};

/// Succeeds iff the partition matches the dataset width and every group
/// holds at least one variable.
void validate_partition(const CategoricalDataset& dataset, const GroupPartition& partition);

struct Hyperparams {
  std::vector<Eigen::VectorXd> alpha;  // per variable, length d_j
  Eigen::VectorXd mu0;                 // length G
  Eigen::MatrixXd sigma0;              // G x G SPD
  double nu0 = 0.0;                    // > G - 1
  Eigen::MatrixXd psi0;                // G x G SPD

  void validate(const CategoricalDataset& dataset, const GroupPartition& partition) const;
};

/// Weak defaults: alpha_k = 1/d_j, mu0 = 0, Sigma0 = Psi0 = I, nu0 = G.
Hyperparams default_hyperparams(const CategoricalDataset& dataset,
                                const GroupPartition& partition);

/// Per-subject epoch and planar coordinates for the spatio-temporal variant.
struct SpaceTimeCovariates {
  std::vector<int> time_id;      // epoch index in [0, num_epochs)
  std::vector<int> epoch_labels; // label per epoch index (e.g. survey year)
  Eigen::MatrixXd coords;        // n x 2, planar projection

  int num_epochs() const { return int(epoch_labels.size()); }
  std::vector<int> subjects_in_epoch(int t) const;
  void validate(int n) const;
};

struct VariableSpec {
  std::string name;
  int levels = 0;
  int group = 0;              // 1-based in files
  bool missing_category = false;
  int epoch = -1;             // optional per-variable epoch label
};

/// Sidecar JSON schema: per-variable level counts, group ids, missing-category
/// flags, and optional covariate column names.
struct DatasetSchema {
  std::vector<VariableSpec> variables;
  std::string time_column;  // empty when absent
  std::string x_column;
  std::string y_column;

  bool has_covariates() const { return !time_column.empty() || !x_column.empty(); }
};

DatasetSchema load_schema(const std::filesystem::path& path);
void save_schema(const DatasetSchema& schema, const std::filesystem::path& path);

struct LoadedData {
  CategoricalDataset dataset;
  GroupPartition partition;
  std::optional<SpaceTimeCovariates> covariates;
};

/// Reads a CSV of integer codes (header row, one row per subject) against the
/// schema. Blank cells map to the missing category when the variable enables
/// it. Throws ParseError with row/column location on malformed content and
/// ValidationError on out-of-range codes.
LoadedData load_dataset(const std::filesystem::path& csv_path, const DatasetSchema& schema);

/// Writes the canonical CSV form (1-based codes, optional covariate columns).
void save_dataset(const CategoricalDataset& dataset,
                  const std::optional<SpaceTimeCovariates>& covariates,
                  const DatasetSchema& schema, const std::filesystem::path& csv_path);

/// FNV-1a 64-bit digest, as fixed-width hex.
std::string fnv1a_hex(const void* data, std::size_t size);
std::string file_digest(const std::filesystem::path& path);

/// Digest of the dataset's canonical serialization, recorded in chain
/// archives to detect dataset/archive mismatches.
std::string dataset_digest(const CategoricalDataset& dataset);

}  // namespace mmm

#endif  // MMM_DATASET_HPP
