#ifndef MMM_DIAGNOSTICS_HPP
#define MMM_DIAGNOSTICS_HPP

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mmm/dataset.hpp"
#include "mmm/gibbs.hpp"

namespace mmm {

/// Thresholds for the admissible-condition rules; configuration, not
/// constants.
struct AdmissibilityRule {
  double c1 = 1.7;
  double c2 = 0.35;
  double posterior_threshold = 0.5;

  void validate() const;
};

/// Per-draw model-implied marginal pmf of variable j, using the draw's
/// subject-mean membership scores.
std::vector<Eigen::VectorXd> marginal_pmf(const ChainSamples& samples,
                                          const GroupPartition& partition, int j);

/// Per-draw model-implied bivariate pmf of variables j and k (j != k), using
/// the draw's second-moment matrix of the scores.
std::vector<Eigen::MatrixXd> bivariate_pmf(const ChainSamples& samples,
                                           const GroupPartition& partition, int j, int k);

struct FitReport {
  Eigen::VectorXd marginal_l1;  // per variable
  struct PairL1 {
    int j = 0;
    int k = 0;
    double l1 = 0.0;
  };
  std::vector<PairL1> bivariate_l1;
  double marginal_mean = 0.0, marginal_q10 = 0.0, marginal_q90 = 0.0;
  double bivariate_mean = 0.0, bivariate_q10 = 0.0, bivariate_q90 = 0.0;
};

/// L1 distances between posterior-mean pmfs and the empirical frequencies;
/// bivariate pairs are restricted to same-epoch pairs when the dataset
/// carries per-variable epochs.
FitReport l1_fit_report(const ChainSamples& samples, const CategoricalDataset& dataset,
                        const GroupPartition& partition);

struct AdmissibleCondition {
  int variable = 0;
  int level = 0;    // 0-based internally
  int profile = 0;  // 0-based
  double posterior_prob = 0.0;
  bool admissible = false;
};

/// Posterior probability that a condition is admissible per the two rules,
/// evaluated against the dataset's empirical frequencies.
std::vector<AdmissibleCondition> admissible_conditions(const ChainSamples& samples,
                                                       const CategoricalDataset& dataset,
                                                       const AdmissibilityRule& rule);

/// Posterior summaries of per-cell outcome averages over tertile risk groups.
struct RateCell {
  bool present = false;
  double median = 0.0;
  double q_lo = 0.0;
  double q_hi = 0.0;
};

struct TertileRateTable {
  RateCell cells[3][3];     // rows: group-1 tertile, cols: group-2 tertile
  RateCell row_marginal[3]; // by group-1 tertile alone
  RateCell col_marginal[3]; // by group-2 tertile alone
};

struct TertileOptions {
  int min_count = 3;      // cells with fewer subjects are reported absent
  double q_lo = 0.1;
  double q_hi = 0.9;
};

TertileRateTable tertile_rate_table(const ChainSamples& samples,
                                    const Eigen::VectorXd& outcome,
                                    const TertileOptions& options = {});

/// Number of median cells violating the non-decreasing double gradient
/// (absent cells skipped).
int count_double_gradient_violations(const TertileRateTable& table);

struct OddsRatioSummary {
  int epoch_label = 0;
  double mean = 0.0;
  double median = 0.0;
  double q10 = 0.0, q25 = 0.0, q75 = 0.0, q90 = 0.0;
};

/// Per-epoch posterior of exp(beta_t1 - beta_t2 + (S11 + S22 - 2 S12)/2);
/// requires retained spatio-temporal fields.
std::vector<OddsRatioSummary> score_odds_ratio_summary(const ChainSamples& samples,
                                                       const SpaceTimeCovariates& cov);

struct CorrelationSummary {
  int epoch_label = 0;  // 0 for the plain model
  double mean = 0.0;
  double sd = 0.0;
  double q_lo = 0.0;
  double q_hi = 0.0;
  bool interval_includes_zero = false;
};

/// Posterior of the cross-group correlation C = S_12 / sqrt(S_11 S_22),
/// per epoch for spatio-temporal chains and overall for plain chains.
/// An interval covering 0 signals that separate MM models are viable.
std::vector<CorrelationSummary> score_correlation_summary(
    const ChainSamples& samples, const std::optional<SpaceTimeCovariates>& cov,
    double q_lo = 0.1, double q_hi = 0.9);

struct LabelSwitchReport {
  int group = 0;        // 0-based
  int anchor_variable = 0;
  int anchor_level = 0;
  int switch_count = 0;
  bool flagged = false;
};

struct LabelSwitchOptions {
  int pilot_draws = 100;  // window used to pick the anchor variable
  int max_switches = 3;
};

/// Tracks the sign of the anchor variable's profile separation across draws
/// and counts sign changes. Detection only; no relabeling is applied.
std::vector<LabelSwitchReport> label_switch_monitor(const ChainSamples& samples,
                                                    const GroupPartition& partition,
                                                    const LabelSwitchOptions& options = {});

/// Order-statistic quantile with linear interpolation (values are copied).
double sample_quantile(std::vector<double> values, double q);

}  // namespace mmm

#endif  // MMM_DIAGNOSTICS_HPP
