#include "mmm/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mmm/errors.hpp"

namespace mmm {

namespace {

// 2 x 2 first/second-moment matrix of the profile weights in one draw.
Eigen::Matrix2d score_moment_matrix(const Eigen::MatrixXd& lambda, int g_j, int g_k) {
  const int n = int(lambda.rows());
  Eigen::Matrix2d abar = Eigen::Matrix2d::Zero();
  for (int i = 0; i < n; ++i) {
    const double lj = lambda(i, g_j);
    const double lk = lambda(i, g_k);
    abar(0, 0) += (1.0 - lj) * (1.0 - lk);
    abar(0, 1) += (1.0 - lj) * lk;
    abar(1, 0) += lj * (1.0 - lk);
    abar(1, 1) += lj * lk;
  }
  return abar / double(n);
}

Eigen::VectorXd empirical_frequencies(const CategoricalDataset& dataset, int j) {
  Eigen::VectorXd freq = Eigen::VectorXd::Zero(dataset.levels[std::size_t(j)]);
  for (int i = 0; i < dataset.n(); ++i) freq[dataset.codes(i, j)] += 1.0;
  return freq / double(dataset.n());
}

void require_draws(const ChainSamples& samples) {
  if (samples.lambda.empty() || samples.kernels.empty()) {
    throw ValidationError("chain samples must retain lambda and kernels");
  }
}

}  // namespace

void AdmissibilityRule::validate() const {
  if (!(c1 > 1.0)) throw ValidationError("c1 must exceed 1");
  if (!(c2 > 0.0)) throw ValidationError("c2 must be positive");
  if (!(posterior_threshold > 0.0 && posterior_threshold < 1.0)) {
    throw ValidationError("posterior threshold must lie in (0,1)");
  }
}

double sample_quantile(std::vector<double> values, double q) {
  if (values.empty()) throw ValidationError("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * (double(values.size()) - 1.0);
  const std::size_t lo = std::size_t(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - double(lo);
  return values[lo] * (1.0 - frac) + values[hi] * frac;
}

std::vector<Eigen::VectorXd> marginal_pmf(const ChainSamples& samples,
                                          const GroupPartition& partition, int j) {
  require_draws(samples);
  if (j < 0 || j >= int(partition.assignment.size())) {
    throw ValidationError("variable index out of range");
  }
  const int g = partition.assignment[std::size_t(j)];
  std::vector<Eigen::VectorXd> out;
  out.reserve(samples.lambda.size());
  for (std::size_t d = 0; d < samples.lambda.size(); ++d) {
    const double abar2 = samples.lambda[d].col(g).mean();
    const Eigen::MatrixXd& theta = samples.kernels[d].theta[std::size_t(j)];
    out.push_back((1.0 - abar2) * theta.row(0).transpose() + abar2 * theta.row(1).transpose());
  }
  return out;
}

std::vector<Eigen::MatrixXd> bivariate_pmf(const ChainSamples& samples,
                                           const GroupPartition& partition, int j, int k) {
  require_draws(samples);
  if (j == k) throw ValidationError("bivariate pmf requires two distinct variables");
  const int p = int(partition.assignment.size());
  if (j < 0 || j >= p || k < 0 || k >= p) {
    throw ValidationError("variable index out of range");
  }
  const int g_j = partition.assignment[std::size_t(j)];
  const int g_k = partition.assignment[std::size_t(k)];
  std::vector<Eigen::MatrixXd> out;
  out.reserve(samples.lambda.size());
  for (std::size_t d = 0; d < samples.lambda.size(); ++d) {
    const Eigen::Matrix2d abar = score_moment_matrix(samples.lambda[d], g_j, g_k);
    const Eigen::MatrixXd& theta_j = samples.kernels[d].theta[std::size_t(j)];
    const Eigen::MatrixXd& theta_k = samples.kernels[d].theta[std::size_t(k)];
    out.push_back(theta_j.transpose() * abar * theta_k);
  }
  return out;
}

FitReport l1_fit_report(const ChainSamples& samples, const CategoricalDataset& dataset,
                        const GroupPartition& partition) {
  require_draws(samples);
  if (!samples.meta.dataset_digest.empty() &&
      samples.meta.dataset_digest != dataset_digest(dataset)) {
    throw ValidationError("chain archive was fitted on a different dataset (digest mismatch)");
  }
  const int p = dataset.p();
  FitReport report;
  report.marginal_l1.resize(p);
  std::vector<double> marginal_values;
  for (int j = 0; j < p; ++j) {
    const auto draws = marginal_pmf(samples, partition, j);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(dataset.levels[std::size_t(j)]);
    for (const auto& pmf : draws) mean += pmf;
    mean /= double(draws.size());
    const double l1 = (mean - empirical_frequencies(dataset, j)).cwiseAbs().sum();
    report.marginal_l1[j] = l1;
    marginal_values.push_back(l1);
  }

  std::vector<double> bivariate_values;
  for (int j = 0; j < p; ++j) {
    for (int k = j + 1; k < p; ++k) {
      if (!dataset.var_epoch.empty() &&
          dataset.var_epoch[std::size_t(j)] != dataset.var_epoch[std::size_t(k)]) {
        continue;
      }
      const auto draws = bivariate_pmf(samples, partition, j, k);
      Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(dataset.levels[std::size_t(j)],
                                                   dataset.levels[std::size_t(k)]);
      for (const auto& pmf : draws) mean += pmf;
      mean /= double(draws.size());
      Eigen::MatrixXd freq = Eigen::MatrixXd::Zero(dataset.levels[std::size_t(j)],
                                                   dataset.levels[std::size_t(k)]);
      for (int i = 0; i < dataset.n(); ++i) {
        freq(dataset.codes(i, j), dataset.codes(i, k)) += 1.0;
      }
      freq /= double(dataset.n());
      const double l1 = (mean - freq).cwiseAbs().sum();
      report.bivariate_l1.push_back({j, k, l1});
      bivariate_values.push_back(l1);
    }
  }

  report.marginal_mean =
      Eigen::Map<Eigen::VectorXd>(marginal_values.data(), Eigen::Index(marginal_values.size()))
          .mean();
  report.marginal_q10 = sample_quantile(marginal_values, 0.1);
  report.marginal_q90 = sample_quantile(marginal_values, 0.9);
  if (!bivariate_values.empty()) {
    report.bivariate_mean = Eigen::Map<Eigen::VectorXd>(bivariate_values.data(),
                                                        Eigen::Index(bivariate_values.size()))
                                .mean();
    report.bivariate_q10 = sample_quantile(bivariate_values, 0.1);
    report.bivariate_q90 = sample_quantile(bivariate_values, 0.9);
  }
  return report;
}

std::vector<AdmissibleCondition> admissible_conditions(const ChainSamples& samples,
                                                       const CategoricalDataset& dataset,
                                                       const AdmissibilityRule& rule) {
  require_draws(samples);
  rule.validate();
  if (!samples.meta.dataset_digest.empty() &&
      samples.meta.dataset_digest != dataset_digest(dataset)) {
    throw ValidationError("chain archive was fitted on a different dataset (digest mismatch)");
  }
  std::vector<AdmissibleCondition> out;
  const int draws = int(samples.kernels.size());
  for (int j = 0; j < dataset.p(); ++j) {
    const Eigen::VectorXd freq = empirical_frequencies(dataset, j);
    for (int h = 0; h < 2; ++h) {
      for (int level = 0; level < dataset.levels[std::size_t(j)]; ++level) {
        const double f = freq[level];
        int hits = 0;
        std::vector<double> theta_draws;
        theta_draws.reserve(std::size_t(draws));
        for (int d = 0; d < draws; ++d) {
          const double theta = samples.kernels[std::size_t(d)].theta[std::size_t(j)](h, level);
          theta_draws.push_back(theta);
          bool ok;
          if (f > 0.0) {
            ok = theta > rule.c1 * f || (theta - f) / f > rule.c2;
          } else {
            // Empty level: rule (b) is undefined; rule (a) degenerates to
            // theta > 0.
            ok = theta > 0.0;
          }
          if (ok) ++hits;
        }
        AdmissibleCondition cond;
        cond.variable = j;
        cond.level = level;
        cond.profile = h;
        cond.posterior_prob = double(hits) / double(draws);
        cond.admissible = cond.posterior_prob > rule.posterior_threshold;
        if (f == 0.0 && cond.admissible) {
          // Guard against vacuous flags on never-observed levels.
          cond.admissible = sample_quantile(theta_draws, 0.1) > 0.0;
        }
        out.push_back(cond);
      }
    }
  }
  return out;
}

namespace {

struct CellAccumulator {
  std::vector<double> values;
};

int tertile_of(double value, double t1, double t2) {
  if (value <= t1) return 0;
  if (value <= t2) return 1;
  return 2;
}

RateCell summarize_cell(const CellAccumulator& acc, int draws, const TertileOptions& options) {
  RateCell cell;
  if (int(acc.values.size()) * 2 < draws) return cell;  // absent
  cell.present = true;
  cell.median = sample_quantile(acc.values, 0.5);
  cell.q_lo = sample_quantile(acc.values, options.q_lo);
  cell.q_hi = sample_quantile(acc.values, options.q_hi);
  return cell;
}

}  // namespace

TertileRateTable tertile_rate_table(const ChainSamples& samples, const Eigen::VectorXd& outcome,
                                    const TertileOptions& options) {
  require_draws(samples);
  const int n = int(samples.lambda.front().rows());
  const int G = int(samples.lambda.front().cols());
  if (G != 2) throw ValidationError("tertile table requires two groups");
  if (outcome.size() != n) throw ValidationError("outcome length must equal the subject count");

  const int draws = int(samples.lambda.size());
  CellAccumulator cells[3][3];
  CellAccumulator rows[3];
  CellAccumulator cols[3];

  for (int d = 0; d < draws; ++d) {
    const Eigen::MatrixXd& lambda = samples.lambda[std::size_t(d)];
    double cut1[2], cut2[2];
    for (int g = 0; g < 2; ++g) {
      std::vector<double> values(lambda.col(g).data(), lambda.col(g).data() + n);
      std::vector<double> distinct = values;
      std::sort(distinct.begin(), distinct.end());
      distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
      if (distinct.size() < 3) {
        throw ValidationError("fewer than 3 distinct scores in group " + std::to_string(g + 1));
      }
      cut1[g] = sample_quantile(values, 1.0 / 3.0);
      cut2[g] = sample_quantile(values, 2.0 / 3.0);
    }
    double sums[3][3] = {};
    int counts[3][3] = {};
    double row_sums[3] = {}, col_sums[3] = {};
    int row_counts[3] = {}, col_counts[3] = {};
    for (int i = 0; i < n; ++i) {
      const int r = tertile_of(lambda(i, 0), cut1[0], cut2[0]);
      const int c = tertile_of(lambda(i, 1), cut1[1], cut2[1]);
      sums[r][c] += outcome[i];
      ++counts[r][c];
      row_sums[r] += outcome[i];
      ++row_counts[r];
      col_sums[c] += outcome[i];
      ++col_counts[c];
    }
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) {
        if (counts[r][c] >= options.min_count) {
          cells[r][c].values.push_back(sums[r][c] / counts[r][c]);
        }
      }
      if (row_counts[r] >= options.min_count) {
        rows[r].values.push_back(row_sums[r] / row_counts[r]);
      }
      if (col_counts[r] >= options.min_count) {
        cols[r].values.push_back(col_sums[r] / col_counts[r]);
      }
    }
  }

  TertileRateTable table;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) table.cells[r][c] = summarize_cell(cells[r][c], draws, options);
    table.row_marginal[r] = summarize_cell(rows[r], draws, options);
    table.col_marginal[r] = summarize_cell(cols[r], draws, options);
  }
  return table;
}

int count_double_gradient_violations(const TertileRateTable& table) {
  int violations = 0;
  // Rows non-decreasing left to right.
  for (int r = 0; r < 3; ++r) {
    double last = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < 3; ++c) {
      if (!table.cells[r][c].present) continue;
      if (table.cells[r][c].median < last - 1e-12) ++violations;
      last = std::max(last, table.cells[r][c].median);
    }
  }
  // Columns non-decreasing top to bottom.
  for (int c = 0; c < 3; ++c) {
    double last = -std::numeric_limits<double>::infinity();
    for (int r = 0; r < 3; ++r) {
      if (!table.cells[r][c].present) continue;
      if (table.cells[r][c].median < last - 1e-12) ++violations;
      last = std::max(last, table.cells[r][c].median);
    }
  }
  return violations;
}

std::vector<OddsRatioSummary> score_odds_ratio_summary(const ChainSamples& samples,
                                                       const SpaceTimeCovariates& cov) {
  if (!samples.has_spatial() || samples.sigma_t.empty()) {
    throw ValidationError("odds-ratio summary requires retained spatio-temporal fields");
  }
  const int T = cov.num_epochs();
  const int draws = int(samples.beta_t.size());
  std::vector<OddsRatioSummary> out;
  for (int t = 0; t < T; ++t) {
    std::vector<double> values;
    values.reserve(std::size_t(draws));
    for (int d = 0; d < draws; ++d) {
      const Eigen::MatrixXd& s = samples.sigma_t[std::size_t(d)][std::size_t(t)];
      const double log_or = samples.beta_t[std::size_t(d)](t, 0) -
                            samples.beta_t[std::size_t(d)](t, 1) +
                            0.5 * (s(0, 0) + s(1, 1) - 2.0 * s(0, 1));
      values.push_back(std::exp(log_or));
    }
    OddsRatioSummary summary;
    summary.epoch_label = cov.epoch_labels[std::size_t(t)];
    summary.mean =
        Eigen::Map<Eigen::VectorXd>(values.data(), Eigen::Index(values.size())).mean();
    summary.median = sample_quantile(values, 0.5);
    summary.q10 = sample_quantile(values, 0.1);
    summary.q25 = sample_quantile(values, 0.25);
    summary.q75 = sample_quantile(values, 0.75);
    summary.q90 = sample_quantile(values, 0.9);
    out.push_back(summary);
  }
  return out;
}

std::vector<CorrelationSummary> score_correlation_summary(
    const ChainSamples& samples, const std::optional<SpaceTimeCovariates>& cov, double q_lo,
    double q_hi) {
  auto summarize = [&](const std::vector<double>& values, int label) {
    CorrelationSummary summary;
    summary.epoch_label = label;
    const auto map =
        Eigen::Map<const Eigen::VectorXd>(values.data(), Eigen::Index(values.size()));
    summary.mean = map.mean();
    summary.sd = std::sqrt((map.array() - summary.mean).square().sum() /
                           std::max<double>(1.0, double(values.size()) - 1.0));
    summary.q_lo = sample_quantile(values, q_lo);
    summary.q_hi = sample_quantile(values, q_hi);
    summary.interval_includes_zero = summary.q_lo <= 0.0 && summary.q_hi >= 0.0;
    return summary;
  };

  std::vector<CorrelationSummary> out;
  if (samples.has_spatial() && !samples.sigma_t.empty()) {
    if (!cov) throw ValidationError("covariates required for per-epoch correlations");
    for (int t = 0; t < cov->num_epochs(); ++t) {
      std::vector<double> values;
      for (const auto& draw : samples.sigma_t) {
        const Eigen::MatrixXd& s = draw[std::size_t(t)];
        values.push_back(s(0, 1) / std::sqrt(s(0, 0) * s(1, 1)));
      }
      out.push_back(summarize(values, cov->epoch_labels[std::size_t(t)]));
    }
    return out;
  }
  if (samples.sigma.empty()) {
    throw ValidationError("correlation summary requires retained sigma draws");
  }
  std::vector<double> values;
  for (const auto& s : samples.sigma) {
    values.push_back(s(0, 1) / std::sqrt(s(0, 0) * s(1, 1)));
  }
  out.push_back(summarize(values, 0));
  return out;
}

std::vector<LabelSwitchReport> label_switch_monitor(const ChainSamples& samples,
                                                    const GroupPartition& partition,
                                                    const LabelSwitchOptions& options) {
  require_draws(samples);
  const int draws = int(samples.kernels.size());
  const int pilot = std::min(options.pilot_draws, draws);
  std::vector<LabelSwitchReport> out;
  for (int g = 0; g < partition.num_groups; ++g) {
    // Anchor: the group's variable (and level) with the largest posterior-mean
    // profile separation within the pilot window.
    int anchor_var = -1, anchor_level = 0;
    double best_gap = -1.0;
    for (int j : partition.variables_in_group(g)) {
      const int levels = int(samples.kernels.front().theta[std::size_t(j)].cols());
      for (int level = 0; level < levels; ++level) {
        double gap = 0.0;
        for (int d = 0; d < pilot; ++d) {
          const Eigen::MatrixXd& theta = samples.kernels[std::size_t(d)].theta[std::size_t(j)];
          gap += theta(0, level) - theta(1, level);
        }
        gap = std::fabs(gap / pilot);
        if (gap > best_gap) {
          best_gap = gap;
          anchor_var = j;
          anchor_level = level;
        }
      }
    }
    LabelSwitchReport report;
    report.group = g;
    report.anchor_variable = anchor_var;
    report.anchor_level = anchor_level;
    int previous_sign = 0;
    for (int d = 0; d < draws; ++d) {
      const Eigen::MatrixXd& theta =
          samples.kernels[std::size_t(d)].theta[std::size_t(anchor_var)];
      const double diff = theta(0, anchor_level) - theta(1, anchor_level);
      const int sign = diff >= 0.0 ? 1 : -1;
      if (previous_sign != 0 && sign != previous_sign) ++report.switch_count;
      previous_sign = sign;
    }
    report.flagged = report.switch_count > options.max_switches;
    out.push_back(report);
  }
  return out;
}

}  // namespace mmm
