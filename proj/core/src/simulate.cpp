#include "mmm/simulate.hpp"

#include <cmath>
#include <fstream>

#include <Eigen/Cholesky>
#include <json.hpp>

#include "mmm/errors.hpp"
#include "mmm/gibbs.hpp"

namespace mmm {

namespace {

constexpr int kMaxTruncationTries = 2'000'000;

enum SimStream : std::uint64_t {
  kStreamKernels = 1,
  kStreamScores = 2,
  kStreamData = 3,
};

Eigen::VectorXd scenario_phi(std::initializer_list<double> values) {
  Eigen::VectorXd v(Eigen::Index(values.size()));
  Eigen::Index i = 0;
  for (double x : values) v[i++] = x;
  return v;
}

}  // namespace

ScenarioId scenario_from_string(const std::string& name) {
  if (name == "1") return ScenarioId::kScenario1;
  if (name == "2") return ScenarioId::kScenario2;
  if (name == "3") return ScenarioId::kScenario3;
  if (name == "4") return ScenarioId::kScenario4;
  if (name == "misspec") return ScenarioId::kMisspecified;
  throw ValidationError("unknown scenario '" + name + "' (expected 1, 2, 3, 4 or misspec)");
}

std::string scenario_to_string(ScenarioId id) {
  switch (id) {
    case ScenarioId::kScenario1: return "1";
    case ScenarioId::kScenario2: return "2";
    case ScenarioId::kScenario3: return "3";
    case ScenarioId::kScenario4: return "4";
    case ScenarioId::kMisspecified: return "misspec";
  }
  throw ValidationError("invalid scenario id");
}

ScenarioSpec ScenarioSpec::defaults(ScenarioId id, int subjects, std::uint64_t seed) {
  ScenarioSpec spec;
  spec.id = id;
  spec.subjects = subjects;
  spec.seed = seed;
  if (id == ScenarioId::kMisspecified) {
    // Group 1 kernels are fixed probability vectors (4 pure types); group 2
    // follows the scenario-4 mechanism.
    spec.kernel_dirichlet = {
        {scenario_phi({0.85, 0.05, 0.05, 0.05}), scenario_phi({0.05, 0.85, 0.05, 0.05}),
         scenario_phi({0.05, 0.05, 0.85, 0.05}), scenario_phi({0.05, 0.05, 0.05, 0.85})},
        {scenario_phi({5, 5, 1, 0}), scenario_phi({1, 1, 1, 8})},
    };
  } else {
    spec.kernel_dirichlet = {
        {scenario_phi({10, 3, 2, 1}), scenario_phi({1, 1, 1, 11})},
        {scenario_phi({5, 5, 1, 0}), scenario_phi({1, 1, 1, 8})},
    };
  }
  return spec;
}

void ScenarioSpec::validate() const {
  if (subjects < 1) throw ValidationError("scenario needs at least one subject");
  if (vars_per_group < 1 || levels < 2) {
    throw ValidationError("scenario needs p_g >= 1 variables with d >= 2 levels");
  }
  if (kernel_dirichlet.size() != 2) throw ValidationError("scenarios use two groups");
  for (const auto& group : kernel_dirichlet) {
    for (const auto& phi : group) {
      if (phi.size() != levels) throw ValidationError("kernel parameter length must equal d");
      if ((phi.array() < 0.0).any() || phi.sum() <= 0.0) {
        throw ValidationError("kernel parameters must be non-negative with positive sum");
      }
    }
  }
}

Eigen::Vector2d sample_truncated_bvn(const Eigen::Vector2d& mu, const Eigen::Matrix2d& sigma,
                                     RngStream& rng) {
  Eigen::LLT<Eigen::Matrix2d> llt(sigma);
  if (llt.info() != Eigen::Success) {
    throw NumericError("truncated normal requires a positive definite covariance");
  }
  const Eigen::Matrix2d chol = llt.matrixL();
  for (int tries = 0; tries < kMaxTruncationTries; ++tries) {
    Eigen::Vector2d z;
    z << rng.normal(), rng.normal();
    const Eigen::Vector2d draw = mu + chol * z;
    if (draw[0] > 0.0 && draw[0] < 1.0 && draw[1] > 0.0 && draw[1] < 1.0) {
      return draw;
    }
  }
  throw ValidationError("truncated bivariate normal acceptance rate is below 1e-6");
}

Eigen::VectorXd dirichlet_with_zeros(const Eigen::VectorXd& alpha, RngStream& rng) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(alpha.size());
  double total = 0.0;
  for (Eigen::Index i = 0; i < alpha.size(); ++i) {
    if (alpha[i] > 0.0) {
      out[i] = rng.gamma(alpha[i]);
      total += out[i];
    }
  }
  if (total <= 0.0) throw NumericError("dirichlet draw underflowed to zero mass");
  out /= total;
  return out;
}

SimulatedData generate(const ScenarioSpec& spec) {
  spec.validate();
  const int n = spec.subjects;
  const int p_g = spec.vars_per_group;
  const int p = 2 * p_g;
  const int d = spec.levels;
  const int num_groups = 2;

  SimulatedData data;
  std::vector<int> assignment;
  for (int j = 0; j < p; ++j) assignment.push_back(j < p_g ? 0 : 1);
  data.partition = GroupPartition::from_assignment(assignment, num_groups);

  const bool misspec = spec.id == ScenarioId::kMisspecified;

  // Kernels: one independent Dirichlet draw per variable in scenarios 1-4;
  // fixed probability vectors for group 1 in the misspecified study.
  data.true_kernels.resize(std::size_t(p));
  {
    RngStream rng(spec.seed, kStreamKernels);
    for (int j = 0; j < p; ++j) {
      const int g = assignment[std::size_t(j)];
      const auto& phis = spec.kernel_dirichlet[std::size_t(g)];
      const int profiles = int(phis.size());
      Eigen::MatrixXd theta(profiles, d);
      for (int h = 0; h < profiles; ++h) {
        if (misspec && g == 0) {
          theta.row(h) = phis[std::size_t(h)].transpose();  // already a pmf
        } else {
          theta.row(h) = dirichlet_with_zeros(phis[std::size_t(h)], rng).transpose();
        }
      }
      data.true_kernels[std::size_t(j)] = theta;
    }
  }

  // Membership scores per scenario law.
  data.scores.resize(n, num_groups);
  data.scores_full.assign(std::size_t(num_groups), Eigen::MatrixXd());
  if (misspec) {
    data.scores_full[0].resize(n, 4);
    data.scores_full[1].resize(n, 2);
  }
  {
    RngStream rng(spec.seed, kStreamScores);
    const Eigen::Vector2d trunc_mu(0.5, 0.5);
    Eigen::Matrix2d trunc_sigma;
    trunc_sigma << 0.05, 0.02, 0.02, 0.05;
    const Eigen::Vector2d mlnd_mu(-1.2, 1.0);
    Eigen::Matrix2d mlnd_chol;
    {
      Eigen::Matrix2d mlnd_sigma;
      mlnd_sigma << 3.0, -2.4, -2.4, 3.5;
      mlnd_chol = Eigen::LLT<Eigen::Matrix2d>(mlnd_sigma).matrixL();
    }
    const Eigen::VectorXd dir_alpha = Eigen::VectorXd::Constant(4, 0.25);
    for (int i = 0; i < n; ++i) {
      switch (spec.id) {
        case ScenarioId::kScenario1: {
          const Eigen::Vector2d s = sample_truncated_bvn(trunc_mu, trunc_sigma, rng);
          data.scores(i, 0) = s[0];
          data.scores(i, 1) = s[1];
          break;
        }
        case ScenarioId::kScenario2: {
          Eigen::Vector2d z;
          z << rng.normal(), rng.normal();
          const Eigen::Vector2d y = mlnd_mu + mlnd_chol * z;
          data.scores(i, 0) = sigmoid(y[0]);
          data.scores(i, 1) = sigmoid(y[1]);
          break;
        }
        case ScenarioId::kScenario3: {
          const double shared = rng.uniform();
          data.scores(i, 0) = shared;
          data.scores(i, 1) = shared;
          break;
        }
        case ScenarioId::kScenario4: {
          data.scores(i, 0) = rng.uniform();
          data.scores(i, 1) = rng.uniform();
          break;
        }
        case ScenarioId::kMisspecified: {
          const Eigen::VectorXd lam = rng.dirichlet(dir_alpha);
          data.scores_full[0].row(i) = lam.transpose();
          data.scores(i, 0) = lam[0];  // reported for reference only
          const double u = rng.uniform();
          data.scores(i, 1) = u;
          data.scores_full[1](i, 0) = 1.0 - u;
          data.scores_full[1](i, 1) = u;
          break;
        }
      }
    }
  }

  // Observations via the hierarchy: Z_ij ~ Cat(scores), X_ij ~ Cat(theta_Z).
  data.dataset.codes.resize(n, p);
  {
    RngStream rng(spec.seed, kStreamData);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < p; ++j) {
        const int g = assignment[std::size_t(j)];
        const Eigen::MatrixXd& theta = data.true_kernels[std::size_t(j)];
        int profile;
        if (misspec && g == 0) {
          const Eigen::VectorXd lam = data.scores_full[0].row(i).transpose();
          profile = rng.categorical(std::span<const double>(lam.data(), std::size_t(lam.size())));
        } else {
          profile = rng.uniform() < data.scores(i, g) ? 1 : 0;
        }
        const Eigen::VectorXd probs = theta.row(profile).transpose();
        data.dataset.codes(i, j) =
            rng.categorical(std::span<const double>(probs.data(), std::size_t(probs.size())));
      }
    }
  }

  for (int j = 0; j < p; ++j) {
    data.dataset.levels.push_back(d);
    const int g = assignment[std::size_t(j)];
    data.dataset.names.push_back("g" + std::to_string(g + 1) + "_v" +
                                 std::to_string(g == 0 ? j + 1 : j - p_g + 1));
  }
  data.dataset.validate();
  return data;
}

void write_simulation(const SimulatedData& data, const ScenarioSpec& spec,
                      const std::filesystem::path& directory) {
  std::filesystem::create_directories(directory);

  DatasetSchema schema;
  for (int j = 0; j < data.dataset.p(); ++j) {
    VariableSpec v;
    v.name = data.dataset.names[std::size_t(j)];
    v.levels = data.dataset.levels[std::size_t(j)];
    v.group = data.partition.assignment[std::size_t(j)] + 1;
    schema.variables.push_back(v);
  }
  save_schema(schema, directory / "schema.json");
  save_dataset(data.dataset, std::nullopt, schema, directory / "dataset.csv");

  nlohmann::json truth;
  truth["scenario"] = scenario_to_string(spec.id);
  truth["seed"] = spec.seed;
  truth["scores"] = nlohmann::json::array();
  for (int i = 0; i < data.scores.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int g = 0; g < data.scores.cols(); ++g) row.push_back(data.scores(i, g));
    truth["scores"].push_back(row);
  }
  truth["kernels"] = nlohmann::json::array();
  for (const auto& theta : data.true_kernels) {
    nlohmann::json matrix = nlohmann::json::array();
    for (int h = 0; h < theta.rows(); ++h) {
      nlohmann::json row = nlohmann::json::array();
      for (int k = 0; k < theta.cols(); ++k) row.push_back(theta(h, k));
      matrix.push_back(row);
    }
    truth["kernels"].push_back(matrix);
  }
  if (!data.scores_full.empty() && data.scores_full[0].size() > 0) {
    truth["scores_full_group1"] = nlohmann::json::array();
    for (int i = 0; i < data.scores_full[0].rows(); ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (int h = 0; h < data.scores_full[0].cols(); ++h) {
        row.push_back(data.scores_full[0](i, h));
      }
      truth["scores_full_group1"].push_back(row);
    }
  }
  std::ofstream out(directory / "truth.json");
  if (!out) throw ParseError("cannot write truth sidecar");
  out << truth.dump() << "\n";
}

TruthSidecar load_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open truth sidecar " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("truth sidecar " + path.string() + ": " + e.what());
  }
  TruthSidecar truth;
  truth.scenario = doc.value("scenario", "");
  truth.seed = doc.value("seed", std::uint64_t(0));
  const auto& scores = doc.at("scores");
  const int n = int(scores.size());
  const int G = n > 0 ? int(scores[0].size()) : 0;
  truth.scores.resize(n, G);
  for (int i = 0; i < n; ++i) {
    for (int g = 0; g < G; ++g) truth.scores(i, g) = scores[std::size_t(i)][std::size_t(g)];
  }
  for (const auto& matrix : doc.at("kernels")) {
    const int rows = int(matrix.size());
    const int cols = rows > 0 ? int(matrix[0].size()) : 0;
    Eigen::MatrixXd theta(rows, cols);
    for (int h = 0; h < rows; ++h) {
      for (int k = 0; k < cols; ++k) theta(h, k) = matrix[std::size_t(h)][std::size_t(k)];
    }
    truth.true_kernels.push_back(theta);
  }
  return truth;
}

}  // namespace mmm
