#include "mmm/chain_io.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include <json.hpp>

#include "mmm/errors.hpp"

namespace mmm {

namespace {

using nlohmann::json;

void append_dim(std::vector<std::uint64_t>& shape, int value) {
  shape.push_back(std::uint64_t(value));
}

std::uint64_t shape_cells(const std::vector<std::uint64_t>& shape) {
  std::uint64_t cells = 1;
  for (std::uint64_t d : shape) cells *= d;
  return cells;
}

// Field serializers: flatten retained draws into row-major arrays.

std::vector<double> flatten_matrices(const std::vector<Eigen::MatrixXd>& draws) {
  std::vector<double> data;
  if (draws.empty()) return data;
  data.reserve(draws.size() * std::size_t(draws.front().size()));
  for (const auto& m : draws) {
    for (int r = 0; r < m.rows(); ++r) {
      for (int c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
    }
  }
  return data;
}

std::vector<double> flatten_vectors(const std::vector<Eigen::VectorXd>& draws) {
  std::vector<double> data;
  for (const auto& v : draws) {
    for (int i = 0; i < v.size(); ++i) data.push_back(v[i]);
  }
  return data;
}

std::vector<double> flatten_kernels(const std::vector<KernelSet>& draws, int d_max) {
  std::vector<double> data;
  for (const auto& kernels : draws) {
    for (const auto& theta : kernels.theta) {
      for (int h = 0; h < theta.rows(); ++h) {
        for (int k = 0; k < d_max; ++k) {
          data.push_back(k < theta.cols() ? theta(h, k) : 0.0);
        }
      }
    }
  }
  return data;
}

std::vector<double> flatten_epoch_matrices(
    const std::vector<std::vector<Eigen::MatrixXd>>& draws) {
  std::vector<double> data;
  for (const auto& epochs : draws) {
    for (const auto& m : epochs) {
      for (int r = 0; r < m.rows(); ++r) {
        for (int c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
      }
    }
  }
  return data;
}

Eigen::MatrixXd matrix_at(const std::vector<double>& data, std::size_t offset, int rows,
                          int cols) {
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = data[offset + std::size_t(r) * cols + c];
  }
  return m;
}

}  // namespace

void write_array(const std::filesystem::path& path, const std::vector<std::uint64_t>& shape,
                 const std::vector<double>& data) {
  if (shape_cells(shape) != data.size()) {
    throw ValidationError("array shape does not match the payload size");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write array file " + path.string());
  const std::uint64_t ndim = shape.size();
  out.write(reinterpret_cast<const char*>(&ndim), sizeof(ndim));
  out.write(reinterpret_cast<const char*>(shape.data()),
            std::streamsize(shape.size() * sizeof(std::uint64_t)));
  out.write(reinterpret_cast<const char*>(data.data()),
            std::streamsize(data.size() * sizeof(double)));
}

std::pair<std::vector<std::uint64_t>, std::vector<double>> read_array(
    const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open array file " + path.string());
  std::uint64_t ndim = 0;
  in.read(reinterpret_cast<char*>(&ndim), sizeof(ndim));
  if (!in || ndim > 16) throw ParseError("corrupt array header in " + path.string());
  std::vector<std::uint64_t> shape(ndim);
  in.read(reinterpret_cast<char*>(shape.data()),
          std::streamsize(ndim * sizeof(std::uint64_t)));
  const std::uint64_t cells = shape_cells(shape);
  std::vector<double> data(cells);
  in.read(reinterpret_cast<char*>(data.data()), std::streamsize(cells * sizeof(double)));
  if (!in) throw ParseError("truncated array file " + path.string());
  return {std::move(shape), std::move(data)};
}

void save_archive(const std::filesystem::path& directory, const ChainSamples& samples,
                  const ArchiveManifest& manifest) {
  std::filesystem::create_directories(directory);
  const int draws = samples.num_draws();
  const int d_max = *std::max_element(manifest.levels.begin(), manifest.levels.end());

  json fields = json::object();
  auto emit = [&](const std::string& name, const std::vector<std::uint64_t>& shape,
                  const std::vector<double>& data) {
    const auto path = directory / (name + ".bin");
    write_array(path, shape, data);
    fields[name] = {{"file", name + ".bin"},
                    {"dtype", "f64le"},
                    {"shape", shape},
                    {"digest", file_digest(path)}};
  };

  if (!samples.lambda.empty()) {
    std::vector<std::uint64_t> shape;
    append_dim(shape, draws);
    append_dim(shape, manifest.n);
    append_dim(shape, manifest.num_groups);
    emit("lambda", shape, flatten_matrices(samples.lambda));
  }
  if (!samples.kernels.empty()) {
    std::vector<std::uint64_t> shape;
    append_dim(shape, draws);
    append_dim(shape, manifest.p);
    append_dim(shape, 2);
    append_dim(shape, d_max);
    emit("theta", shape, flatten_kernels(samples.kernels, d_max));
  }
  if (!samples.mu.empty()) {
    std::vector<std::uint64_t> shape;
    append_dim(shape, draws);
    append_dim(shape, manifest.num_groups);
    emit("mu", shape, flatten_vectors(samples.mu));
  }
  if (!samples.sigma.empty()) {
    std::vector<std::uint64_t> shape;
    append_dim(shape, draws);
    append_dim(shape, manifest.num_groups);
    append_dim(shape, manifest.num_groups);
    emit("sigma", shape, flatten_matrices(samples.sigma));
  }
  if (samples.has_spatial()) {
    const int T = manifest.num_epochs;
    const int G = manifest.num_groups;
    std::vector<std::uint64_t> shape;
    append_dim(shape, draws);
    append_dim(shape, T);
    append_dim(shape, G);
    emit("beta_t", shape, flatten_matrices(samples.beta_t));
    shape = {};
    append_dim(shape, draws);
    append_dim(shape, G);
    emit("beta", shape, flatten_vectors(samples.beta));
    shape = {};
    append_dim(shape, draws);
    append_dim(shape, G);
    append_dim(shape, G);
    emit("sigma_beta", shape, flatten_matrices(samples.sigma_beta));
    shape = {};
    append_dim(shape, draws);
    append_dim(shape, T);
    append_dim(shape, G);
    append_dim(shape, G);
    emit("sigma_t", shape, flatten_epoch_matrices(samples.sigma_t));
    shape = {};
    append_dim(shape, draws);
    append_dim(shape, manifest.n);
    append_dim(shape, G);
    emit("zeta", shape, flatten_matrices(samples.zeta));
    shape = {};
    append_dim(shape, draws);
    append_dim(shape, T);
    append_dim(shape, G);
    append_dim(shape, 2);
    emit("gamma", shape, flatten_epoch_matrices(samples.gammas));
  }

  json doc;
  doc["format"] = kArchiveFormat;
  doc["variant"] = manifest.variant;
  doc["seed"] = manifest.seed;
  doc["iterations"] = manifest.iterations;
  doc["burn_in"] = manifest.burn_in;
  doc["thin"] = manifest.thin;
  doc["completed_iterations"] = manifest.completed_iterations;
  doc["collapsed_mu_first"] = manifest.collapsed_mu_first;
  doc["dataset_digest"] = manifest.dataset_digest;
  doc["n"] = manifest.n;
  doc["p"] = manifest.p;
  doc["num_groups"] = manifest.num_groups;
  doc["levels"] = manifest.levels;
  doc["retained_iterations"] = samples.meta.retained_iterations;
  doc["rng"] = {{"algorithm", "philox4x32-10"}, {"seed", manifest.seed}};
  doc["wall_time_sec"] = manifest.wall_time_sec;
  if (manifest.variant == "spatiotemporal") {
    doc["num_epochs"] = manifest.num_epochs;
    doc["epoch_labels"] = manifest.epoch_labels;
    doc["nugget"] = manifest.nugget;
  }
  doc["fields"] = fields;
  std::ofstream out(directory / "manifest.json");
  if (!out) throw ParseError("cannot write manifest");
  out << doc.dump(2) << "\n";
}

LoadedArchive load_archive(const std::filesystem::path& directory) {
  std::ifstream in(directory / "manifest.json");
  if (!in) throw ParseError("cannot open archive manifest in " + directory.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ParseError("archive manifest: " + std::string(e.what()));
  }
  if (doc.value("format", "") != kArchiveFormat) {
    throw ValidationError("unsupported archive format");
  }

  LoadedArchive archive;
  ArchiveManifest& manifest = archive.manifest;
  manifest.variant = doc.value("variant", "plain");
  manifest.seed = doc.value("seed", std::uint64_t(0));
  manifest.iterations = doc.value("iterations", 0);
  manifest.burn_in = doc.value("burn_in", 0);
  manifest.thin = doc.value("thin", 1);
  manifest.completed_iterations = doc.value("completed_iterations", 0);
  manifest.collapsed_mu_first = doc.value("collapsed_mu_first", true);
  manifest.dataset_digest = doc.value("dataset_digest", "");
  manifest.n = doc.value("n", 0);
  manifest.p = doc.value("p", 0);
  manifest.num_groups = doc.value("num_groups", 0);
  manifest.levels = doc.value("levels", std::vector<int>{});
  manifest.num_epochs = doc.value("num_epochs", 0);
  manifest.epoch_labels = doc.value("epoch_labels", std::vector<int>{});
  manifest.nugget = doc.value("nugget", 0.0);
  manifest.wall_time_sec = doc.value("wall_time_sec", 0.0);

  ChainSamples& samples = archive.samples;
  samples.meta.seed = manifest.seed;
  samples.meta.iterations = manifest.iterations;
  samples.meta.burn_in = manifest.burn_in;
  samples.meta.thin = manifest.thin;
  samples.meta.dataset_digest = manifest.dataset_digest;
  samples.meta.retained_iterations = doc.value("retained_iterations", std::vector<int>{});

  const json& fields = doc.at("fields");
  auto read_field = [&](const std::string& name) {
    const json& meta = fields.at(name);
    const auto path = directory / meta.at("file").get<std::string>();
    const std::string digest = file_digest(path);
    if (digest != meta.at("digest").get<std::string>()) {
      throw ValidationError("archive field '" + name + "' failed its checksum");
    }
    return read_array(path);
  };

  const int G = manifest.num_groups;
  if (fields.contains("lambda")) {
    const auto [shape, data] = read_field("lambda");
    const int draws = int(shape[0]);
    for (int d = 0; d < draws; ++d) {
      samples.lambda.push_back(matrix_at(
          data, std::size_t(d) * std::size_t(manifest.n) * G, manifest.n, G));
    }
  }
  if (fields.contains("theta")) {
    const auto [shape, data] = read_field("theta");
    const int draws = int(shape[0]);
    const int d_max = int(shape[3]);
    for (int d = 0; d < draws; ++d) {
      KernelSet kernels;
      for (int j = 0; j < manifest.p; ++j) {
        const std::size_t offset =
            ((std::size_t(d) * manifest.p + j) * 2) * std::size_t(d_max);
        const Eigen::MatrixXd padded = matrix_at(data, offset, 2, d_max);
        kernels.theta.push_back(padded.leftCols(manifest.levels[std::size_t(j)]));
      }
      samples.kernels.push_back(std::move(kernels));
    }
  }
  if (fields.contains("mu")) {
    const auto [shape, data] = read_field("mu");
    const int draws = int(shape[0]);
    for (int d = 0; d < draws; ++d) {
      samples.mu.push_back(matrix_at(data, std::size_t(d) * G, G, 1).col(0));
    }
  }
  if (fields.contains("sigma")) {
    const auto [shape, data] = read_field("sigma");
    const int draws = int(shape[0]);
    for (int d = 0; d < draws; ++d) {
      samples.sigma.push_back(matrix_at(data, std::size_t(d) * G * G, G, G));
    }
  }
  if (fields.contains("beta_t")) {
    const int T = manifest.num_epochs;
    {
      const auto [shape, data] = read_field("beta_t");
      for (int d = 0; d < int(shape[0]); ++d) {
        samples.beta_t.push_back(matrix_at(data, std::size_t(d) * T * G, T, G));
      }
    }
    {
      const auto [shape, data] = read_field("beta");
      for (int d = 0; d < int(shape[0]); ++d) {
        samples.beta.push_back(matrix_at(data, std::size_t(d) * G, G, 1).col(0));
      }
    }
    {
      const auto [shape, data] = read_field("sigma_beta");
      for (int d = 0; d < int(shape[0]); ++d) {
        samples.sigma_beta.push_back(matrix_at(data, std::size_t(d) * G * G, G, G));
      }
    }
    {
      const auto [shape, data] = read_field("sigma_t");
      for (int d = 0; d < int(shape[0]); ++d) {
        std::vector<Eigen::MatrixXd> epochs;
        for (int t = 0; t < T; ++t) {
          epochs.push_back(
              matrix_at(data, (std::size_t(d) * T + t) * G * G, G, G));
        }
        samples.sigma_t.push_back(std::move(epochs));
      }
    }
    {
      const auto [shape, data] = read_field("zeta");
      for (int d = 0; d < int(shape[0]); ++d) {
        samples.zeta.push_back(
            matrix_at(data, std::size_t(d) * std::size_t(manifest.n) * G, manifest.n, G));
      }
    }
    {
      const auto [shape, data] = read_field("gamma");
      for (int d = 0; d < int(shape[0]); ++d) {
        std::vector<Eigen::MatrixXd> epochs;
        for (int t = 0; t < T; ++t) {
          epochs.push_back(matrix_at(data, (std::size_t(d) * T + t) * G * 2, G, 2));
        }
        samples.gammas.push_back(std::move(epochs));
      }
    }
  }
  return archive;
}

namespace {

constexpr const char* kCheckpointFile = "checkpoint.bin";
constexpr const char* kCheckpointMeta = "checkpoint.json";

void push_matrix(std::vector<double>& data, const Eigen::MatrixXd& m) {
  for (int r = 0; r < m.rows(); ++r) {
    for (int c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
}

Eigen::MatrixXd pop_matrix(const std::vector<double>& data, std::size_t& offset, int rows,
                           int cols) {
  const Eigen::MatrixXd m = matrix_at(data, offset, rows, cols);
  offset += std::size_t(rows) * std::size_t(cols);
  return m;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& directory, const ChainState& state,
                     const StState* st_state) {
  std::vector<double> data;
  const int n = int(state.latent.lambda.rows());
  const int G = int(state.latent.lambda.cols());
  const int p = int(state.latent.z.cols());
  push_matrix(data, state.latent.z.cast<double>());
  push_matrix(data, state.latent.lambda);
  push_matrix(data, state.latent.omega);
  push_matrix(data, state.latent.k);
  std::vector<int> levels;
  for (const auto& theta : state.kernels.theta) {
    levels.push_back(int(theta.cols()));
    push_matrix(data, theta);
  }
  push_matrix(data, state.mu);
  push_matrix(data, state.sigma);

  json meta;
  meta["n"] = n;
  meta["p"] = p;
  meta["num_groups"] = G;
  meta["levels"] = levels;
  meta["spatial"] = st_state != nullptr;
  if (st_state) {
    const int T = int(st_state->st.sigma_t.size());
    meta["num_epochs"] = T;
    meta["nugget"] = st_state->st.nugget;
    push_matrix(data, st_state->st.beta_t);
    push_matrix(data, st_state->st.beta);
    push_matrix(data, st_state->st.sigma_beta);
    for (const auto& s : st_state->st.sigma_t) push_matrix(data, s);
    push_matrix(data, st_state->st.zeta_tilde);
    push_matrix(data, st_state->st.zeta);
    for (const auto& g : st_state->st.gammas) push_matrix(data, g);
    for (const auto& g : st_state->st.log_proposal_sd) push_matrix(data, g);
    for (const auto& g : st_state->st.accept_count) push_matrix(data, g);
    for (const auto& g : st_state->st.attempt_count) push_matrix(data, g);
  }

  write_array(directory / kCheckpointFile, {std::uint64_t(data.size())}, data);
  meta["digest"] = file_digest(directory / kCheckpointFile);
  std::ofstream out(directory / kCheckpointMeta);
  if (!out) throw ParseError("cannot write checkpoint metadata");
  out << meta.dump(2) << "\n";
}

namespace {

json load_checkpoint_meta(const std::filesystem::path& directory) {
  std::ifstream in(directory / kCheckpointMeta);
  if (!in) throw ParseError("no checkpoint in " + directory.string());
  json meta;
  in >> meta;
  const std::string digest = file_digest(directory / kCheckpointFile);
  if (digest != meta.at("digest").get<std::string>()) {
    throw ValidationError("checkpoint failed its checksum");
  }
  return meta;
}

ChainState load_base_state(const json& meta, const std::vector<double>& data,
                           std::size_t& offset) {
  const int n = meta.at("n").get<int>();
  const int p = meta.at("p").get<int>();
  const int G = meta.at("num_groups").get<int>();
  const std::vector<int> levels = meta.at("levels").get<std::vector<int>>();
  ChainState state;
  state.latent.z = pop_matrix(data, offset, n, p).cast<int>();
  state.latent.lambda = pop_matrix(data, offset, n, G);
  state.latent.omega = pop_matrix(data, offset, n, G);
  state.latent.k = pop_matrix(data, offset, n, G);
  for (int j = 0; j < p; ++j) {
    state.kernels.theta.push_back(pop_matrix(data, offset, 2, levels[std::size_t(j)]));
  }
  state.mu = pop_matrix(data, offset, G, 1).col(0);
  state.sigma = pop_matrix(data, offset, G, G);
  return state;
}

}  // namespace

ChainState load_checkpoint_plain(const std::filesystem::path& directory) {
  const json meta = load_checkpoint_meta(directory);
  const auto [shape, data] = read_array(directory / kCheckpointFile);
  std::size_t offset = 0;
  return load_base_state(meta, data, offset);
}

StState load_checkpoint_st(const std::filesystem::path& directory) {
  const json meta = load_checkpoint_meta(directory);
  if (!meta.value("spatial", false)) {
    throw ValidationError("checkpoint does not contain spatio-temporal state");
  }
  const auto [shape, data] = read_array(directory / kCheckpointFile);
  std::size_t offset = 0;
  StState state;
  state.base = load_base_state(meta, data, offset);
  const int n = int(state.base.latent.lambda.rows());
  const int G = int(state.base.latent.lambda.cols());
  const int T = meta.at("num_epochs").get<int>();
  state.st.nugget = meta.at("nugget").get<double>();
  state.st.beta_t = pop_matrix(data, offset, T, G);
  state.st.beta = pop_matrix(data, offset, G, 1).col(0);
  state.st.sigma_beta = pop_matrix(data, offset, G, G);
  for (int t = 0; t < T; ++t) state.st.sigma_t.push_back(pop_matrix(data, offset, G, G));
  state.st.zeta_tilde = pop_matrix(data, offset, n, G);
  state.st.zeta = pop_matrix(data, offset, n, G);
  for (int t = 0; t < T; ++t) state.st.gammas.push_back(pop_matrix(data, offset, G, 2));
  for (int t = 0; t < T; ++t) {
    state.st.log_proposal_sd.push_back(pop_matrix(data, offset, G, 2));
  }
  for (int t = 0; t < T; ++t) state.st.accept_count.push_back(pop_matrix(data, offset, G, 2));
  for (int t = 0; t < T; ++t) state.st.attempt_count.push_back(pop_matrix(data, offset, G, 2));
  return state;
}

void advance_chain(const CategoricalDataset& dataset, const GroupPartition& partition,
                   const Hyperparams& hyper, const ChainConfig& config, ChainState& state,
                   int first_sweep, ChainSamples& samples) {
  for (int sweep = first_sweep; sweep <= config.iterations; ++sweep) {
    try {
      gibbs_sweep(dataset, partition, hyper, state, config.seed, std::uint64_t(sweep),
                  config.collapsed_mu_first);
    } catch (const NumericError& e) {
      throw NumericError("sweep " + std::to_string(sweep) + ": " + e.what());
    }
    if (config.check_invariants) state.validate(dataset, partition);
    if (sweep > config.burn_in && (sweep - config.burn_in) % config.thin == 0) {
      samples.meta.retained_iterations.push_back(sweep);
      if (config.retain.lambda) samples.lambda.push_back(state.latent.lambda);
      if (config.retain.kernels) samples.kernels.push_back(state.kernels);
      if (config.retain.mu) samples.mu.push_back(state.mu);
      if (config.retain.sigma) samples.sigma.push_back(state.sigma);
    }
  }
}

void advance_chain_st(const CategoricalDataset& dataset, const GroupPartition& partition,
                      const Hyperparams& hyper, const SpaceTimeCovariates& cov,
                      const StConfig& st_config, const ChainConfig& config, StState& state,
                      int first_sweep, ChainSamples& samples) {
  for (int sweep = first_sweep; sweep <= config.iterations; ++sweep) {
    const bool adapting = sweep <= config.burn_in;
    try {
      gibbs_sweep_st(dataset, partition, hyper, cov, st_config, state, adapting, config.seed,
                     std::uint64_t(sweep));
    } catch (const NumericError& e) {
      throw NumericError("sweep " + std::to_string(sweep) + ": " + e.what());
    }
    if (config.check_invariants) state.base.validate(dataset, partition);
    if (sweep > config.burn_in && (sweep - config.burn_in) % config.thin == 0) {
      samples.meta.retained_iterations.push_back(sweep);
      if (config.retain.lambda) samples.lambda.push_back(state.base.latent.lambda);
      if (config.retain.kernels) samples.kernels.push_back(state.base.kernels);
      if (config.retain.mu) samples.mu.push_back(state.st.beta);
      if (config.retain.sigma) samples.sigma.push_back(state.st.sigma_beta);
      if (config.retain.spatial) {
        samples.beta_t.push_back(state.st.beta_t);
        samples.beta.push_back(state.st.beta);
        samples.sigma_beta.push_back(state.st.sigma_beta);
        samples.sigma_t.push_back(state.st.sigma_t);
        samples.zeta.push_back(state.st.zeta);
        samples.gammas.push_back(state.st.gammas);
      }
    }
  }
}

}  // namespace mmm
