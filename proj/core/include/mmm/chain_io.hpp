#ifndef MMM_CHAIN_IO_HPP
#define MMM_CHAIN_IO_HPP

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mmm/gibbs.hpp"
#include "mmm/spatiotemporal.hpp"

namespace mmm {

/// Chain archive: a directory holding manifest.json plus one flat binary
/// array per retained field (little-endian 64-bit floats, row-major,
/// shape-prefixed with 64-bit dims), and a checkpoint for resumption.
inline constexpr const char* kArchiveFormat = "mmm-chain/1";

struct ArchiveManifest {
  std::string variant = "plain";  // "plain" | "spatiotemporal"
  std::uint64_t seed = 0;
  int iterations = 0;
  int burn_in = 0;
  int thin = 0;
  int completed_iterations = 0;
  bool collapsed_mu_first = true;
  std::string dataset_digest;
  int n = 0, p = 0, num_groups = 0, num_epochs = 0;
  std::vector<int> levels;
  std::vector<int> epoch_labels;
  double nugget = 0.0;
  double wall_time_sec = 0.0;
};

/// Shape-prefixed binary array IO.
void write_array(const std::filesystem::path& path, const std::vector<std::uint64_t>& shape,
                 const std::vector<double>& data);
std::pair<std::vector<std::uint64_t>, std::vector<double>> read_array(
    const std::filesystem::path& path);

/// Writes manifest.json plus the per-field arrays, with per-file digests
/// recorded in the manifest.
void save_archive(const std::filesystem::path& directory, const ChainSamples& samples,
                  const ArchiveManifest& manifest);

struct LoadedArchive {
  ChainSamples samples;
  ArchiveManifest manifest;
};

/// Loads and digest-verifies an archive.
LoadedArchive load_archive(const std::filesystem::path& directory);

/// Full sampler state at the last completed sweep, enabling deterministic
/// resumption (the counter-based streams are addressed by sweep index, so the
/// seed plus the sweep counter is the entire RNG state).
void save_checkpoint(const std::filesystem::path& directory, const ChainState& state,
                     const StState* st_state);
ChainState load_checkpoint_plain(const std::filesystem::path& directory);
StState load_checkpoint_st(const std::filesystem::path& directory);

/// Advances an existing chain through sweeps [first_sweep, config.iterations],
/// appending retained draws; used by run_chain and by resume.
void advance_chain(const CategoricalDataset& dataset, const GroupPartition& partition,
                   const Hyperparams& hyper, const ChainConfig& config, ChainState& state,
                   int first_sweep, ChainSamples& samples);
void advance_chain_st(const CategoricalDataset& dataset, const GroupPartition& partition,
                      const Hyperparams& hyper, const SpaceTimeCovariates& cov,
                      const StConfig& st_config, const ChainConfig& config, StState& state,
                      int first_sweep, ChainSamples& samples);

}  // namespace mmm

#endif  // MMM_CHAIN_IO_HPP
