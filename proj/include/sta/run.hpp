#pragma once

// Run configuration, artifact files and manifests shared by the command-line
// tool, the acceptance harness and the Python module.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sta/balance.hpp"
#include "sta/costmodel.hpp"
#include "sta/refnet.hpp"
#include "sta/workload.hpp"

namespace sta {

inline constexpr std::string_view kToolVersion = "0.1.0";

struct RunConfig {
  std::string network = "toy";  // preset name or path to a network file
  double sparsity = 5.0;        // weight sparsity factor; 1 trains densely
  double lambda = 0.9;
  std::int64_t cutoff = 1000;
  bool decay = true;
  std::int64_t batch = 0;  // 0: the preset's minibatch
  std::uint64_t seed = 1;
  std::uint64_t data_seed = 2024;
  std::int64_t epochs = 5;
  std::int64_t train_samples = 8000;
  std::int64_t val_samples = 2000;
  double eta = 0.1;
  std::int64_t snapshot_every = 0;
  bool oracle = false;
  std::string array = "16x16";
  std::string mappings = "kn";  // "all" or a comma-separated list such as "kn,ck"
  bool balanced = true;
  std::string energy;  // energy table file; empty keeps the defaults
  std::string masks;   // directory written by a training run
  std::string synthetic = "uniform";  // masks without a directory: uniform | random | dense
  double act_density = 1.0;
  std::string scale_to;  // second array for a scaling report
  std::string phase = "fw";

  // Keys equal the member names; unknown keys throw ConfigError.
  void apply_json(std::string_view json_text);
  // Sorted-key JSON without whitespace. The output directory is not part of
  // the configuration.
  std::string canonical() const;
  std::uint64_t hash() const;

  Network resolve_network() const;
  ArrayConfig resolve_array() const;
  EnergyTable resolve_energy() const;
  std::vector<Scheme> resolve_mappings() const;
  TrainingConfig training_config() const;
};

// Writes through a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

// manifest.json: tool, version, command, canonical config, config hash
// (16 hex digits), seeds and the FNV-1a hash of every listed file.
void write_manifest(const std::filesystem::path& dir, std::string_view command, const RunConfig& config,
                    const std::vector<std::string>& files);

std::string epochs_csv(const TrainingResult& result);
std::string iterations_csv(const TrainingResult& result);

// Training artifacts: epochs.csv, iterations.csv, network.json,
// checkpoint.stck, masks/<layer>.csb, activations/<layer>.csb and, with
// snapshots, snapshots/<iteration>/<layer>.csb. Returns the written paths
// relative to dir.
std::vector<std::string> save_training(const std::filesystem::path& dir, const Network& net,
                                       const TrainingResult& result);

// Sparsity of every weighted layer from a training directory. Activation
// files are optional. Throws ConfigError for a missing directory or mask and
// ShapeError for masks that do not fit the network.
std::vector<LayerSparsity> load_sparsity(const std::filesystem::path& dir, const Network& net);
// Synthetic masks at the configured sparsity.
std::vector<LayerSparsity> synthetic_sparsity(const Network& net, const RunConfig& config);

// Per-wave (max / mean - 1) of one phase across all weighted layers.
struct WaveOverheads {
  std::vector<std::string> layer;
  std::vector<double> unbalanced;
  std::vector<double> balanced;
};
WaveOverheads wave_overheads(const Network& net, std::span<const LayerSparsity> sparsity, Scheme scheme,
                             Phase phase, const ArrayConfig& array);

// Dense baseline, idealized bound and one sparse run per mapping.
struct SimulationSummary {
  NetworkCost dense;
  NetworkCost ideal;
  std::vector<NetworkCost> runs;
};
SimulationSummary simulate(const Network& net, std::span<const LayerSparsity> sparsity,
                           std::span<const Scheme> schemes, bool balanced, const EnergyTable& energy,
                           const ArrayConfig& array);
// run,mapping,balanced,cycles,e_mac,e_rf,e_glb,e_dram,e_total,speedup,
// energy_reduction,ideal_speedup,fraction_of_ideal; rows dense, ideal, then
// the sparse runs. Ratios are against the dense row.
std::string summary_csv(const SimulationSummary& s);
// run,mapping,balanced,phase,cycles,e_mac,e_rf,e_glb,e_dram,e_total
std::string phase_csv(const SimulationSummary& s);
std::string cost_csv(const SimulationSummary& s);

}  // namespace sta
