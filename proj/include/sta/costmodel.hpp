#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sta/csb.hpp"
#include "sta/workload.hpp"

namespace sta {

// Loop dimensions that can be bound to the PE array.
enum class Dim { N, C, K, P, Q };
inline constexpr std::array<Dim, 5> kAllDims{Dim::N, Dim::C, Dim::K, Dim::P, Dim::Q};
std::string_view to_string(Dim d);

// How one tensor reaches the PEs under a spatial binding: multicast along a
// PE row (H), along a PE column (V), unicast to each PE (U) or broadcast to
// the whole array (B).
enum class Role { H, V, U, B };
std::string_view to_string(Role r);

// The three tensors of a layer. Weight is w (and its gradient), Input is
// x (and dL/dx), Output is y (and dL/dy).
enum class Tensor3 { Weight, Input, Output };

struct ArrayConfig {
  std::int64_t rows = 16;
  std::int64_t cols = 16;
  std::int64_t rf_bytes = 1024;
  std::int64_t glb_bytes = 128 * 1024;
  // Fixed cycles added to every wave (pipeline fill); 0 by default.
  double wave_cycles = 0.0;
  // Extra latency fraction charged to cross-array {C,K} balancing for its
  // additional unicast hops and doubled input buffering.
  double ck_penalty = 0.10;

  std::int64_t pes() const { return rows * cols; }
  void validate() const;
  // "WxH", e.g. "32x32". Larger arrays scale the global buffer: 32x32 gets
  // twice the 16x16 buffer.
  static ArrayConfig parse(std::string_view text);
  static ArrayConfig grid(std::int64_t rows, std::int64_t cols);
};

// Energy per event in pJ.
struct EnergyTable {
  double mac = 4.6;
  double rf = 0.5;
  double glb = 5.0;
  double dram = 160.0;  // per 32-bit word

  // Requires dram > glb > rf > 0 and mac > 0; throws ConfigError.
  void validate() const;
  static EnergyTable parse(std::string_view json_text);
  static EnergyTable load(const std::filesystem::path& path);
  std::string to_json() const;
};

enum class Scheme { CK, KN, CN, PQ };
inline constexpr std::array<Scheme, 4> kAllSchemes{Scheme::CK, Scheme::KN, Scheme::CN, Scheme::PQ};
// "C,K", "K,N", "C,N", "P,Q".
std::string_view to_string(Scheme s);
// Accepts "CK" or "C,K" (any case).
Scheme parse_scheme(std::string_view text);

struct Mapping {
  Scheme scheme = Scheme::KN;
  Dim rows = Dim::K;  // dimension spread over PE rows
  Dim cols = Dim::N;  // dimension spread over PE columns
  // Per-PE tile size of each dimension (indexed by Dim): the spatial tile
  // for the two spatial dimensions, the temporal chunk for the others.
  std::array<std::int64_t, 5> tile{};
  // Number of spatial PE groups used along rows and columns.
  std::int64_t row_groups = 0;
  std::int64_t col_groups = 0;
  // Dimensions iterated across steps in each phase (indexed by Phase),
  // outermost first. A spatial dimension appears here when one pass of the
  // array cannot hold it.
  std::array<std::vector<Dim>, 3> loop_order;
  // Register-file fills needed to cover the layer. Consecutive steps that
  // only advance reduction chunks make up one synchronous wave.
  std::int64_t steps = 0;
  std::int64_t rf_words = 0;   // per-PE working set
  std::int64_t glb_words = 0;  // per-step array working set
  bool low_utilization = false;

  bool is_spatial(Dim d) const { return d == rows || d == cols; }
  std::int64_t pes_used() const { return row_groups * col_groups; }
  // Extent of dimension d covered by one wave.
  std::int64_t chunk(Dim d) const {
    const auto t = tile[static_cast<std::size_t>(d)];
    return d == rows ? t * row_groups : d == cols ? t * col_groups : t;
  }
  // Delivery role of a tensor; the same tensor keeps its role in every phase.
  Role role(Tensor3 t) const;
};

// The four spatial schemes with capacity-legal tilings. Throws
// InfeasibleError when no scheme fits the buffers.
std::vector<Mapping> enumerate_mappings(const LayerShape& layer, const ArrayConfig& array);
// One scheme; throws InfeasibleError when its tiling cannot fit.
Mapping make_mapping(const LayerShape& layer, const ArrayConfig& array, Scheme scheme);

// Sparsity sources of one weighted layer. Missing weights mean dense
// weights; missing activations fall back to a uniform density.
struct LayerSparsity {
  std::optional<CsbTensor> weights;      // [K][C][R][S] per kernel, fc [K][C]
  std::optional<CsbTensor> activations;  // input activations [N][C][H][W]
  double activation_density = 1.0;

  bool dense() const { return !weights && !activations && activation_density >= 1.0; }
  double weight_density() const { return weights ? weights->density() : 1.0; }
  double input_density() const { return activations ? activations->density() : activation_density; }
};

struct EnergyBreakdown {
  double mac = 0.0;
  double rf = 0.0;
  double glb = 0.0;
  double dram = 0.0;
  double total() const { return mac + rf + glb + dram; }
  EnergyBreakdown& operator+=(const EnergyBreakdown& o);
};

struct AccessCounts {
  double macs = 0.0;
  double rf = 0.0;
  double glb = 0.0;
  double dram_words = 0.0;
  AccessCounts& operator+=(const AccessCounts& o);
};

// One synchronous wave. Flow and message counts are summed over its steps.
struct WaveTrace {
  double cycles = 0.0;
  double mean_load = 0.0;
  std::int64_t multicast_flows = 0;
  std::int64_t unicast_messages = 0;
  bool rebalanced = false;
};

struct PhaseCost {
  Phase phase = Phase::Forward;
  Scheme scheme = Scheme::KN;
  bool balanced = false;
  double cycles = 0.0;
  double dense_macs = 0.0;
  double qe_events = 0.0;
  AccessCounts counts;
  EnergyBreakdown energy;
  std::int64_t waves = 0;  // synchronous waves; trace has one entry per wave
  std::int64_t multicast_flows = 0;
  std::int64_t unicast_messages = 0;
  std::vector<WaveTrace> trace;

  double macs() const { return counts.macs; }
};

// Latency and energy of one phase of one layer. `balanced` applies
// half-tile pairing: along K (forward, backward) or N (weight update) for
// {K,N}; across the whole array for {C,K}, with the interconnect penalty.
// {C,N} and {P,Q} run unbalanced. Throws ShapeError for masks that do not
// match the layer and InfeasibleError for impossible tilings.
PhaseCost phase_cost(const LayerShape& layer, const Mapping& mapping, Phase phase, const LayerSparsity& sparsity,
                     bool balanced, const EnergyTable& energy, const ArrayConfig& array);

struct LayerPhaseCost {
  std::string layer;
  PhaseCost cost;
};

struct NetworkCost {
  std::vector<LayerPhaseCost> rows;
  std::array<double, 3> phase_cycles{};
  std::array<EnergyBreakdown, 3> phase_energy{};

  double cycles() const { return phase_cycles[0] + phase_cycles[1] + phase_cycles[2]; }
  EnergyBreakdown energy() const;
};

// Scheme per layer (pool layers are skipped), or one scheme for all.
struct Schedule {
  std::vector<Scheme> schemes;  // empty: use `uniform`
  Scheme uniform = Scheme::KN;
  bool balanced = true;
  Scheme scheme_for(std::size_t weighted_index) const;
};

// Sums phase_cost over every weighted layer and phase. `sparsity` holds one
// entry per weighted layer; an empty span costs the dense network.
NetworkCost network_cost(const Network& net, const Schedule& schedule, std::span<const LayerSparsity> sparsity,
                         const EnergyTable& energy, const ArrayConfig& array);

// Idealized lower bound: the dense cost of every layer and phase scaled by
// the density of that phase's sparse operand (weights in forward and
// backward, activations in weight update), i.e. perfectly even sparsity,
// free compression and free selection.
NetworkCost ideal_cost(const Network& net, std::span<const double> weight_density,
                       std::span<const double> activation_density, const EnergyTable& energy,
                       const ArrayConfig& array, Scheme scheme = Scheme::KN);
// Every phase scaled by 1 / sparsity.
NetworkCost ideal_cost(const Network& net, double sparsity, const EnergyTable& energy, const ArrayConfig& array,
                       Scheme scheme = Scheme::KN);

// Words of a compressed operand: values plus one mask bit per position and
// one 32-bit pointer per 64 positions.
double compressed_words(double nnz, double positions);

// Synthetic weight masks in the layout refnet produces.
// Evenly spaced non-zeros: global position i is kept when
// floor((i + 1) * density) > floor(i * density).
CsbTensor uniform_weight_mask(const LayerShape& layer, double density);
// Per-filter density drawn log-normally around `density` with spread
// `sigma`, then independent Bernoulli draws per weight.
CsbTensor random_weight_mask(const LayerShape& layer, double density, double sigma, std::uint64_t seed);

// CSV with one row per (layer, phase): layer,phase,mapping,balanced,cycles,
// macs,dense_macs,e_mac,e_rf,e_glb,e_dram,e_total,waves,flows,unicasts.
void write_cost_csv(std::ostream& out, const NetworkCost& cost);

}  // namespace sta
