#pragma once

#include <cstdint>
#include <ostream>
#include <span>
#include <utility>
#include <vector>

namespace sta {

// The work of one group of PEs that share a slice [begin, end) of the
// balanced loop dimension. Each lane is one PE of the group and holds its
// MAC count per unit of the slice, so lanes[l][u] is the work PE l does for
// dimension index begin + u. A single-PE tile has one lane.
struct WorkTile {
  std::int64_t index = 0;  // the PE group the work originally belongs to
  int half = -1;           // -1: whole tile, 0/1: lower/upper half
  std::int64_t begin = 0;
  std::int64_t end = 0;
  std::vector<std::vector<double>> lanes;
  double dense_per_unit = 0.0;  // dense MACs of one lane for one unit

  std::int64_t extent() const { return end - begin; }
  std::size_t lane_count() const { return lanes.size(); }
  // Total non-zero MACs over all lanes.
  double nnz() const;
  // Work of one lane.
  double lane_load(std::size_t lane) const;
  // Work of the most loaded lane: the group's latency.
  double max_load() const;
  double dense() const { return dense_per_unit * static_cast<double>(extent() * std::int64_t(lane_count())); }

  static WorkTile single(std::int64_t index, std::span<const double> unit_loads, std::int64_t begin = 0,
                         double dense_per_unit = 0.0);
};

// Two half tiles executed back to back by one PE group.
struct PairedTile {
  WorkTile first;
  WorkTile second;
  double nnz() const { return first.nnz() + second.nnz(); }
  double lane_load(std::size_t lane) const { return first.lane_load(lane) + second.lane_load(lane); }
  double max_load() const;
};

// Cuts a tile at the midpoint begin + extent / 2 (rounded down). A tile
// with extent below 2 comes back whole, followed by an empty half.
std::pair<WorkTile, WorkTile> split_half(const WorkTile& tile);

// Sorts halves by nnz (ties: original tile index, then half) and pairs the
// i-th with the (n-1-i)-th. Throws std::invalid_argument for an odd count
// or for halves with differing lane counts.
std::vector<PairedTile> pair_halves(std::vector<WorkTile> halves);

// One synchronous full-array working set.
struct Wave {
  std::vector<WorkTile> tiles;
};

// Result of balancing one wave. slots[i] is what PE group i executes.
struct BalancedWave {
  std::vector<PairedTile> slots;
  double max_load = 0.0;
  double mean_load = 0.0;
  // True when the sorted pairing was kept; false when it was no better than
  // the original assignment (possible only with several lanes).
  bool rebalanced = false;
};

BalancedWave balance_wave(const Wave& wave);

// Per-PE work of a wave, lane by lane, before or after balancing.
std::vector<double> pe_loads(const Wave& wave, bool balanced);

// (max PE work / mean PE work) - 1; zero for a wave without work. Throws
// std::invalid_argument for an empty wave.
double wave_overhead(const Wave& wave, bool balanced);

struct Histogram {
  double bin_width = 0.05;
  std::vector<std::uint64_t> counts;  // bin i covers [i * width, (i + 1) * width)
  std::uint64_t total = 0;
  double max_value = 0.0;

  double fraction_below(double value) const;
  double quantile(double q) const;
  // CSV with columns bin_lower,count,fraction.
  void write_csv(std::ostream& out) const;
};

Histogram make_histogram(std::span<const double> values, double bin_width = 0.05);
Histogram imbalance_histogram(std::span<const Wave> waves, bool balanced, double bin_width = 0.05);

}  // namespace sta
