#include "sta/balance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace sta {

double WorkTile::nnz() const {
  double total = 0.0;
  for (const auto& lane : lanes) total = std::accumulate(lane.begin(), lane.end(), total);
  return total;
}

double WorkTile::lane_load(std::size_t lane) const {
  if (lane >= lanes.size()) return 0.0;
  return std::accumulate(lanes[lane].begin(), lanes[lane].end(), 0.0);
}

double WorkTile::max_load() const {
  double best = 0.0;
  for (std::size_t l = 0; l < lanes.size(); ++l) best = std::max(best, lane_load(l));
  return best;
}

WorkTile WorkTile::single(std::int64_t index, std::span<const double> unit_loads, std::int64_t begin,
                          double dense_per_unit) {
  WorkTile t;
  t.index = index;
  t.begin = begin;
  t.end = begin + static_cast<std::int64_t>(unit_loads.size());
  t.lanes.emplace_back(unit_loads.begin(), unit_loads.end());
  t.dense_per_unit = dense_per_unit;
  return t;
}

double PairedTile::max_load() const {
  const std::size_t lanes = std::max(first.lane_count(), second.lane_count());
  double best = 0.0;
  for (std::size_t l = 0; l < lanes; ++l) best = std::max(best, lane_load(l));
  return best;
}

std::pair<WorkTile, WorkTile> split_half(const WorkTile& tile) {
  WorkTile lo = tile;
  WorkTile hi = tile;
  lo.half = 0;
  hi.half = 1;
  if (tile.extent() < 2) {
    hi.begin = hi.end = tile.end;
    for (auto& lane : hi.lanes) lane.clear();
    return {lo, hi};
  }
  const std::int64_t cut = tile.extent() / 2;
  lo.end = tile.begin + cut;
  hi.begin = lo.end;
  for (std::size_t l = 0; l < tile.lanes.size(); ++l) {
    const auto& src = tile.lanes[l];
    lo.lanes[l].assign(src.begin(), src.begin() + cut);
    hi.lanes[l].assign(src.begin() + cut, src.end());
  }
  return {lo, hi};
}

std::vector<PairedTile> pair_halves(std::vector<WorkTile> halves) {
  if (halves.size() % 2 != 0) throw std::invalid_argument("pairing needs an even number of half tiles");
  for (const auto& h : halves)
    if (h.lane_count() != halves.front().lane_count())
      throw std::invalid_argument("half tiles must have the same number of lanes");
  std::vector<double> load(halves.size());
  for (std::size_t i = 0; i < halves.size(); ++i) load[i] = halves[i].nnz();
  std::vector<std::size_t> order(halves.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (load[a] != load[b]) return load[a] < load[b];
    if (halves[a].index != halves[b].index) return halves[a].index < halves[b].index;
    return halves[a].half < halves[b].half;
  });
  std::vector<PairedTile> out;
  out.reserve(halves.size() / 2);
  for (std::size_t i = 0; i < halves.size() / 2; ++i)
    out.push_back({std::move(halves[order[halves.size() - 1 - i]]), std::move(halves[order[i]])});
  return out;
}

namespace {

double pe_mean(const std::vector<double>& loads) {
  return loads.empty() ? 0.0 : std::accumulate(loads.begin(), loads.end(), 0.0) / static_cast<double>(loads.size());
}

std::vector<double> unbalanced_loads(const Wave& wave) {
  std::vector<double> out;
  for (const auto& t : wave.tiles)
    for (std::size_t l = 0; l < t.lane_count(); ++l) out.push_back(t.lane_load(l));
  return out;
}

}  // namespace

BalancedWave balance_wave(const Wave& wave) {
  BalancedWave result;
  std::vector<WorkTile> halves;
  halves.reserve(wave.tiles.size() * 2);
  for (const auto& t : wave.tiles) {
    auto [lo, hi] = split_half(t);
    halves.push_back(std::move(lo));
    halves.push_back(std::move(hi));
  }
  auto paired = pair_halves(std::move(halves));
  double paired_max = 0.0;
  for (const auto& p : paired) paired_max = std::max(paired_max, p.max_load());
  double original_max = 0.0;
  for (const auto& t : wave.tiles) original_max = std::max(original_max, t.max_load());
  const auto loads = unbalanced_loads(wave);
  result.mean_load = pe_mean(loads);
  if (paired_max < original_max) {
    result.slots = std::move(paired);
    result.max_load = paired_max;
    result.rebalanced = true;
    return result;
  }
  for (const auto& t : wave.tiles) {
    auto [lo, hi] = split_half(t);
    result.slots.push_back({std::move(lo), std::move(hi)});
  }
  result.max_load = original_max;
  return result;
}

std::vector<double> pe_loads(const Wave& wave, bool balanced) {
  if (!balanced) return unbalanced_loads(wave);
  std::vector<double> out;
  for (const auto& slot : balance_wave(wave).slots) {
    const std::size_t lanes = std::max(slot.first.lane_count(), slot.second.lane_count());
    for (std::size_t l = 0; l < lanes; ++l) out.push_back(slot.lane_load(l));
  }
  return out;
}

double wave_overhead(const Wave& wave, bool balanced) {
  if (wave.tiles.empty()) throw std::invalid_argument("wave has no tiles");
  const auto loads = pe_loads(wave, balanced);
  const double mean = pe_mean(loads);
  if (mean <= 0.0) return 0.0;
  return *std::max_element(loads.begin(), loads.end()) / mean - 1.0;
}

double Histogram::fraction_below(double value) const {
  if (total == 0) return 0.0;
  std::uint64_t n = 0;
  for (std::size_t i = 0; i < counts.size(); ++i)
    if ((static_cast<double>(i) + 1.0) * bin_width <= value) n += counts[i];
  return static_cast<double>(n) / static_cast<double>(total);
}

double Histogram::quantile(double q) const {
  if (total == 0) return 0.0;
  const double target = q * static_cast<double>(total);
  std::uint64_t seen = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    seen += counts[i];
    if (static_cast<double>(seen) >= target) return static_cast<double>(i) * bin_width;
  }
  return static_cast<double>(counts.size() - 1) * bin_width;
}

void Histogram::write_csv(std::ostream& out) const {
  out << "bin_lower,count,fraction\n";
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double fraction = total == 0 ? 0.0 : static_cast<double>(counts[i]) / static_cast<double>(total);
    out << static_cast<double>(i) * bin_width << ',' << counts[i] << ',' << fraction << '\n';
  }
}

Histogram make_histogram(std::span<const double> values, double bin_width) {
  if (!(bin_width > 0.0)) throw std::invalid_argument("histogram bin width must be positive");
  Histogram h;
  h.bin_width = bin_width;
  for (double v : values) {
    const auto bin = static_cast<std::size_t>(std::max(0.0, std::floor(v / bin_width + 1e-9)));
    if (bin >= h.counts.size()) h.counts.resize(bin + 1, 0);
    ++h.counts[bin];
    ++h.total;
    h.max_value = std::max(h.max_value, v);
  }
  if (h.counts.empty()) h.counts.push_back(0);
  return h;
}

Histogram imbalance_histogram(std::span<const Wave> waves, bool balanced, double bin_width) {
  std::vector<double> values;
  values.reserve(waves.size());
  for (const auto& w : waves) values.push_back(wave_overhead(w, balanced));
  return make_histogram(values, bin_width);
}

}  // namespace sta
