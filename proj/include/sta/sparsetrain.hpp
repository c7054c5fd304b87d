#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sta/quantile.hpp"
#include "sta/workload.hpp"

namespace sta {

// One step of Marsaglia's 32-bit xorshift with the (13, 17, 5) triple.
constexpr std::uint32_t xorshift32(std::uint32_t x) {
  x ^= x << 13;
  x ^= x >> 17;
  x ^= x << 5;
  return x;
}

// splitmix64 finalizer; used to derive independent generator seeds.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

enum class InitRule { Kaiming, Xavier };

// Standard deviation of the initial weights of `layer`: Kaiming for conv
// layers (which feed ReLUs), Xavier for fc layers.
double init_scale(const LayerShape& layer);

inline constexpr std::int64_t kNeverCut = std::numeric_limits<std::int64_t>::max();

// Stateless initial-weight generator.
//
// value(i, 0) = scale * (u0 + u1 + u2), where u_s in [-1, 1) is the output of
// an xorshift32 generator seeded from (seed, i, s); the sum of three
// uniforms has unit variance, so `scale` is the standard deviation.
// value(i, t + 1) = lambda * value(i, t) in float arithmetic, with results
// below the smallest normal float flushed to zero, and 0 from cutoff on.
class WeightRecompute {
 public:
  WeightRecompute(std::uint64_t seed, std::int64_t size, float scale, float lambda = 0.9f,
                  std::int64_t cutoff = 1000);

  float initial(std::int64_t index) const;
  float value(std::int64_t index, std::int64_t t) const;
  // value(i, t) for every i into out (size() entries).
  void fill(std::int64_t t, std::span<float> out) const;
  // Turns values(t) held in `values` into values(t + 1) in place; the
  // streaming form of value() used by the trainer.
  void advance(std::int64_t t, std::span<float> values) const;

  std::uint64_t seed() const { return seed_; }
  std::int64_t size() const { return size_; }
  float scale() const { return scale_; }
  float lambda() const { return lambda_; }
  std::int64_t cutoff() const { return cutoff_; }

 private:
  std::uint64_t seed_;
  std::int64_t size_;
  float scale_;
  float lambda_;
  std::int64_t cutoff_;
};

// Indices of the k largest magnitudes, ascending. Ties keep the lower
// index. Exact reference for threshold-based selection.
std::vector<std::uint32_t> select_sort_oracle(std::span<const float> magnitudes, std::size_t k);

// Order in which produced gradients reach the quantile estimator.
enum class StreamOrder {
  Sequential,   // global weight index order, layer after layer
  Interleaved,  // fixed coprime-stride permutation mixing all layers
};

enum class EstimatorFeed { Scalar, Batched4 };

struct SparseTrainConfig {
  // Fraction of weights allowed in the tracked set (1 / sparsity factor).
  // 1.0 switches to plain dense SGD.
  double target_density = 0.2;
  float eta = 0.05f;
  float lambda = 0.9f;
  std::int64_t cutoff = 1000;
  std::uint64_t seed = 1;
  StreamOrder order = StreamOrder::Interleaved;
  EstimatorFeed feed = EstimatorFeed::Scalar;
  // Compare every step against the sort-based selection.
  bool oracle = false;

  static SparseTrainConfig dense(float eta, std::uint64_t seed);
  // Disables initial-weight decay (lambda = 1, never cut).
  SparseTrainConfig without_decay() const;

  bool is_dense() const { return target_density >= 1.0; }
  std::string canonical() const;
};

struct StepReport {
  std::int64_t iteration = 0;  // iteration the gradients belonged to
  std::size_t inserted = 0;
  std::size_t evicted = 0;
  std::size_t tracked = 0;
  double threshold = 0.0;
  // |tracked after step ∩ sort-oracle keep set| / k, when oracle mode is on.
  std::optional<double> overlap;
};

// Min-ordered tracked set: accumulated gradient per tracked weight, with the
// smallest magnitude (ties: lowest index) available for eviction.
class TrackedSet {
 public:
  struct Entry {
    std::uint32_t index;
    float acc;
  };

  std::size_t size() const { return heap_.size(); }
  bool empty() const { return heap_.empty(); }
  bool contains(std::uint32_t index) const { return pos_.count(index) != 0; }
  std::optional<float> find(std::uint32_t index) const;
  const Entry& min() const { return heap_.front(); }

  void insert(std::uint32_t index, float acc);
  void assign(std::uint32_t index, float acc);
  Entry pop_min();

  std::span<const Entry> entries() const { return heap_; }
  // Entries sorted by weight index.
  std::vector<Entry> sorted() const;

 private:
  std::vector<Entry> heap_;
  std::unordered_map<std::uint32_t, std::uint32_t> pos_;

  static bool before(const Entry& a, const Entry& b);
  void place(std::size_t slot, Entry e);
  void sift_up(std::size_t slot);
  void sift_down(std::size_t slot);
};

struct LayerInit {
  std::int64_t size = 0;
  float scale = 0.0f;
};

// Per-layer initialization for every weighted layer of `net`.
std::vector<LayerInit> layer_inits(const Network& net);

// Dropback training state with initial-weight decay and quantile-based
// selection. Stores only the tracked set; the scaffold of initial weights is
// recomputed on demand.
class TrainState {
 public:
  TrainState(SparseTrainConfig config, std::vector<LayerInit> layers);

  // Consumes the gradient of every weight for the current iteration and
  // advances the iteration counter. Throws ShapeError on length mismatch.
  StepReport step(std::span<const float> gradients);

  float effective_weight(std::int64_t index) const;
  // All effective weights of the current iteration.
  void materialize(std::span<float> weights) const;
  // Effective weights of one layer (layer = position in the LayerInit list).
  void materialize_layer(std::size_t layer, std::span<float> weights) const;
  // Adds every tracked accumulated gradient onto `weights` (all weights).
  void add_tracked(std::span<float> weights) const;

  std::int64_t iteration() const { return t_; }
  std::int64_t total_weights() const { return total_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t tracked_count() const;
  double density() const;
  bool is_tracked(std::int64_t index) const;
  std::optional<float> accumulated(std::int64_t index) const;
  std::vector<TrackedSet::Entry> tracked_entries() const;
  const QuantileEstimator& estimator() const { return estimator_; }
  const SparseTrainConfig& config() const { return config_; }
  const std::vector<WeightRecompute>& recompute() const { return wr_; }
  std::int64_t layer_offset(std::size_t layer) const { return offsets_.at(layer); }

  std::uint64_t config_hash() const;

  void save_checkpoint(std::ostream& out) const;
  static TrainState load_checkpoint(std::istream& in);
  void save_checkpoint(const std::filesystem::path& path) const;
  static TrainState load_checkpoint(const std::filesystem::path& path);

 private:
  SparseTrainConfig config_;
  std::vector<LayerInit> layers_;
  std::vector<WeightRecompute> wr_;
  std::vector<std::int64_t> offsets_;
  std::int64_t total_ = 0;
  std::size_t capacity_ = 0;
  std::int64_t t_ = 0;
  QuantileEstimator estimator_;
  TrackedSet tracked_;
  std::vector<float> dense_acc_;  // dense mode only: every weight is tracked
  std::uint64_t stream_stride_ = 1;

  std::size_t layer_of(std::int64_t index) const;
  float scaffold(std::int64_t index) const;
  std::uint64_t stream_index(std::uint64_t j) const;
};

// 64-bit FNV-1a over a byte string.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace sta
