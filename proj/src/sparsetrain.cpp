#include "sta/sparsetrain.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "sta/error.hpp"

namespace sta {

namespace {

// One decay step. Results below the smallest normal float flush to zero, as
// on a multiplier without subnormal support.
inline float decay(float lambda, float v) {
  const float r = lambda * v;
  return std::fabs(r) < std::numeric_limits<float>::min() ? 0.0f : r;
}

}  // namespace

double init_scale(const LayerShape& layer) {
  const double fan_in = static_cast<double>(layer.C * layer.R * layer.S);
  const double fan_out = static_cast<double>(layer.K * layer.R * layer.S);
  if (layer.kind == LayerKind::Fc) return std::sqrt(2.0 / (fan_in + fan_out));
  return std::sqrt(2.0 / fan_in);
}

// ---------------------------------------------------------------------------
// WeightRecompute

WeightRecompute::WeightRecompute(std::uint64_t seed, std::int64_t size, float scale, float lambda,
                                 std::int64_t cutoff)
    : seed_(seed), size_(size), scale_(scale), lambda_(lambda), cutoff_(cutoff) {
  if (size < 0) throw ConfigError("weight count must be non-negative");
  if (!(lambda > 0.0f && lambda <= 1.0f)) throw ConfigError("decay factor must lie in (0, 1]");
  if (cutoff < 0) throw ConfigError("decay cutoff must be non-negative");
}

float WeightRecompute::initial(std::int64_t index) const {
  const auto i = static_cast<std::uint64_t>(index);
  float sum = 0.0f;
  for (std::uint64_t stream = 0; stream < 3; ++stream) {
    auto s = static_cast<std::uint32_t>(mix64(seed_ ^ mix64(i * 3 + stream)));
    if (s == 0) s = 0x6D2B79F5u;
    const auto u = static_cast<std::int32_t>(xorshift32(s));
    sum += static_cast<float>(u) * 0x1p-31f;
  }
  return scale_ * sum;
}

float WeightRecompute::value(std::int64_t index, std::int64_t t) const {
  if (t >= cutoff_) return 0.0f;
  float v = initial(index);
  if (lambda_ == 1.0f) return v;
  for (std::int64_t s = 0; s < t && v != 0.0f; ++s) v = decay(lambda_, v);
  return v;
}

void WeightRecompute::fill(std::int64_t t, std::span<float> out) const {
  if (static_cast<std::int64_t>(out.size()) != size_) throw ShapeError("recompute buffer has the wrong length");
  if (t >= cutoff_) {
    std::fill(out.begin(), out.end(), 0.0f);
    return;
  }
  for (std::int64_t i = 0; i < size_; ++i) out[static_cast<std::size_t>(i)] = initial(i);
  if (lambda_ == 1.0f) return;
  const float lambda = lambda_;
  for (std::int64_t s = 0; s < t; ++s)
    for (float& v : out) v = decay(lambda, v);
}

void WeightRecompute::advance(std::int64_t t, std::span<float> values) const {
  if (static_cast<std::int64_t>(values.size()) != size_) throw ShapeError("recompute buffer has the wrong length");
  if (t + 1 >= cutoff_) {
    std::fill(values.begin(), values.end(), 0.0f);
    return;
  }
  if (lambda_ == 1.0f) return;
  const float lambda = lambda_;
  for (float& v : values) v = decay(lambda, v);
}

// ---------------------------------------------------------------------------
// Sort oracle

std::vector<std::uint32_t> select_sort_oracle(std::span<const float> magnitudes, std::size_t k) {
  k = std::min(k, magnitudes.size());
  std::vector<std::uint32_t> idx(magnitudes.size());
  std::iota(idx.begin(), idx.end(), 0u);
  auto better = [&](std::uint32_t a, std::uint32_t b) {
    return magnitudes[a] > magnitudes[b] || (magnitudes[a] == magnitudes[b] && a < b);
  };
  if (k < idx.size()) std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), better);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

// ---------------------------------------------------------------------------
// TrackedSet

bool TrackedSet::before(const Entry& a, const Entry& b) {
  const float ma = std::fabs(a.acc);
  const float mb = std::fabs(b.acc);
  return ma < mb || (ma == mb && a.index < b.index);
}

void TrackedSet::place(std::size_t slot, Entry e) {
  heap_[slot] = e;
  pos_[e.index] = static_cast<std::uint32_t>(slot);
}

void TrackedSet::sift_up(std::size_t slot) {
  Entry e = heap_[slot];
  while (slot > 0) {
    const std::size_t parent = (slot - 1) / 2;
    if (!before(e, heap_[parent])) break;
    place(slot, heap_[parent]);
    slot = parent;
  }
  place(slot, e);
}

void TrackedSet::sift_down(std::size_t slot) {
  Entry e = heap_[slot];
  const std::size_t n = heap_.size();
  for (;;) {
    std::size_t child = 2 * slot + 1;
    if (child >= n) break;
    if (child + 1 < n && before(heap_[child + 1], heap_[child])) ++child;
    if (!before(heap_[child], e)) break;
    place(slot, heap_[child]);
    slot = child;
  }
  place(slot, e);
}

std::optional<float> TrackedSet::find(std::uint32_t index) const {
  auto it = pos_.find(index);
  if (it == pos_.end()) return std::nullopt;
  return heap_[it->second].acc;
}

void TrackedSet::insert(std::uint32_t index, float acc) {
  if (contains(index)) throw std::logic_error("weight already tracked");
  heap_.push_back({index, acc});
  pos_[index] = static_cast<std::uint32_t>(heap_.size() - 1);
  sift_up(heap_.size() - 1);
}

void TrackedSet::assign(std::uint32_t index, float acc) {
  const std::size_t slot = pos_.at(index);
  const bool grew = std::fabs(acc) > std::fabs(heap_[slot].acc);
  heap_[slot].acc = acc;
  if (grew)
    sift_down(slot);
  else
    sift_up(slot);
}

TrackedSet::Entry TrackedSet::pop_min() {
  Entry top = heap_.front();
  pos_.erase(top.index);
  Entry last = heap_.back();
  heap_.pop_back();
  if (!heap_.empty()) {
    place(0, last);
    sift_down(0);
  }
  return top;
}

std::vector<TrackedSet::Entry> TrackedSet::sorted() const {
  std::vector<Entry> out = heap_;
  std::sort(out.begin(), out.end(), [](const Entry& a, const Entry& b) { return a.index < b.index; });
  return out;
}

// ---------------------------------------------------------------------------
// TrainState

SparseTrainConfig SparseTrainConfig::dense(float eta, std::uint64_t seed) {
  SparseTrainConfig c;
  c.target_density = 1.0;
  c.eta = eta;
  c.seed = seed;
  c.lambda = 1.0f;
  c.cutoff = kNeverCut;
  return c;
}

SparseTrainConfig SparseTrainConfig::without_decay() const {
  SparseTrainConfig c = *this;
  c.lambda = 1.0f;
  c.cutoff = kNeverCut;
  return c;
}

std::string SparseTrainConfig::canonical() const {
  std::ostringstream s;
  s.precision(17);
  s << "density=" << target_density << ";eta=" << eta << ";lambda=" << lambda << ";cutoff=" << cutoff
    << ";seed=" << seed << ";order=" << static_cast<int>(order) << ";feed=" << static_cast<int>(feed);
  return s.str();
}

std::vector<LayerInit> layer_inits(const Network& net) {
  std::vector<LayerInit> out;
  for (const auto& l : net.layers)
    if (l.has_weights()) out.push_back({l.weight_count(), static_cast<float>(init_scale(l))});
  return out;
}

namespace {

QuantileEstimator make_estimator(const SparseTrainConfig& c) {
  if (c.is_dense()) return QuantileEstimator(0.5);
  if (!(c.target_density > 0.0)) throw ConfigError("target density must be positive");
  return QuantileEstimator::for_density(c.target_density);
}

}  // namespace

TrainState::TrainState(SparseTrainConfig config, std::vector<LayerInit> layers)
    : config_(config), layers_(std::move(layers)), estimator_(make_estimator(config)) {
  if (!(config_.eta > 0.0f)) throw ConfigError("learning rate must be positive");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    offsets_.push_back(total_);
    wr_.emplace_back(mix64(config_.seed + 0x1000 * (l + 1)), layers_[l].size, layers_[l].scale, config_.lambda,
                     config_.cutoff);
    total_ += layers_[l].size;
  }
  if (total_ == 0) throw ConfigError("network has no weights to train");
  if (total_ > std::numeric_limits<std::uint32_t>::max()) throw ConfigError("too many weights for 32-bit indices");
  if (config_.is_dense()) {
    capacity_ = static_cast<std::size_t>(total_);
    dense_acc_.assign(static_cast<std::size_t>(total_), 0.0f);
  } else {
    capacity_ = static_cast<std::size_t>(std::ceil(config_.target_density * static_cast<double>(total_)));
    capacity_ = std::max<std::size_t>(capacity_, 1);
  }
  // Stride coprime with the weight count, close to the golden ratio of it.
  auto n = static_cast<std::uint64_t>(total_);
  std::uint64_t stride = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(0.6180339887 * static_cast<double>(n)));
  while (std::gcd(stride, n) != 1) ++stride;
  stream_stride_ = stride % n == 0 ? 1 : stride;
}

std::uint64_t TrainState::stream_index(std::uint64_t j) const {
  if (config_.order == StreamOrder::Sequential) return j;
  return (j * stream_stride_) % static_cast<std::uint64_t>(total_);
}

std::size_t TrainState::layer_of(std::int64_t index) const {
  auto it = std::upper_bound(offsets_.begin(), offsets_.end(), index);
  return static_cast<std::size_t>(std::distance(offsets_.begin(), it) - 1);
}

float TrainState::scaffold(std::int64_t index) const {
  const std::size_t l = layer_of(index);
  return wr_[l].value(index - offsets_[l], t_);
}

std::size_t TrainState::tracked_count() const {
  return config_.is_dense() ? static_cast<std::size_t>(total_) : tracked_.size();
}

double TrainState::density() const {
  return static_cast<double>(tracked_count()) / static_cast<double>(total_);
}

bool TrainState::is_tracked(std::int64_t index) const {
  if (config_.is_dense()) return true;
  return tracked_.contains(static_cast<std::uint32_t>(index));
}

std::optional<float> TrainState::accumulated(std::int64_t index) const {
  if (config_.is_dense()) return dense_acc_.at(static_cast<std::size_t>(index));
  return tracked_.find(static_cast<std::uint32_t>(index));
}

std::vector<TrackedSet::Entry> TrainState::tracked_entries() const {
  if (!config_.is_dense()) return tracked_.sorted();
  std::vector<TrackedSet::Entry> out(dense_acc_.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = {static_cast<std::uint32_t>(i), dense_acc_[i]};
  return out;
}

float TrainState::effective_weight(std::int64_t index) const {
  if (index < 0 || index >= total_) throw ShapeError("weight index out of range");
  return scaffold(index) + accumulated(index).value_or(0.0f);
}

void TrainState::materialize_layer(std::size_t layer, std::span<float> weights) const {
  wr_.at(layer).fill(t_, weights);
  const auto begin = offsets_[layer];
  const auto end = begin + layers_[layer].size;
  if (config_.is_dense()) {
    for (std::int64_t i = begin; i < end; ++i) weights[static_cast<std::size_t>(i - begin)] += dense_acc_[i];
    return;
  }
  for (const auto& e : tracked_.sorted()) {
    if (e.index < begin || e.index >= end) continue;
    weights[static_cast<std::size_t>(e.index - begin)] += e.acc;
  }
}

void TrainState::materialize(std::span<float> weights) const {
  if (static_cast<std::int64_t>(weights.size()) != total_) throw ShapeError("weight buffer has the wrong length");
  for (std::size_t l = 0; l < layers_.size(); ++l)
    wr_[l].fill(t_, weights.subspan(static_cast<std::size_t>(offsets_[l]), static_cast<std::size_t>(layers_[l].size)));
  if (config_.is_dense()) {
    for (std::size_t i = 0; i < weights.size(); ++i) weights[i] += dense_acc_[i];
    return;
  }
  for (const auto& e : tracked_.sorted()) weights[e.index] += e.acc;
}

void TrainState::add_tracked(std::span<float> weights) const {
  if (static_cast<std::int64_t>(weights.size()) != total_) throw ShapeError("weight buffer has the wrong length");
  if (config_.is_dense()) {
    for (std::size_t i = 0; i < weights.size(); ++i) weights[i] += dense_acc_[i];
    return;
  }
  for (const auto& e : tracked_.entries()) weights[e.index] += e.acc;
}

StepReport TrainState::step(std::span<const float> gradients) {
  if (static_cast<std::int64_t>(gradients.size()) != total_)
    throw ShapeError("gradient vector has " + std::to_string(gradients.size()) + " entries, expected " +
                     std::to_string(total_));
  StepReport report;
  report.iteration = t_;
  const float eta = config_.eta;

  if (config_.is_dense()) {
    for (std::size_t i = 0; i < dense_acc_.size(); ++i) dense_acc_[i] += -eta * gradients[i];
    ++t_;
    report.tracked = dense_acc_.size();
    if (config_.oracle) report.overlap = 1.0;
    return report;
  }

  std::vector<float> scores;
  if (config_.oracle) {
    scores.resize(gradients.size());
    for (std::size_t i = 0; i < gradients.size(); ++i) {
      const float update = -eta * gradients[i];
      const auto acc = tracked_.find(static_cast<std::uint32_t>(i));
      scores[i] = std::fabs(acc ? *acc + update : update);
    }
  }

  std::array<double, 4> batch{};
  std::size_t pending = 0;
  auto feed = [&](double magnitude) {
    if (config_.feed == EstimatorFeed::Scalar) {
      estimator_.update(magnitude);
      return;
    }
    batch[pending++] = magnitude;
    if (pending == 4) {
      estimator_.update4(batch);
      pending = 0;
    }
  };

  const auto n = static_cast<std::uint64_t>(total_);
  for (std::uint64_t j = 0; j < n; ++j) {
    const auto i = static_cast<std::uint32_t>(stream_index(j));
    const float update = -eta * gradients[i];
    if (auto acc = tracked_.find(i)) {
      const float next = *acc + update;
      tracked_.assign(i, next);
      feed(std::fabs(next));
      continue;
    }
    const float magnitude = std::fabs(update);
    if (magnitude > estimator_.threshold()) {
      if (tracked_.size() >= capacity_) {
        tracked_.pop_min();
        ++report.evicted;
      }
      tracked_.insert(i, update);
      ++report.inserted;
    }
    feed(magnitude);
  }
  if (pending > 0) {
    double sum = 0.0;
    for (std::size_t p = 0; p < pending; ++p) sum += batch[p];
    estimator_.update(sum / static_cast<double>(pending));
  }

  ++t_;
  report.tracked = tracked_.size();
  report.threshold = estimator_.threshold();
  if (config_.oracle) {
    const auto keep = select_sort_oracle(scores, capacity_);
    std::size_t hit = 0;
    for (auto i : keep) hit += tracked_.contains(i) ? 1 : 0;
    report.overlap = keep.empty() ? 1.0 : static_cast<double>(hit) / static_cast<double>(keep.size());
  }
  return report;
}

// ---------------------------------------------------------------------------
// Checkpoints

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t TrainState::config_hash() const {
  std::string text = config_.canonical();
  for (const auto& l : layers_) text += ";layer=" + std::to_string(l.size) + "@" + std::to_string(l.scale);
  return fnv1a64(text);
}

namespace {

constexpr std::array<char, 4> kCheckpointMagic{'S', 'T', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <class T>
void put(std::ostream& out, T v) {
  std::uint64_t u;
  if constexpr (std::is_same_v<T, double>)
    u = std::bit_cast<std::uint64_t>(v);
  else if constexpr (std::is_same_v<T, float>)
    u = std::bit_cast<std::uint32_t>(v);
  else
    u = static_cast<std::uint64_t>(v);
  std::array<char, sizeof(T)> bytes{};
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<char>((u >> (8 * i)) & 0xFFu);
  out.write(bytes.data(), bytes.size());
}

template <class T>
T get(std::istream& in) {
  std::array<unsigned char, sizeof(T)> bytes{};
  if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) throw FormatError("truncated checkpoint");
  std::uint64_t u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  if constexpr (std::is_same_v<T, double>)
    return std::bit_cast<double>(u);
  else if constexpr (std::is_same_v<T, float>)
    return std::bit_cast<float>(static_cast<std::uint32_t>(u));
  else
    return static_cast<T>(u);
}

}  // namespace

void TrainState::save_checkpoint(std::ostream& out) const {
  out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, config_hash());
  put<std::int64_t>(out, t_);
  put<double>(out, config_.target_density);
  put<float>(out, config_.eta);
  put<float>(out, config_.lambda);
  put<std::int64_t>(out, config_.cutoff);
  put<std::uint64_t>(out, config_.seed);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(config_.order));
  put<std::uint8_t>(out, static_cast<std::uint8_t>(config_.feed));
  put<std::uint8_t>(out, config_.oracle ? 1 : 0);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(layers_.size()));
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    put<std::int64_t>(out, layers_[l].size);
    put<float>(out, layers_[l].scale);
    put<std::uint64_t>(out, wr_[l].seed());
  }
  put<double>(out, estimator_.quantile());
  put<double>(out, estimator_.rate());
  put<double>(out, estimator_.threshold());
  put<std::uint64_t>(out, estimator_.updates());
  const auto entries = tracked_entries();
  put<std::uint64_t>(out, entries.size());
  for (const auto& e : entries) {
    put<std::uint32_t>(out, e.index);
    put<float>(out, e.acc);
  }
  if (!out) throw Error("failed writing checkpoint");
}

TrainState TrainState::load_checkpoint(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kCheckpointMagic) throw FormatError("not a checkpoint file");
  if (get<std::uint32_t>(in) != kCheckpointVersion) throw FormatError("unsupported checkpoint version");
  const auto hash = get<std::uint64_t>(in);
  const auto t = get<std::int64_t>(in);
  SparseTrainConfig c;
  c.target_density = get<double>(in);
  c.eta = get<float>(in);
  c.lambda = get<float>(in);
  c.cutoff = get<std::int64_t>(in);
  c.seed = get<std::uint64_t>(in);
  c.order = static_cast<StreamOrder>(get<std::uint8_t>(in));
  c.feed = static_cast<EstimatorFeed>(get<std::uint8_t>(in));
  c.oracle = get<std::uint8_t>(in) != 0;
  const auto nlayers = get<std::uint32_t>(in);
  std::vector<LayerInit> layers(nlayers);
  std::vector<std::uint64_t> seeds(nlayers);
  for (std::uint32_t l = 0; l < nlayers; ++l) {
    layers[l].size = get<std::int64_t>(in);
    layers[l].scale = get<float>(in);
    seeds[l] = get<std::uint64_t>(in);
  }
  TrainState state(c, layers);
  for (std::uint32_t l = 0; l < nlayers; ++l)
    if (state.wr_[l].seed() != seeds[l]) throw FormatError("checkpoint generator seeds do not match its config");
  if (state.config_hash() != hash) throw FormatError("checkpoint config hash mismatch");
  const auto q = get<double>(in);
  const auto rate = get<double>(in);
  const auto estimate = get<double>(in);
  const auto updates = get<std::uint64_t>(in);
  state.estimator_ = QuantileEstimator::restore(q, rate, estimate, updates);
  state.t_ = t;
  const auto count = get<std::uint64_t>(in);
  if (count > static_cast<std::uint64_t>(state.total_)) throw FormatError("checkpoint tracks too many weights");
  for (std::uint64_t e = 0; e < count; ++e) {
    const auto index = get<std::uint32_t>(in);
    const auto acc = get<float>(in);
    if (index >= state.total_) throw FormatError("checkpoint weight index out of range");
    if (c.is_dense())
      state.dense_acc_[index] = acc;
    else
      state.tracked_.insert(index, acc);
  }
  return state;
}

void TrainState::save_checkpoint(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  save_checkpoint(out);
}

TrainState TrainState::load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint '" + path.string() + "'");
  return load_checkpoint(in);
}

}  // namespace sta
