#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "sta/csb.hpp"
#include "sta/dataset.hpp"
#include "sta/sparsetrain.hpp"
#include "sta/tensor.hpp"
#include "sta/workload.hpp"

namespace sta {

// Layer passes. Activations are NCHW with the batch taken from the tensor;
// weights are [K][C][R][S]. An fc layer accepts any [N][...] input whose
// per-sample volume equals C and treats it as [N][C][1][1].

// y[n][k][p][q] = sum over c, r, s of w[k][c][r][s] * x[n][c][p*stride+r-pad][q*stride+s-pad]
Tensor conv_forward(const LayerShape& layer, const Tensor& x, std::span<const float> w);
// Input gradient: the transposed convolution of dy, equivalently a full
// convolution with every filter rotated by 180 degrees. Returns a tensor
// shaped like the layer input, [N][C][H][W] (fc: [N][C][1][1]).
Tensor conv_backward(const LayerShape& layer, const Tensor& dy, std::span<const float> w);
// Weight gradient: correlation of x with dy, summed over the batch.
// Returns [K][C][R][S].
Tensor conv_weight_grad(const LayerShape& layer, const Tensor& x, const Tensor& dy);

// Max pooling with window == stride. argmax receives the flat input offset
// of each output.
Tensor maxpool_forward(const LayerShape& layer, const Tensor& x, std::vector<std::int32_t>* argmax);
Tensor maxpool_backward(const Tensor& dy, std::span<const std::int32_t> argmax, const Shape& input_shape);

// Normalizes every channel of [N][K][...] to zero mean and unit variance
// over the batch and spatial positions. inv_std receives 1/sqrt(var + eps)
// per channel.
inline constexpr float kNormEpsilon = 1e-5f;
void batchnorm_forward(Tensor& y, std::vector<float>* inv_std);
// Back-propagates through batchnorm_forward given its output yhat:
// dx = inv_std * (dy - mean(dy) - yhat * mean(dy * yhat)), per channel.
void batchnorm_backward(const Tensor& yhat, std::span<const float> inv_std, Tensor& dy);

void relu_inplace(Tensor& x);
// Zeroes dy wherever the ReLU output y is not positive.
void relu_backward(const Tensor& y, Tensor& dy);

// Mean softmax cross-entropy over the batch. logits: [N][classes]. Writes
// d(loss)/d(logits) when dlogits is given.
double softmax_cross_entropy(const Tensor& logits, std::span<const std::int32_t> labels, Tensor* dlogits);

// A network evaluated with one flat weight vector laid out layer after
// layer (Network::weight_offsets).
class ReferenceNet {
 public:
  struct Trace {
    std::vector<Tensor> inputs;  // input of every layer
    std::vector<Tensor> outputs; // output of every layer, after ReLU
    std::vector<std::vector<std::int32_t>> argmax;
    std::vector<Tensor> normalized;            // normalized pre-ReLU output
    std::vector<std::vector<float>> inv_std;   // of normalized layers
  };

  explicit ReferenceNet(Network net);

  const Network& network() const { return net_; }
  std::int64_t total_weights() const { return total_; }
  std::int64_t classes() const { return net_.layers.back().K; }

  Tensor forward(const Tensor& x, std::span<const float> weights, Trace* trace = nullptr) const;
  // Loss of the batch; fills grad (total_weights() entries) with dL/dW.
  double loss_and_grad(const Tensor& x, std::span<const std::int32_t> labels, std::span<const float> weights,
                       std::span<float> grad, Trace* trace = nullptr) const;
  std::vector<std::int32_t> predict(const Tensor& x, std::span<const float> weights) const;
  // Fraction of correct predictions, evaluated in chunks of `batch`.
  double accuracy(const Dataset& data, std::span<const float> weights, std::int64_t batch) const;

 private:
  Network net_;
  std::vector<std::int64_t> offsets_;
  std::int64_t total_ = 0;
};

struct TrainingConfig {
  Network network;
  SparseTrainConfig sparse;
  std::int64_t epochs = 5;
  std::int64_t train_samples = 8000;
  std::int64_t val_samples = 2000;
  std::uint64_t data_seed = 2024;
  // Mask snapshots every this many iterations (0: final masks only).
  std::int64_t snapshot_every = 0;
  // Optional externally supplied data; the synthetic set is used otherwise.
  std::optional<Dataset> train_data;
  std::optional<Dataset> val_data;
};

struct EpochRecord {
  std::int64_t epoch = 0;
  std::int64_t iteration = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  double density = 0.0;
};

struct IterationRecord {
  std::int64_t iteration = 0;
  double loss = 0.0;
  double density = 0.0;
  double threshold = 0.0;
  std::size_t inserted = 0;
  std::size_t evicted = 0;
  std::optional<double> overlap;
};

struct MaskSnapshot {
  std::int64_t iteration = 0;
  // One tensor per weighted layer, holding the tracked accumulated
  // gradients: [K][C][R][S] blocked by kernel, fc [K][C] with 1x1 blocks.
  std::vector<CsbTensor> layers;
  std::size_t nnz() const;
};

struct TrainingResult {
  std::vector<EpochRecord> epochs;
  std::vector<IterationRecord> iterations;
  std::vector<MaskSnapshot> snapshots;  // the last one holds the final masks
  // Input activations of every weighted layer on the first validation
  // batch after training, [N][C][H][W] (fc: [N][C][1][1]).
  std::vector<CsbTensor> activations;
  std::vector<double> activation_density;
  std::optional<TrainState> state;

  double final_val_accuracy() const { return epochs.empty() ? 0.0 : epochs.back().val_accuracy; }
  const MaskSnapshot& final_masks() const { return snapshots.back(); }
};

// Encodes the tracked set of `state` as per-layer mask tensors.
MaskSnapshot snapshot_masks(const Network& net, const TrainState& state);

// Activation block shape used for activation snapshots.
BlockShape activation_block(std::int64_t height, std::int64_t width);

// Trains `config.network` with the sparse update rule in the loop. Throws
// DivergenceError when the loss stops being finite. `progress` is called
// after every epoch.
TrainingResult run_training(const TrainingConfig& config,
                            const std::function<void(const EpochRecord&)>& progress = {});

}  // namespace sta
