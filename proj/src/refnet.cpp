#include "sta/refnet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "sta/error.hpp"

#if defined(__SSE2__)
#include <xmmintrin.h>
#endif

namespace sta {

namespace {

struct Geometry {
  std::int64_t n, C, K, R, S, P, Q, H, W, stride, pad;
  std::int64_t crs() const { return C * R * S; }
  std::int64_t pq() const { return P * Q; }
  std::int64_t hw() const { return H * W; }
};

Geometry geometry(const LayerShape& layer, std::int64_t n) {
  if (layer.kind == LayerKind::Fc) return {n, layer.C, layer.K, 1, 1, 1, 1, 1, 1, 1, 0};
  return {n,       layer.C, layer.K,          layer.R,         layer.S, layer.P,
          layer.Q, layer.in_height(), layer.in_width(), layer.stride, layer.pad};
}

std::int64_t batch_of(const Tensor& t) {
  if (t.rank() < 2) throw ShapeError("activation tensors need a batch dimension and data");
  return t.dim(0);
}

void check_weights(const LayerShape& layer, std::span<const float> w) {
  if (static_cast<std::int64_t>(w.size()) != layer.weight_count())
    throw ShapeError("layer '" + layer.name + "' expects " + std::to_string(layer.weight_count()) + " weights, got " +
                     std::to_string(w.size()));
}

void check_input(const LayerShape& layer, const Tensor& x, const Geometry& g) {
  if (layer.kind == LayerKind::Pool) throw ShapeError("pool layers have no convolution passes");
  const auto expect = static_cast<std::size_t>(g.n * g.C * g.hw());
  if (x.size() != expect) throw ShapeError("layer '" + layer.name + "' input has the wrong volume");
  if (layer.kind == LayerKind::Conv &&
      (x.rank() != 4 || x.dim(1) != g.C || x.dim(2) != g.H || x.dim(3) != g.W))
    throw ShapeError("layer '" + layer.name + "' input must be [N][C][H][W]");
}

void check_output(const LayerShape& layer, const Tensor& dy, const Geometry& g) {
  if (dy.size() != static_cast<std::size_t>(g.n * g.K * g.pq()))
    throw ShapeError("layer '" + layer.name + "' output gradient has the wrong volume");
}

// col[crs][pq] for sample n; padding positions are zero.
void im2col(const Geometry& g, const float* x, std::vector<float>& col) {
  col.assign(static_cast<std::size_t>(g.crs() * g.pq()), 0.0f);
  for (std::int64_t c = 0; c < g.C; ++c)
    for (std::int64_t r = 0; r < g.R; ++r)
      for (std::int64_t s = 0; s < g.S; ++s) {
        float* row = col.data() + ((c * g.R + r) * g.S + s) * g.pq();
        for (std::int64_t p = 0; p < g.P; ++p) {
          const std::int64_t h = p * g.stride + r - g.pad;
          if (h < 0 || h >= g.H) continue;
          for (std::int64_t q = 0; q < g.Q; ++q) {
            const std::int64_t w = q * g.stride + s - g.pad;
            if (w >= 0 && w < g.W) row[p * g.Q + q] = x[(c * g.H + h) * g.W + w];
          }
        }
      }
}

void col2im(const Geometry& g, const std::vector<float>& col, float* dx) {
  for (std::int64_t c = 0; c < g.C; ++c)
    for (std::int64_t r = 0; r < g.R; ++r)
      for (std::int64_t s = 0; s < g.S; ++s) {
        const float* row = col.data() + ((c * g.R + r) * g.S + s) * g.pq();
        for (std::int64_t p = 0; p < g.P; ++p) {
          const std::int64_t h = p * g.stride + r - g.pad;
          if (h < 0 || h >= g.H) continue;
          for (std::int64_t q = 0; q < g.Q; ++q) {
            const std::int64_t w = q * g.stride + s - g.pad;
            if (w >= 0 && w < g.W) dx[(c * g.H + h) * g.W + w] += row[p * g.Q + q];
          }
        }
      }
}

}  // namespace

Tensor conv_forward(const LayerShape& layer, const Tensor& x, std::span<const float> w) {
  check_weights(layer, w);
  const Geometry g = geometry(layer, batch_of(x));
  check_input(layer, x, g);
  if (layer.kind == LayerKind::Fc) {
    Tensor y({g.n, g.K});
    for (std::int64_t n = 0; n < g.n; ++n) {
      const float* xn = x.data().data() + n * g.C;
      for (std::int64_t k = 0; k < g.K; ++k) {
        const float* wk = w.data() + k * g.C;
        float acc = 0.0f;
        for (std::int64_t c = 0; c < g.C; ++c) acc += wk[c] * xn[c];
        y[static_cast<std::size_t>(n * g.K + k)] = acc;
      }
    }
    return y;
  }
  Tensor y({g.n, g.K, g.P, g.Q});
  std::vector<float> col;
  for (std::int64_t n = 0; n < g.n; ++n) {
    im2col(g, x.data().data() + n * g.C * g.hw(), col);
    float* yn = y.data().data() + n * g.K * g.pq();
    for (std::int64_t k = 0; k < g.K; ++k) {
      float* out = yn + k * g.pq();
      for (std::int64_t i = 0; i < g.crs(); ++i) {
        const float wv = w[static_cast<std::size_t>(k * g.crs() + i)];
        if (wv == 0.0f) continue;
        const float* in = col.data() + i * g.pq();
        for (std::int64_t j = 0; j < g.pq(); ++j) out[j] += wv * in[j];
      }
    }
  }
  return y;
}

Tensor conv_backward(const LayerShape& layer, const Tensor& dy, std::span<const float> w) {
  check_weights(layer, w);
  const Geometry g = geometry(layer, batch_of(dy));
  check_output(layer, dy, g);
  Tensor dx({g.n, g.C, g.H, g.W});
  if (layer.kind == LayerKind::Fc) {
    for (std::int64_t n = 0; n < g.n; ++n) {
      float* dxn = dx.data().data() + n * g.C;
      for (std::int64_t k = 0; k < g.K; ++k) {
        const float d = dy[static_cast<std::size_t>(n * g.K + k)];
        const float* wk = w.data() + k * g.C;
        for (std::int64_t c = 0; c < g.C; ++c) dxn[c] += wk[c] * d;
      }
    }
    return dx;
  }
  std::vector<float> dcol(static_cast<std::size_t>(g.crs() * g.pq()));
  for (std::int64_t n = 0; n < g.n; ++n) {
    std::fill(dcol.begin(), dcol.end(), 0.0f);
    const float* dyn = dy.data().data() + n * g.K * g.pq();
    for (std::int64_t k = 0; k < g.K; ++k) {
      const float* in = dyn + k * g.pq();
      for (std::int64_t i = 0; i < g.crs(); ++i) {
        const float wv = w[static_cast<std::size_t>(k * g.crs() + i)];
        if (wv == 0.0f) continue;
        float* out = dcol.data() + i * g.pq();
        for (std::int64_t j = 0; j < g.pq(); ++j) out[j] += wv * in[j];
      }
    }
    col2im(g, dcol, dx.data().data() + n * g.C * g.hw());
  }
  return dx;
}

Tensor conv_weight_grad(const LayerShape& layer, const Tensor& x, const Tensor& dy) {
  const Geometry g = geometry(layer, batch_of(x));
  check_input(layer, x, g);
  check_output(layer, dy, g);
  Tensor dw = layer.kind == LayerKind::Fc ? Tensor({g.K, g.C}) : Tensor({g.K, g.C, g.R, g.S});
  if (layer.kind == LayerKind::Fc) {
    for (std::int64_t n = 0; n < g.n; ++n) {
      const float* xn = x.data().data() + n * g.C;
      for (std::int64_t k = 0; k < g.K; ++k) {
        const float d = dy[static_cast<std::size_t>(n * g.K + k)];
        if (d == 0.0f) continue;
        float* out = dw.data().data() + k * g.C;
        for (std::int64_t c = 0; c < g.C; ++c) out[c] += d * xn[c];
      }
    }
    return dw;
  }
  std::vector<float> col;
  for (std::int64_t n = 0; n < g.n; ++n) {
    im2col(g, x.data().data() + n * g.C * g.hw(), col);
    const float* dyn = dy.data().data() + n * g.K * g.pq();
    for (std::int64_t k = 0; k < g.K; ++k) {
      const float* d = dyn + k * g.pq();
      float* out = dw.data().data() + k * g.crs();
      for (std::int64_t i = 0; i < g.crs(); ++i) {
        const float* in = col.data() + i * g.pq();
        float acc = 0.0f;
        for (std::int64_t j = 0; j < g.pq(); ++j) acc += d[j] * in[j];
        out[i] += acc;
      }
    }
  }
  return dw;
}

Tensor maxpool_forward(const LayerShape& layer, const Tensor& x, std::vector<std::int32_t>* argmax) {
  if (layer.kind != LayerKind::Pool) throw ShapeError("layer '" + layer.name + "' is not a pool layer");
  const std::int64_t n = batch_of(x);
  const std::int64_t H = layer.in_height();
  const std::int64_t W = layer.in_width();
  if (x.size() != static_cast<std::size_t>(n * layer.C * H * W)) throw ShapeError("pool input has the wrong volume");
  if (x.size() > static_cast<std::size_t>(std::numeric_limits<std::int32_t>::max()))
    throw ShapeError("pool input too large");
  Tensor y({n, layer.K, layer.P, layer.Q});
  if (argmax) argmax->assign(y.size(), 0);
  std::size_t o = 0;
  for (std::int64_t b = 0; b < n * layer.C; ++b) {
    const std::int64_t base = b * H * W;
    for (std::int64_t p = 0; p < layer.P; ++p)
      for (std::int64_t q = 0; q < layer.Q; ++q, ++o) {
        std::int64_t best = base + (p * layer.stride) * W + q * layer.stride;
        for (std::int64_t r = 0; r < layer.R; ++r)
          for (std::int64_t s = 0; s < layer.S; ++s) {
            const std::int64_t at = base + (p * layer.stride + r) * W + q * layer.stride + s;
            if (x[static_cast<std::size_t>(at)] > x[static_cast<std::size_t>(best)]) best = at;
          }
        y[o] = x[static_cast<std::size_t>(best)];
        if (argmax) (*argmax)[o] = static_cast<std::int32_t>(best);
      }
  }
  return y;
}

Tensor maxpool_backward(const Tensor& dy, std::span<const std::int32_t> argmax, const Shape& input_shape) {
  if (dy.size() != argmax.size()) throw ShapeError("pool gradient and argmax lengths differ");
  Tensor dx(input_shape);
  for (std::size_t o = 0; o < argmax.size(); ++o) {
    const auto at = static_cast<std::size_t>(argmax[o]);
    if (at >= dx.size()) throw ShapeError("pool argmax out of range");
    dx[at] += dy[o];
  }
  return dx;
}

namespace {

std::pair<std::int64_t, std::int64_t> channel_layout(const Tensor& y) {
  if (y.rank() < 2) throw ShapeError("normalization needs [N][K][...] input");
  const std::int64_t n = y.dim(0);
  const std::int64_t k = y.dim(1);
  return {k, static_cast<std::int64_t>(y.size()) / (n * k)};
}

}  // namespace

void batchnorm_forward(Tensor& y, std::vector<float>* inv_std) {
  const std::int64_t n = y.dim(0);
  const auto [channels, plane] = channel_layout(y);
  if (inv_std) inv_std->assign(static_cast<std::size_t>(channels), 0.0f);
  const double count = static_cast<double>(n * plane);
  float* data = y.data().data();
  for (std::int64_t k = 0; k < channels; ++k) {
    double sum = 0.0;
    for (std::int64_t b = 0; b < n; ++b)
      for (std::int64_t i = 0; i < plane; ++i) sum += data[(b * channels + k) * plane + i];
    const double mean = sum / count;
    double sq = 0.0;
    for (std::int64_t b = 0; b < n; ++b)
      for (std::int64_t i = 0; i < plane; ++i) {
        const double d = data[(b * channels + k) * plane + i] - mean;
        sq += d * d;
      }
    const double inv = 1.0 / std::sqrt(sq / count + kNormEpsilon);
    for (std::int64_t b = 0; b < n; ++b)
      for (std::int64_t i = 0; i < plane; ++i) {
        float& v = data[(b * channels + k) * plane + i];
        v = static_cast<float>((v - mean) * inv);
      }
    if (inv_std) (*inv_std)[static_cast<std::size_t>(k)] = static_cast<float>(inv);
  }
}

void batchnorm_backward(const Tensor& yhat, std::span<const float> inv_std, Tensor& dy) {
  if (yhat.size() != dy.size()) throw ShapeError("normalization gradient and output lengths differ");
  const std::int64_t n = yhat.dim(0);
  const auto [channels, plane] = channel_layout(yhat);
  if (static_cast<std::int64_t>(inv_std.size()) != channels) throw ShapeError("normalization scale count differs");
  const double count = static_cast<double>(n * plane);
  const float* y = yhat.data().data();
  float* d = dy.data().data();
  for (std::int64_t k = 0; k < channels; ++k) {
    double sum_d = 0.0;
    double sum_dy = 0.0;
    for (std::int64_t b = 0; b < n; ++b)
      for (std::int64_t i = 0; i < plane; ++i) {
        const auto at = (b * channels + k) * plane + i;
        sum_d += d[at];
        sum_dy += static_cast<double>(d[at]) * y[at];
      }
    const double mean_d = sum_d / count;
    const double mean_dy = sum_dy / count;
    const double inv = inv_std[static_cast<std::size_t>(k)];
    for (std::int64_t b = 0; b < n; ++b)
      for (std::int64_t i = 0; i < plane; ++i) {
        const auto at = (b * channels + k) * plane + i;
        d[at] = static_cast<float>(inv * (d[at] - mean_d - y[at] * mean_dy));
      }
  }
}

void relu_inplace(Tensor& x) {
  for (float& v : x.data()) v = v > 0.0f ? v : 0.0f;
}

void relu_backward(const Tensor& y, Tensor& dy) {
  if (y.size() != dy.size()) throw ShapeError("ReLU gradient and output lengths differ");
  for (std::size_t i = 0; i < y.size(); ++i)
    if (!(y[i] > 0.0f)) dy[i] = 0.0f;
}

double softmax_cross_entropy(const Tensor& logits, std::span<const std::int32_t> labels, Tensor* dlogits) {
  if (logits.rank() != 2) throw ShapeError("logits must be [N][classes]");
  const std::int64_t n = logits.dim(0);
  const std::int64_t classes = logits.dim(1);
  if (static_cast<std::int64_t>(labels.size()) != n) throw ShapeError("label count differs from the batch");
  if (dlogits) *dlogits = Tensor(logits.shape());
  double total = 0.0;
  std::vector<double> prob(static_cast<std::size_t>(classes));
  for (std::int64_t b = 0; b < n; ++b) {
    const float* z = logits.data().data() + b * classes;
    const std::int32_t label = labels[static_cast<std::size_t>(b)];
    if (label < 0 || label >= classes) throw ShapeError("label out of range");
    double zmax = z[0];
    for (std::int64_t c = 1; c < classes; ++c) zmax = std::max(zmax, static_cast<double>(z[c]));
    double sum = 0.0;
    for (std::int64_t c = 0; c < classes; ++c) {
      prob[static_cast<std::size_t>(c)] = std::exp(static_cast<double>(z[c]) - zmax);
      sum += prob[static_cast<std::size_t>(c)];
    }
    total += std::log(sum) + zmax - z[label];
    if (dlogits) {
      float* d = dlogits->data().data() + b * classes;
      for (std::int64_t c = 0; c < classes; ++c) {
        const double p = prob[static_cast<std::size_t>(c)] / sum;
        d[c] = static_cast<float>((p - (c == label ? 1.0 : 0.0)) / static_cast<double>(n));
      }
    }
  }
  return total / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// ReferenceNet

ReferenceNet::ReferenceNet(Network net) : net_(std::move(net)) {
  net_.validate();
  if (net_.layers.back().kind != LayerKind::Fc) throw ConfigError("the last layer must be fully connected");
  offsets_ = net_.weight_offsets();
  total_ = net_.total_weights();
}

Tensor ReferenceNet::forward(const Tensor& x, std::span<const float> weights, Trace* trace) const {
  if (static_cast<std::int64_t>(weights.size()) != total_) throw ShapeError("weight vector has the wrong length");
  if (trace) *trace = Trace{};
  Tensor cur = x;
  for (std::size_t i = 0; i < net_.layers.size(); ++i) {
    const auto& layer = net_.layers[i];
    Tensor y;
    std::vector<std::int32_t> argmax;
    Tensor normalized;
    std::vector<float> inv_std;
    if (layer.kind == LayerKind::Pool) {
      y = maxpool_forward(layer, cur, trace ? &argmax : nullptr);
    } else {
      y = conv_forward(layer, cur,
                       weights.subspan(static_cast<std::size_t>(offsets_[i]), static_cast<std::size_t>(layer.weight_count())));
      if (layer.norm) {
        batchnorm_forward(y, &inv_std);
        if (trace) normalized = y;
      }
      if (layer.relu) relu_inplace(y);
    }
    if (trace) {
      trace->inputs.push_back(std::move(cur));
      trace->outputs.push_back(y);
      trace->argmax.push_back(std::move(argmax));
      trace->normalized.push_back(std::move(normalized));
      trace->inv_std.push_back(std::move(inv_std));
    }
    cur = std::move(y);
  }
  return cur;
}

double ReferenceNet::loss_and_grad(const Tensor& x, std::span<const std::int32_t> labels,
                                   std::span<const float> weights, std::span<float> grad, Trace* trace) const {
  if (static_cast<std::int64_t>(grad.size()) != total_) throw ShapeError("gradient vector has the wrong length");
  Trace local;
  Trace& tr = trace ? *trace : local;
  const Tensor logits = forward(x, weights, &tr);
  Tensor dy;
  const double loss = softmax_cross_entropy(logits, labels, &dy);
  for (std::size_t i = net_.layers.size(); i-- > 0;) {
    const auto& layer = net_.layers[i];
    if (layer.kind == LayerKind::Pool) {
      dy = maxpool_backward(dy, tr.argmax[i], tr.inputs[i].shape());
      continue;
    }
    if (layer.relu) relu_backward(tr.outputs[i], dy);
    if (layer.norm) batchnorm_backward(tr.normalized[i], tr.inv_std[i], dy);
    const auto off = static_cast<std::size_t>(offsets_[i]);
    const auto count = static_cast<std::size_t>(layer.weight_count());
    const Tensor dw = conv_weight_grad(layer, tr.inputs[i], dy);
    std::copy(dw.data().begin(), dw.data().end(), grad.begin() + static_cast<std::ptrdiff_t>(off));
    if (i > 0) dy = conv_backward(layer, dy, weights.subspan(off, count));
  }
  return loss;
}

namespace {

std::int32_t argmax_row(const float* z, std::int64_t classes) {
  std::int64_t best = 0;
  for (std::int64_t c = 1; c < classes; ++c)
    if (z[c] > z[best]) best = c;
  return static_cast<std::int32_t>(best);
}

}  // namespace

std::vector<std::int32_t> ReferenceNet::predict(const Tensor& x, std::span<const float> weights) const {
  const Tensor logits = forward(x, weights);
  const std::int64_t classes = logits.dim(1);
  std::vector<std::int32_t> out(static_cast<std::size_t>(logits.dim(0)));
  for (std::size_t b = 0; b < out.size(); ++b)
    out[b] = argmax_row(logits.data().data() + static_cast<std::int64_t>(b) * classes, classes);
  return out;
}

double ReferenceNet::accuracy(const Dataset& data, std::span<const float> weights, std::int64_t batch) const {
  std::int64_t correct = 0;
  std::vector<std::int64_t> idx;
  for (std::int64_t start = 0; start < data.size(); start += batch) {
    const std::int64_t end = std::min(data.size(), start + batch);
    idx.resize(static_cast<std::size_t>(end - start));
    std::iota(idx.begin(), idx.end(), start);
    const auto pred = predict(data.gather(idx), weights);
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == data.labels[static_cast<std::size_t>(idx[i])];
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

// ---------------------------------------------------------------------------
// Training loop

std::size_t MaskSnapshot::nnz() const {
  std::size_t total = 0;
  for (const auto& l : layers) total += l.nnz();
  return total;
}

MaskSnapshot snapshot_masks(const Network& net, const TrainState& state) {
  MaskSnapshot snap;
  snap.iteration = state.iteration();
  const auto offsets = net.weight_offsets();
  std::vector<float> acc(static_cast<std::size_t>(state.total_weights()), 0.0f);
  for (const auto& e : state.tracked_entries())
    // A tracked weight whose accumulated sum cancelled to zero stays in the
    // mask as the smallest representable magnitude.
    acc[e.index] = e.acc != 0.0f ? e.acc : std::numeric_limits<float>::denorm_min();
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto& l = net.layers[i];
    if (!l.has_weights()) continue;
    const auto begin = acc.begin() + offsets[i];
    std::vector<float> values(begin, begin + l.weight_count());
    if (l.kind == LayerKind::Fc)
      snap.layers.push_back(CsbTensor::encode(Tensor({l.K, l.C}, std::move(values)), {1, 1}));
    else
      snap.layers.push_back(CsbTensor::encode(Tensor({l.K, l.C, l.R, l.S}, std::move(values)),
                                              {static_cast<std::uint32_t>(l.R), static_cast<std::uint32_t>(l.S)}));
  }
  return snap;
}

BlockShape activation_block(std::int64_t height, std::int64_t width) {
  return {static_cast<std::uint32_t>(std::min<std::int64_t>(height, 8)),
          static_cast<std::uint32_t>(std::min<std::int64_t>(width, 8))};
}

namespace {

void check_data(const Network& net, const Dataset& d, const char* what) {
  const auto& first = net.layers.front();
  if (d.channels != first.C || d.height != first.in_height() || d.width != first.in_width())
    throw ConfigError(std::string(what) + " images do not match the network input");
  if (d.classes != net.layers.back().K) throw ConfigError(std::string(what) + " class count differs from the network");
  if (d.size() < net.batch()) throw ConfigError(std::string(what) + " set is smaller than one minibatch");
}

// Sets flush-to-zero and denormals-are-zero for the lifetime of the guard;
// the decayed initial weights otherwise drive products into the slow
// subnormal range.
class FlushDenormals {
 public:
#if defined(__SSE2__)
  FlushDenormals() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040u); }
  ~FlushDenormals() { _mm_setcsr(saved_); }

 private:
  unsigned saved_;
#endif
};

}  // namespace

TrainingResult run_training(const TrainingConfig& config, const std::function<void(const EpochRecord&)>& progress) {
  const Network& net = config.network;
  ReferenceNet model(net);
  if (config.epochs <= 0) throw ConfigError("epoch count must be positive");
  const Dataset train =
      config.train_data ? *config.train_data : make_shapes_dataset(config.train_samples, config.data_seed, net.layers.front().in_height());
  const Dataset val = config.val_data ? *config.val_data
                                      : make_shapes_dataset(config.val_samples, config.data_seed + 1, net.layers.front().in_height());
  check_data(net, train, "training");
  check_data(net, val, "validation");

  const FlushDenormals flush;
  TrainingResult result;
  result.state.emplace(config.sparse, layer_inits(net));
  TrainState& state = *result.state;
  const auto& wr = state.recompute();
  const std::int64_t total = state.total_weights();

  std::vector<float> scaffold(static_cast<std::size_t>(total));
  std::vector<std::span<float>> layer_scaffold;
  for (std::size_t l = 0; l < wr.size(); ++l) {
    layer_scaffold.push_back(
        std::span<float>(scaffold).subspan(static_cast<std::size_t>(state.layer_offset(l)), static_cast<std::size_t>(wr[l].size())));
    wr[l].fill(0, layer_scaffold.back());
  }
  std::vector<float> weights(scaffold.size());
  std::vector<float> grad(scaffold.size());
  auto compose = [&] {
    std::copy(scaffold.begin(), scaffold.end(), weights.begin());
    state.add_tracked(weights);
  };

  const std::int64_t batch = net.batch();
  const std::int64_t steps = train.size() / batch;
  std::mt19937_64 rng(mix64(config.sparse.seed ^ 0x5ca1ab1eull));
  std::vector<std::int64_t> order(static_cast<std::size_t>(train.size()));
  std::iota(order.begin(), order.end(), 0);
  ReferenceNet::Trace trace;

  for (std::int64_t epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(i) - 1))]);
    double loss_sum = 0.0;
    std::int64_t correct = 0;
    for (std::int64_t s = 0; s < steps; ++s) {
      const std::span<const std::int64_t> idx(order.data() + s * batch, static_cast<std::size_t>(batch));
      const Tensor x = train.gather(idx);
      const auto labels = train.gather_labels(idx);
      compose();
      const double loss = model.loss_and_grad(x, labels, weights, grad, &trace);
      if (!std::isfinite(loss))
        throw DivergenceError("loss became non-finite at iteration " + std::to_string(state.iteration()) +
                              " (learning rate " + std::to_string(config.sparse.eta) + ")");
      const Tensor& logits = trace.outputs.back();
      for (std::int64_t b = 0; b < batch; ++b)
        correct += argmax_row(logits.data().data() + b * logits.dim(1), logits.dim(1)) == labels[static_cast<std::size_t>(b)];
      loss_sum += loss;

      const std::int64_t t = state.iteration();
      const StepReport report = state.step(grad);
      for (std::size_t l = 0; l < wr.size(); ++l) wr[l].advance(t, layer_scaffold[l]);
      result.iterations.push_back({report.iteration, loss, state.density(), report.threshold, report.inserted,
                                   report.evicted, report.overlap});
      if (config.snapshot_every > 0 && state.iteration() % config.snapshot_every == 0)
        result.snapshots.push_back(snapshot_masks(net, state));
    }
    compose();
    EpochRecord rec;
    rec.epoch = epoch;
    rec.iteration = state.iteration();
    rec.train_loss = loss_sum / static_cast<double>(steps);
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(steps * batch);
    rec.val_accuracy = model.accuracy(val, weights, batch);
    rec.density = state.density();
    result.epochs.push_back(rec);
    if (progress) progress(rec);
  }

  if (result.snapshots.empty() || result.snapshots.back().iteration != state.iteration())
    result.snapshots.push_back(snapshot_masks(net, state));

  compose();
  std::vector<std::int64_t> first(static_cast<std::size_t>(batch));
  std::iota(first.begin(), first.end(), 0);
  model.forward(val.gather(first), weights, &trace);
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto& l = net.layers[i];
    if (!l.has_weights()) continue;
    const Tensor& in = trace.inputs[i];
    const std::int64_t H = l.kind == LayerKind::Fc ? 1 : l.in_height();
    const std::int64_t W = l.kind == LayerKind::Fc ? 1 : l.in_width();
    Tensor shaped({batch, l.C, H, W}, in.storage());
    result.activation_density.push_back(static_cast<double>(shaped.count_nonzero()) / static_cast<double>(shaped.size()));
    result.activations.push_back(CsbTensor::encode(shaped, activation_block(H, W)));
  }
  return result;
}

}  // namespace sta
