#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "sta/csb.hpp"
#include "sta/dataset.hpp"
#include "sta/error.hpp"
#include "sta/refnet.hpp"

using namespace sta;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<float> n(0.0f, 1.0f);
  for (auto& v : t.storage()) v = n(rng);
  return t;
}

std::vector<float> random_vector(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<float> d(0.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

// Naive loop nest over the output, independent of the library's indexing,
// accumulated and returned in double precision.
std::vector<double> naive_forward(const LayerShape& l, const Tensor& x, const std::vector<float>& w) {
  std::vector<double> y(static_cast<std::size_t>(x.dim(0) * l.K * l.P * l.Q));
  const auto H = l.in_height(), W = l.in_width();
  for (std::int64_t n = 0; n < x.dim(0); ++n)
    for (std::int64_t k = 0; k < l.K; ++k)
      for (std::int64_t p = 0; p < l.P; ++p)
        for (std::int64_t q = 0; q < l.Q; ++q) {
          double acc = 0;
          for (std::int64_t c = 0; c < l.C; ++c)
            for (std::int64_t r = 0; r < l.R; ++r)
              for (std::int64_t s = 0; s < l.S; ++s) {
                const auto h = p * l.stride + r - l.pad, ww = q * l.stride + s - l.pad;
                if (h < 0 || h >= H || ww < 0 || ww >= W) continue;
                acc += double(w[((k * l.C + c) * l.R + r) * l.S + s]) * x.at({n, c, h, ww});
              }
          y[static_cast<std::size_t>(((n * l.K + k) * l.P + p) * l.Q + q)] = acc;
        }
  return y;
}

double dot(const std::vector<double>& a, const Tensor& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += double(a[i]) * b[i];
  return s;
}

// Relative comparison with an absolute floor.
bool close(double got, double want, double rel = 1e-3, double abs_floor = 1e-6) {
  return std::fabs(got - want) <= rel * std::max(std::fabs(want), std::fabs(got)) + abs_floor;
}

std::vector<LayerShape> tiny_layers() {
  return {LayerShape::conv("s1", 2, 2, 3, 3, 3, 4, 4),
          LayerShape::conv("pad", 2, 3, 2, 3, 3, 5, 5, 1, 1),
          LayerShape::conv("s2", 1, 2, 2, 4, 4, 3, 3, 2, 1),
          LayerShape::conv("s2p0", 2, 1, 2, 3, 3, 2, 2, 2, 0),
          LayerShape::conv("rect", 1, 2, 2, 2, 3, 3, 2)};
}

}  // namespace

TEST_CASE("identity and zero kernels") {
  std::mt19937_64 rng(1);
  const auto l = LayerShape::conv("id", 2, 1, 1, 1, 1, 5, 5);
  const Tensor x = random_tensor({2, 1, 5, 5}, rng);
  const std::vector<float> one{1.0f}, zero{0.0f};
  CHECK(conv_forward(l, x, one) == x);
  CHECK(conv_backward(l, x, one) == x);
  const Tensor y0 = conv_forward(l, x, zero);
  CHECK(y0.count_nonzero() == 0);
  CHECK(conv_weight_grad(l, x, Tensor({2, 1, 5, 5})).count_nonzero() == 0);
}

TEST_CASE("forward matches the naive loop nest") {
  std::mt19937_64 rng(2);
  for (const auto& l : tiny_layers()) {
    CAPTURE(l.name);
    const Tensor x = random_tensor({l.N, l.C, l.in_height(), l.in_width()}, rng);
    const auto w = random_vector(l.weight_count(), rng);
    const Tensor y = conv_forward(l, x, w);
    const auto ref = naive_forward(l, x, w);
    REQUIRE(y.size() == ref.size());
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(close(y[i], ref[i], 1e-5, 1e-5));
  }
}

TEST_CASE("backward and weight gradient match finite differences") {
  // Scalarized loss L = <conv(x, w), g>, differentiated numerically in x
  // and in w.
  std::mt19937_64 rng(3);
  const float h = 3e-4f;
  for (const auto& l : tiny_layers()) {
    CAPTURE(l.name);
    Tensor x = random_tensor({l.N, l.C, l.in_height(), l.in_width()}, rng);
    auto w = random_vector(l.weight_count(), rng);
    const Tensor g = random_tensor({l.N, l.K, l.P, l.Q}, rng);
    const Tensor dx = conv_backward(l, g, w);
    const Tensor dw = conv_weight_grad(l, x, g);
    REQUIRE(dx.shape() == x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const float keep = x[i];
      x[i] = keep + h;
      const double up = dot(naive_forward(l, x, w), g);
      const double step = double(x[i]);
      x[i] = keep - h;
      const double down = dot(naive_forward(l, x, w), g);
      x[i] = keep;
      CHECK(close(dx[i], (up - down) / (step - double(keep - h))));
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
      const float keep = w[i];
      w[i] = keep + h;
      const double up = dot(naive_forward(l, x, w), g);
      const double step = double(w[i]);
      w[i] = keep - h;
      const double down = dot(naive_forward(l, x, w), g);
      w[i] = keep;
      CHECK(close(dw[i], (up - down) / (step - double(keep - h))));
    }
  }
}

TEST_CASE("stride-one backward is a full convolution with rotated filters") {
  std::mt19937_64 rng(4);
  const auto l = LayerShape::conv("rot", 1, 2, 3, 3, 3, 4, 4, 1, 1);
  const Tensor dy = random_tensor({1, 3, 4, 4}, rng);
  const Tensor wt = random_tensor({3, 2, 3, 3}, rng);
  const auto csb = CsbTensor::encode(wt, {3, 3});
  const Tensor dx = conv_backward(l, dy, wt.storage());
  // dx[c][h][w] = sum_k sum_r sum_s dy[k][h + r - (R - 1 - pad)][...] * rot(w)[k][c][r][s]
  const std::int64_t off = l.R - 1 - l.pad;
  for (std::int64_t c = 0; c < 2; ++c)
    for (std::int64_t hh = 0; hh < 4; ++hh)
      for (std::int64_t ww = 0; ww < 4; ++ww) {
        double acc = 0;
        for (std::int64_t k = 0; k < 3; ++k) {
          const std::vector<std::int64_t> coord{k, c, 0, 0};
          const Tensor rot = csb.fetch_block(coord, BlockTransform::Rotate180);
          for (std::int64_t r = 0; r < 3; ++r)
            for (std::int64_t s = 0; s < 3; ++s) {
              const auto p = hh + r - off, q = ww + s - off;
              if (p < 0 || p >= 4 || q < 0 || q >= 4) continue;
              acc += double(dy.at({0, k, p, q})) * rot.at({r, s});
            }
        }
        CHECK(close(dx.at({0, c, hh, ww}), acc, 1e-5, 1e-5));
      }
}

TEST_CASE("fc backward is the transposed matrix product") {
  std::mt19937_64 rng(5);
  const auto l = LayerShape::fc("fc", 3, 5, 4);
  const Tensor dy = random_tensor({3, 4}, rng);
  const auto w = random_vector(20, rng);
  const Tensor dx = conv_backward(l, dy, w);
  for (std::int64_t n = 0; n < 3; ++n)
    for (std::int64_t c = 0; c < 5; ++c) {
      double acc = 0;
      for (std::int64_t k = 0; k < 4; ++k) acc += double(w[k * 5 + c]) * dy[n * 4 + k];
      CHECK(close(dx[n * 5 + c], acc, 1e-5, 1e-6));
    }
}

TEST_CASE("single-pixel weight gradient is an outer product") {
  const auto l = LayerShape::fc("fc", 1, 2, 3);
  const Tensor x({1, 2}, std::vector<float>{2, -1});
  const Tensor dy({1, 3}, std::vector<float>{1, 0.5f, -3});
  const Tensor dw = conv_weight_grad(l, x, dy);
  const std::vector<float> want{2, -1, 1, -0.5f, -6, 3};
  CHECK(dw.storage() == want);
}

TEST_CASE("shape mismatches are rejected") {
  const auto l = LayerShape::conv("c", 1, 2, 2, 3, 3, 4, 4);
  const std::vector<float> w(l.weight_count());
  CHECK_THROWS_AS(conv_forward(l, Tensor({1, 3, 6, 6}), w), ShapeError);
  CHECK_THROWS_AS(conv_forward(l, Tensor({1, 2, 6, 6}), std::vector<float>(3)), ShapeError);
  CHECK_THROWS_AS(conv_backward(l, Tensor({1, 2, 5, 5}), w), ShapeError);
}

TEST_CASE("whole-network gradient matches finite differences") {
  // toy-small has normalization, ReLU, pooling and an fc head; check a
  // sample of weights with a central difference on the double-valued loss.
  const Network net = preset_network("toy-small", 4);
  const ReferenceNet ref(net);
  const Dataset data = make_shapes_dataset(4, 7, 8);
  const std::vector<std::int64_t> idx{0, 1, 2, 3};
  const Tensor x = data.gather(idx);
  const auto labels = data.gather_labels(idx);
  std::mt19937_64 rng(6);
  auto w = random_vector(static_cast<std::size_t>(ref.total_weights()), rng);
  for (auto& v : w) v *= 0.3f;
  std::vector<float> grad(w.size());
  ref.loss_and_grad(x, labels, w, grad);
  std::vector<float> dummy(w.size());
  int checked = 0, agree = 0;
  for (std::size_t i = 0; i < w.size(); i += 7) {
    if (std::fabs(grad[i]) < 1e-3f) continue;
    const float keep = w[i];
    const float h = 3e-4f;
    w[i] = keep + h;
    const double up = ref.loss_and_grad(x, labels, w, dummy);
    w[i] = keep - h;
    const double down = ref.loss_and_grad(x, labels, w, dummy);
    w[i] = keep;
    ++checked;
    agree += close(grad[i], (up - down) / (2.0 * h), 2e-2, 1e-4);
  }
  REQUIRE(checked > 20);
  // ReLU and max-pool kinks can flip inside a finite step for a few weights.
  CHECK(agree >= checked * 95 / 100);
}

TEST_CASE("loss on a fixed batch does not rise over the first steps") {
  const Network net = preset_network("toy-small", 16);
  const ReferenceNet ref(net);
  const Dataset data = make_shapes_dataset(16, 3, 8);
  std::vector<std::int64_t> idx(16);
  for (std::int64_t i = 0; i < 16; ++i) idx[i] = i;
  const Tensor x = data.gather(idx);
  const auto labels = data.gather_labels(idx);
  std::vector<float> w(static_cast<std::size_t>(ref.total_weights()));
  const auto inits = layer_inits(net);
  std::size_t at = 0;
  for (std::size_t l = 0; l < inits.size(); ++l) {
    WeightRecompute wr(l + 1, inits[l].size, inits[l].scale);
    wr.fill(0, std::span<float>(w.data() + at, inits[l].size));
    at += inits[l].size;
  }
  std::vector<float> grad(w.size());
  double prev = ref.loss_and_grad(x, labels, w, grad);
  for (int step = 0; step < 10; ++step) {
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= 1e-3f * grad[i];
    const double loss = ref.loss_and_grad(x, labels, w, grad);
    CHECK(loss <= prev + 1e-9);
    prev = loss;
  }
}

TEST_CASE("softmax cross entropy of uniform logits") {
  const Tensor logits({2, 4});
  const std::vector<std::int32_t> labels{1, 3};
  Tensor d;
  CHECK(softmax_cross_entropy(logits, labels, &d) == doctest::Approx(std::log(4.0)));
  CHECK(d[1] == doctest::Approx((0.25 - 1.0) / 2));
  CHECK(d[0] == doctest::Approx(0.25 / 2));
}

TEST_CASE("synthetic dataset is deterministic and balanced") {
  const Dataset a = make_shapes_dataset(600, 9), b = make_shapes_dataset(600, 9);
  CHECK(a.pixels == b.pixels);
  CHECK(a.labels == b.labels);
  CHECK(a.classes == static_cast<std::int64_t>(shape_class_names().size()));
  std::vector<int> count(a.classes);
  for (auto l : a.labels) ++count[l];
  for (int c : count) CHECK(c > 50);
}
