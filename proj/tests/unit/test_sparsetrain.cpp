#include <doctest.h>

#include <cmath>
#include <random>
#include <set>
#include <sstream>
#include <vector>

#include "sta/error.hpp"
#include "sta/sparsetrain.hpp"

using namespace sta;

TEST_CASE("xorshift32 matches the reference recurrence") {
  // Marsaglia's published first outputs for seed 2463534242.
  std::uint32_t x = 2463534242u;
  x = xorshift32(x);
  CHECK(x == 723471715u);
  x = xorshift32(x);
  CHECK(x == 2497366906u);
  static_assert(xorshift32(1) == 270369u);
  CHECK(xorshift32(0) == 0);
}

TEST_CASE("recompute is a pure function of seed and index") {
  const WeightRecompute a(7, 1000, 0.5f), b(7, 1000, 0.5f), c(8, 1000, 0.5f);
  int differ = 0;
  for (std::int64_t i = 0; i < 1000; ++i) {
    CHECK(a.value(i, 0) == b.value(i, 0));
    CHECK(a.value(i, 37) == a.value(i, 37));
    differ += a.value(i, 0) != c.value(i, 0);
  }
  CHECK(differ > 990);
}

TEST_CASE("decay is exact per step and zero from the cutoff") {
  const WeightRecompute wr(3, 200, 1.0f, 0.9f, 1000);
  for (std::int64_t i = 0; i < 200; ++i) {
    for (std::int64_t t : {0, 1, 5, 100, 998}) {
      const float next = wr.value(i, t + 1);
      const float expect = 0.9f * wr.value(i, t);
      CHECK(next == (std::fabs(expect) < std::numeric_limits<float>::min() ? 0.0f : expect));
    }
    CHECK(wr.value(i, 1000) == 0.0f);
    CHECK(wr.value(i, 5000) == 0.0f);
  }
  std::vector<float> filled(200), streamed(200);
  wr.fill(0, streamed);
  for (std::int64_t t = 0; t < 60; ++t) wr.advance(t, streamed);
  wr.fill(60, filled);
  CHECK(filled == streamed);
  std::vector<float> wrong(3);
  CHECK_THROWS_AS(wr.fill(0, wrong), ShapeError);
}

TEST_CASE("initial values have the moments of a sum of three uniforms") {
  // Each uniform on [-1, 1) has variance 1/3, so the sum has variance 1 and
  // the initial values have standard deviation equal to the scale.
  const float scale = 0.25f;
  const WeightRecompute wr(42, 100000, scale);
  double sum = 0, sq = 0;
  for (std::int64_t i = 0; i < wr.size(); ++i) {
    const double v = wr.initial(i);
    CHECK(std::fabs(v) <= 3.0 * scale);
    sum += v;
    sq += v * v;
  }
  const double n = static_cast<double>(wr.size());
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::fabs(mean) <= 0.01 * scale);
  CHECK(var == doctest::Approx(scale * scale).epsilon(0.10));
}

TEST_CASE("init scales follow Kaiming for conv and Xavier for fc") {
  CHECK(init_scale(LayerShape::conv("c", 1, 8, 4, 3, 3, 4, 4)) == doctest::Approx(std::sqrt(2.0 / 72)));
  CHECK(init_scale(LayerShape::fc("f", 1, 100, 10)) == doctest::Approx(std::sqrt(2.0 / 110)));
}

TEST_CASE("sort oracle keeps the largest magnitudes with low-index ties") {
  const std::vector<float> m{3, 1, 2};
  CHECK(select_sort_oracle(m, 2) == std::vector<std::uint32_t>{0, 2});
  const std::vector<float> eq(5, 1.0f);
  CHECK(select_sort_oracle(eq, 1) == std::vector<std::uint32_t>{0});
  CHECK(select_sort_oracle(eq, 3) == std::vector<std::uint32_t>{0, 1, 2});

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<float> u(0, 1);
  std::vector<float> v(10000);
  for (auto& x : v) x = u(rng);
  std::vector<std::uint32_t> order(v.size());
  for (std::uint32_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] > v[b] || (v[a] == v[b] && a < b); });
  std::vector<std::uint32_t> top(order.begin(), order.begin() + 700);
  std::sort(top.begin(), top.end());
  CHECK(select_sort_oracle(v, 700) == top);
}

TEST_CASE("tracked set keeps its minimum available") {
  TrackedSet s;
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<float> u(-1, 1);
  std::vector<float> ref(500);
  for (std::uint32_t i = 0; i < 500; ++i) {
    ref[i] = u(rng);
    s.insert(i, ref[i]);
  }
  for (int k = 0; k < 300; ++k) {
    const auto i = static_cast<std::uint32_t>(rng() % 500);
    if (!s.contains(i)) continue;
    ref[i] = u(rng);
    s.assign(i, ref[i]);
  }
  CHECK(s.find(7).value() == ref[7]);
  CHECK_FALSE(s.find(900).has_value());
  float last = -1;
  std::uint32_t last_index = 0;
  while (!s.empty()) {
    const auto e = s.pop_min();
    const float mag = std::fabs(e.acc);
    CHECK(mag >= last);
    if (mag == last) CHECK(e.index > last_index);
    CHECK(e.acc == ref[e.index]);
    last = mag;
    last_index = e.index;
  }
}

namespace {

std::vector<LayerInit> two_layers() { return {{300, 0.1f}, {200, 0.2f}}; }

}  // namespace

TEST_CASE("gradients below the threshold leave the tracked set empty") {
  SparseTrainConfig cfg;
  TrainState s(cfg, two_layers());
  const std::vector<float> g(500, 0.0f);
  s.step(g);
  CHECK(s.tracked_count() == 0);
  CHECK(s.iteration() == 1);
  const std::vector<float> wrong(10, 0.0f);
  CHECK_THROWS_AS(s.step(wrong), ShapeError);
}

TEST_CASE("a single large gradient is tracked with its scaled update") {
  SparseTrainConfig cfg;
  cfg.eta = 0.1f;
  TrainState s(cfg, two_layers());
  std::vector<float> g(500, 0.0f);
  g[123] = 2.0f;
  const auto r = s.step(g);
  CHECK(r.inserted == 1);
  CHECK(s.tracked_count() == 1);
  CHECK(s.accumulated(123).value() == doctest::Approx(-0.2f));
  CHECK(s.effective_weight(123) == s.recompute()[0].value(123, 1) + s.accumulated(123).value());
}

TEST_CASE("effective weights after the cutoff are the accumulated gradients") {
  SparseTrainConfig cfg;
  cfg.cutoff = 5;
  cfg.target_density = 0.1;
  TrainState s(cfg, two_layers());
  std::mt19937_64 rng(1);
  std::normal_distribution<float> n(0, 1);
  std::vector<float> g(500);
  for (int t = 0; t < 8; ++t) {
    for (auto& x : g) x = n(rng);
    s.step(g);
  }
  std::vector<float> w(500);
  s.materialize(w);
  std::size_t zeros = 0;
  for (std::int64_t i = 0; i < 500; ++i) {
    const auto acc = s.accumulated(i);
    CHECK(w[i] == acc.value_or(0.0f));
    CHECK(s.effective_weight(i) == w[i]);
    zeros += w[i] == 0.0f;
  }
  CHECK(static_cast<double>(zeros) / 500.0 == doctest::Approx(1.0 - s.density()));
  CHECK(s.tracked_count() <= s.capacity());
}

TEST_CASE("stationary gradients converge to the sort-oracle keep set") {
  SparseTrainConfig cfg;
  cfg.target_density = 0.2;
  cfg.oracle = true;
  TrainState s(cfg, {{2000, 0.05f}});
  std::mt19937_64 rng(9);
  std::normal_distribution<float> n(0, 1);
  std::vector<float> bias(2000), g(2000);
  for (auto& b : bias) b = 0.3f * n(rng);
  StepReport last;
  for (int t = 0; t < 300; ++t) {
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = bias[i] + n(rng);
    last = s.step(g);
    CHECK(s.density() <= 1.45 * cfg.target_density);
  }
  REQUIRE(last.overlap.has_value());
  CHECK(*last.overlap >= 0.9);
}

TEST_CASE("batched estimator feed trains comparably") {
  SparseTrainConfig cfg;
  cfg.feed = EstimatorFeed::Batched4;
  cfg.oracle = true;
  TrainState s(cfg, {{1000, 0.05f}});
  std::mt19937_64 rng(5);
  std::normal_distribution<float> n(0, 1);
  std::vector<float> g(1000);
  for (int t = 0; t < 100; ++t) {
    for (auto& x : g) x = n(rng);
    s.step(g);
  }
  CHECK(s.estimator().updates() == 100 * 250);
  CHECK(s.density() <= 1.45 * cfg.target_density);
}

TEST_CASE("dense mode tracks every weight") {
  TrainState s(SparseTrainConfig::dense(0.1f, 1), two_layers());
  std::vector<float> g(500, 1.0f);
  s.step(g);
  CHECK(s.density() == 1.0);
  CHECK(s.accumulated(499).value() == doctest::Approx(-0.1f));
}

TEST_CASE("identical inputs give identical trajectories and checkpoints") {
  auto run = [] {
    SparseTrainConfig cfg;
    cfg.seed = 77;
    TrainState s(cfg, two_layers());
    std::mt19937_64 rng(3);
    std::normal_distribution<float> n(0, 1);
    std::vector<float> g(500);
    for (int t = 0; t < 20; ++t) {
      for (auto& x : g) x = n(rng);
      s.step(g);
    }
    std::ostringstream out;
    s.save_checkpoint(out);
    return out.str();
  };
  const std::string a = run();
  CHECK(a == run());

  std::istringstream in(a);
  const TrainState back = TrainState::load_checkpoint(in);
  std::ostringstream again;
  back.save_checkpoint(again);
  CHECK(again.str() == a);
  CHECK(back.iteration() == 20);

  std::string bad = a;
  bad[0] = 'X';
  std::istringstream broken(bad);
  CHECK_THROWS_AS(TrainState::load_checkpoint(broken), FormatError);
  std::istringstream cut(a.substr(0, a.size() / 2));
  CHECK_THROWS_AS(TrainState::load_checkpoint(cut), FormatError);
}

TEST_CASE("config hash separates configurations") {
  SparseTrainConfig a, b;
  b.lambda = 0.8f;
  CHECK(TrainState(a, two_layers()).config_hash() != TrainState(b, two_layers()).config_hash());
  CHECK(TrainState(a, two_layers()).config_hash() == TrainState(a, two_layers()).config_hash());
  CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
}
