#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "sta/error.hpp"
#include "sta/quantile.hpp"

using namespace sta;

namespace {

std::vector<double> uniform_stream(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

double exact_quantile(std::vector<double> v, double q) {
  const auto k = static_cast<std::size_t>(q * static_cast<double>(v.size()));
  std::nth_element(v.begin(), v.begin() + k, v.end());
  return v[k];
}

}  // namespace

TEST_CASE("single updates follow the multiplicative rule") {
  QuantileEstimator up(0.8, 1e-3, 1.0);
  up.update(2.0);
  CHECK(up.threshold() == doctest::Approx(1.0008).epsilon(1e-15));
  QuantileEstimator down(0.8, 1e-3, 1.0);
  down.update(0.5);
  CHECK(down.threshold() == doctest::Approx(0.9998).epsilon(1e-15));
  // equality takes the downward branch, as does zero
  QuantileEstimator eq(0.8, 1e-3, 1.0);
  eq.update(1.0);
  CHECK(eq.threshold() < 1.0);
  eq.update(0.0);
  CHECK(eq.updates() == 2);
}

TEST_CASE("fresh estimator uses the fixed constants") {
  QuantileEstimator e(0.9);
  CHECK(e.threshold() == 1e-6);
  e.update(1.0);
  CHECK(e.threshold() == 1e-6 * (1.0 + 1e-3 * 0.9));
  CHECK(QuantileEstimator::for_density(0.2).quantile() == doctest::Approx(0.8));
}

TEST_CASE("invalid arguments") {
  QuantileEstimator e(0.5);
  CHECK_THROWS_AS(e.update(-1.0), std::invalid_argument);
  CHECK_THROWS_AS(e.update(std::nan("")), std::invalid_argument);
  const std::array<double, 4> bad{1, 1, -1, 1};
  CHECK_THROWS_AS(e.update4(bad), std::invalid_argument);
  CHECK_THROWS_AS(QuantileEstimator(0.0), ConfigError);
  CHECK_THROWS_AS(QuantileEstimator(1.0), ConfigError);
  CHECK_THROWS_AS(QuantileEstimator(0.5, 1e-3, 0.0), ConfigError);
}

TEST_CASE("estimate stays positive and moves the right way") {
  std::mt19937_64 rng(1);
  std::exponential_distribution<double> ex(3.0);
  QuantileEstimator e(0.7);
  for (int i = 0; i < 20000; ++i) {
    const double before = e.threshold();
    const double d = ex(rng);
    e.update(d);
    CHECK(e.threshold() > 0.0);
    if (d > before) CHECK(e.threshold() > before);
    else CHECK(e.threshold() < before);
  }
}

TEST_CASE("update4 equals update on the mean") {
  const std::array<double, 4> same{0.3, 0.3, 0.3, 0.3};
  const std::array<double, 4> skew{0, 0, 0, 4 * 0.3};
  QuantileEstimator a(0.6, 1e-3, 0.25), b(0.6, 1e-3, 0.25), c(0.6, 1e-3, 0.25);
  a.update4(same);
  b.update(0.3);
  c.update4(skew);
  CHECK(a == b);
  CHECK(c.threshold() == b.threshold());

  const auto s = uniform_stream(40000, 17);
  QuantileEstimator batched(0.75), manual(0.75);
  for (std::size_t i = 0; i + 4 <= s.size(); i += 4) {
    const std::array<double, 4> d{s[i], s[i + 1], s[i + 2], s[i + 3]};
    batched.update4(d);
    manual.update(mean4(d));
  }
  CHECK(batched == manual);
}

TEST_CASE("converges to the sorted quantile of a uniform stream") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto s = uniform_stream(300000, seed);
    QuantileEstimator e(0.9);
    for (double d : s) e.update(d);
    CHECK(std::fabs(e.threshold() - exact_quantile(s, 0.9)) < 0.02);
  }
}

TEST_CASE("batched feed is about as accurate as the scalar feed") {
  // update4 tracks the quantile of four-sample means, so its error is taken
  // against the sorted means while the scalar run is scored on the raw
  // stream. A small floor keeps a lucky scalar run from deciding the test.
  const auto s = uniform_stream(400000, 8);
  QuantileEstimator scalar(0.9), batched(0.9);
  std::vector<double> means;
  for (std::size_t i = 0; i < s.size(); i += 4) {
    const std::array<double, 4> d{s[i], s[i + 1], s[i + 2], s[i + 3]};
    batched.update4(d);
    means.push_back(mean4(d));
  }
  for (double d : s) scalar.update(d);
  const double err_scalar = std::fabs(scalar.threshold() - exact_quantile(s, 0.9));
  const double err_batched = std::fabs(batched.threshold() - exact_quantile(means, 0.9));
  CHECK(err_batched <= 2.0 * std::max(err_scalar, 0.005));
}

TEST_CASE("fraction of the stream below the estimate approaches q") {
  const auto s = uniform_stream(1000000, 5);
  QuantileEstimator e(0.9);
  std::size_t below = 0, counted = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i >= 100000) {
      below += s[i] < e.threshold();
      ++counted;
    }
    e.update(s[i]);
  }
  CHECK(static_cast<double>(below) / static_cast<double>(counted) == doctest::Approx(0.9).epsilon(0.03));
}

TEST_CASE("larger q ends at a larger estimate") {
  int ordered = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto s = uniform_stream(100000, 100 + seed);
    QuantileEstimator lo(0.6), hi(0.8);
    for (double d : s) {
      lo.update(d);
      hi.update(d);
    }
    ordered += hi.threshold() >= lo.threshold();
  }
  CHECK(ordered == 10);
}

TEST_CASE("restore reproduces checkpointed state") {
  QuantileEstimator e(0.8);
  for (double d : uniform_stream(1000, 3)) e.update(d);
  const auto r = QuantileEstimator::restore(e.quantile(), e.rate(), e.threshold(), e.updates());
  CHECK(r == e);
}
