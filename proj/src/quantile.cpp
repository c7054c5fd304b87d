#include "sta/quantile.hpp"

#include <stdexcept>
#include <string>

#include "sta/error.hpp"

namespace sta {

QuantileEstimator::QuantileEstimator(double q, double rate, double initial)
    : q_(q), rate_(rate), up_(1.0 + rate * q), down_(1.0 - rate * (1.0 - q)), estimate_(initial) {
  if (!(q > 0.0 && q < 1.0)) throw ConfigError("quantile must lie in (0, 1), got " + std::to_string(q));
  if (!(rate > 0.0 && rate < 1.0)) throw ConfigError("adjustment rate must lie in (0, 1)");
  if (!(initial > 0.0)) throw ConfigError("initial quantile estimate must be positive");
}

QuantileEstimator QuantileEstimator::for_density(double target_density) {
  return QuantileEstimator(1.0 - target_density);
}

void QuantileEstimator::update(double delta) {
  if (!(delta >= 0.0)) throw std::invalid_argument("quantile samples must be non-negative magnitudes");
  estimate_ *= estimate_ < delta ? up_ : down_;
  ++updates_;
}

void QuantileEstimator::update4(std::span<const double, 4> deltas) {
  for (double d : deltas)
    if (!(d >= 0.0)) throw std::invalid_argument("quantile samples must be non-negative magnitudes");
  update(mean4(deltas));
}

QuantileEstimator QuantileEstimator::restore(double q, double rate, double estimate, std::uint64_t updates) {
  QuantileEstimator e(q, rate, estimate);
  e.updates_ = updates;
  return e;
}

}  // namespace sta
