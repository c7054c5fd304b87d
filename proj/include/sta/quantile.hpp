#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace sta {

// Multiplicative streaming quantile estimator (DUMIQUE).
//
// Each sample moves the estimate up by a factor (1 + rate * q) when it lies
// above the estimate and down by (1 - rate * (1 - q)) otherwise, so the
// estimate stays positive and settles where a fraction q of the stream lies
// below it. The estimate is the keep/discard threshold for gradient tracking.
class QuantileEstimator {
 public:
  static constexpr double kInitialEstimate = 1e-6;
  static constexpr double kRate = 1e-3;

  // q must lie in (0, 1); rate in (0, 1); initial > 0.
  explicit QuantileEstimator(double q, double rate = kRate, double initial = kInitialEstimate);

  // Estimator whose quantile keeps `target_density` of the stream above it.
  static QuantileEstimator for_density(double target_density);

  // Rejects negative samples with std::invalid_argument. Zero goes down.
  void update(double delta);

  // Treats the mean of four samples as one sample.
  void update4(std::span<const double, 4> deltas);

  double threshold() const { return estimate_; }
  double quantile() const { return q_; }
  double rate() const { return rate_; }
  std::uint64_t updates() const { return updates_; }

  // Rebuilds an estimator from checkpointed state.
  static QuantileEstimator restore(double q, double rate, double estimate, std::uint64_t updates);

  bool operator==(const QuantileEstimator&) const = default;

 private:
  double q_;
  double rate_;
  double up_;
  double down_;
  double estimate_;
  std::uint64_t updates_ = 0;
};

// Mean used by update4, exposed so callers can reproduce its rounding.
inline double mean4(std::span<const double, 4> d) { return ((d[0] + d[1]) + (d[2] + d[3])) / 4.0; }

}  // namespace sta
