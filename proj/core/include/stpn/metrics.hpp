#pragma once

// MAE / RMSE / R^2 over observed cells, per channel and horizon slice.

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stpn/data.hpp"
#include "stpn/tensor.hpp"

namespace stpn {

struct Metric {
  double mae = 0.0;
  double rmse = 0.0;
  /// NaN when the targets have zero variance.
  double r2 = 0.0;
  std::size_t count = 0;
};

/// Scores a list of (target, prediction) pairs. Empty input gives count 0
/// and NaN scores.
Metric score(std::span<const double> target, std::span<const double> prediction);

enum class HorizonAggregation {
  step,        // the single step at each lead time
  cumulative,  // all steps up to and including the lead time
};

struct MetricsReport {
  std::string model;
  HorizonAggregation aggregation = HorizonAggregation::step;
  std::vector<std::size_t> horizons;
  std::size_t windows = 0;
  std::size_t slot_minutes = 30;
  /// [channel][horizon index]
  std::array<std::vector<Metric>, kDelayChannels> slices;
  /// All steps, per channel.
  std::array<Metric, kDelayChannels> channel_overall;
  /// All steps and both channels pooled.
  Metric overall;

  nlohmann::json to_json() const;
};

inline constexpr int kMetricsSchemaVersion = 1;

/// Collects minute-valued predictions window by window.
class MetricsAccumulator {
 public:
  MetricsAccumulator(std::size_t p, std::vector<std::size_t> horizons = {3, 6, 12},
                     HorizonAggregation aggregation = HorizonAggregation::step);

  void add(const Tensor3& prediction, const Tensor3& target, const Mask3& mask);
  MetricsReport report(std::string model) const;

 private:
  std::size_t p_;
  std::vector<std::size_t> horizons_;
  HorizonAggregation aggregation_;
  std::size_t windows_ = 0;
  // Observed (target, prediction) pairs per channel and step.
  std::array<std::vector<std::vector<double>>, kDelayChannels> target_, pred_;
};

}  // namespace stpn
