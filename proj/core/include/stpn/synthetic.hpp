#pragma once

// Seeded synthetic network with a planted departure-to-arrival propagation
// path, used for end-to-end checks where real corpora are unavailable.

#include <cstdint>
#include <optional>

#include <nlohmann/json.hpp>

#include "stpn/data.hpp"
#include "stpn/graph.hpp"

namespace stpn {

struct SyntheticOptions {
  std::uint64_t seed = 0;
  std::size_t airports = 8;
  std::size_t days = 60;
  std::size_t lag_steps = 2;
  /// Planted edge; ignored when `od_weights` is given.
  std::size_t source = 0;
  std::size_t sink = 1;
  double weight = 0.8;
  /// weights(u, v): share of u's departure delay arriving at v after the lag.
  std::optional<Matrix> od_weights;
  /// Fraction of cells masked at random.
  double mask_fraction = 0.15;
  /// Extra departure delay (minutes) while bad weather persists.
  double weather_shock = 8.0;
  /// Persistence and innovation scale of the departure delay shock.
  double ar_phi = 0.95;
  double ar_sigma = 2.0;
  double noise_sigma = 1.0;
  OperatingWindow window;
  std::int64_t first_day = 19723;  // 2024-01-01, a Monday
};

struct SyntheticData {
  std::vector<Airport> airports;
  DelayTensor delays;
  CovariateSeq covariates;
  WeatherScheme weather;
  /// Flight counts used for the O-D relations.
  Matrix flow;
  Matrix od_weights;
  nlohmann::json ground_truth;
};

SyntheticData gen_synthetic(const SyntheticOptions& options);

/// Wraps generated data as a dataset with the default split.
Dataset synthetic_dataset(const SyntheticData& data);

/// Pearson correlation of a(t) with b(t + lag) over cells observed in both.
double lagged_correlation(const DelayTensor& delays, std::size_t node_a, std::size_t channel_a,
                          std::size_t node_b, std::size_t channel_b, std::size_t lag);

}  // namespace stpn
